"""Small dense-network toolkit: init, forward, exact backprop, Adam, Polyak averaging.

Every array is float64. Weight matrices are stored as ``(fan_out, fan_in)`` so a
layer computes ``y = W @ x + b``; batches are rows, ``Y = X @ W.T + b``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation, NumericalError

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")
EXPORT_FORMAT = "ndmath-densenet"
EXPORT_VERSION = 1


@dataclass
class DenseNet:
    layer_sizes: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in the order w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            list(self.activations),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def same_architecture(self, other: "DenseNet") -> bool:
        return (list(self.layer_sizes) == list(other.layer_sizes)
                and list(self.activations) == list(other.activations))


@dataclass
class GradientBundle:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.append(w)
            out.append(b)
        return out

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        return GradientBundle(
            [a + b for a, b in zip(self.weight_grads, other.weight_grads)],
            [a + b for a, b in zip(self.bias_grads, other.bias_grads)],
            self.input_grad,
        )


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.learning_rate, self.beta1, self.beta2, self.epsilon, self.step_count,
        )


def init_bound(fan_in: int) -> float:
    return 1.0 / math.sqrt(fan_in)


def net_init(layer_sizes, activations, rng_seed) -> DenseNet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    layer_sizes = [int(n) for n in layer_sizes]
    activations = list(activations)
    if len(layer_sizes) < 2:
        raise ConfigurationError("layer_sizes needs at least an input and an output size")
    if len(activations) != len(layer_sizes) - 1:
        raise ConfigurationError(
            f"expected {len(layer_sizes) - 1} activations, got {len(activations)}")
    if any(n < 1 for n in layer_sizes):
        raise ConfigurationError(f"layer sizes must be positive: {layer_sizes}")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {act!r}")
    if "softmax" in activations[:-1]:
        raise ConfigurationError("softmax is only supported on the output layer")

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = init_bound(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(layer_sizes, activations, weights, biases)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    if act == "identity":
        return z
    # softmax over the last axis, shifted for overflow safety
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ContractViolation(
            f"input shape {x.shape} does not match input dim {net.input_dim}")
    if not np.isfinite(x).all():
        raise ContractViolation("input contains non-finite entries")
    return x


def trace(net: DenseNet, x: np.ndarray) -> list[np.ndarray]:
    """Layer outputs ``[x, h1, ..., y]`` for a 2-D batch, without validation."""
    acts = [x]
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _activate(h @ w.T + b, act)
        acts.append(h)
    return acts


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the net on a vector or on a batch of row vectors."""
    x = _check_input(net, x)
    if x.ndim == 1:
        return trace(net, x[None, :])[-1][0]
    return trace(net, x)[-1]


def backward_from_trace(net: DenseNet, acts: list[np.ndarray], output_grad: np.ndarray) -> GradientBundle:
    """Reverse pass given a cached ``trace``; ``output_grad`` is 2-D."""
    g = output_grad
    n = net.n_layers
    wg = [None] * n
    bg = [None] * n
    for i in range(n - 1, -1, -1):
        out = acts[i + 1]
        act = net.activations[i]
        if act == "relu":
            g = g * (out > 0.0)
        elif act == "tanh":
            g = g * (1.0 - out * out)
        elif act == "softmax":
            g = out * (g - (g * out).sum(axis=1, keepdims=True))
        wg[i] = g.T @ acts[i]
        bg[i] = g.sum(axis=0)
        g = g @ net.weights[i]
    return GradientBundle(wg, bg, g)


def backward(net: DenseNet, x, output_grad) -> GradientBundle:
    """Exact gradients of ``<output_grad, forward(net, x)>``.

    For a batch, parameter gradients are summed over rows and ``input_grad``
    keeps one row per sample.
    """
    x = _check_input(net, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != x.shape[:-1] + (net.output_dim,):
        raise ContractViolation(
            f"output_grad shape {g.shape} does not match output shape "
            f"{x.shape[:-1] + (net.output_dim,)}")
    single = x.ndim == 1
    if single:
        x, g = x[None, :], g[None, :]
    grads = backward_from_trace(net, trace(net, x), g)
    if single:
        grads.input_grad = grads.input_grad[0]
    return grads


def adam_init(net: DenseNet, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    if learning_rate <= 0:
        raise ConfigurationError("learning_rate must be positive")
    params = net.parameters()
    return AdamState(
        [np.zeros_like(p) for p in params],
        [np.zeros_like(p) for p in params],
        float(learning_rate), float(beta1), float(beta2), float(epsilon), 0,
    )


def adam_step(state: AdamState, net: DenseNet, grads: GradientBundle, ascend: bool = False):
    """One bias-corrected Adam update, in place. Returns ``(net, state)``."""
    params = net.parameters()
    gparams = grads.parameters()
    if len(gparams) != len(params):
        raise ContractViolation("gradient bundle does not match the network")
    for k, (p, g) in enumerate(zip(params, gparams)):
        if p.shape != g.shape:
            raise ContractViolation(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in layer {k // 2}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    sign = 1.0 if ascend else -1.0
    for p, g, m, v in zip(params, gparams, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # epsilon is added to the bias-corrected root second moment
        p += sign * state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return net, state


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> DenseNet:
    """Polyak averaging ``target <- tau * online + (1 - tau) * target``, in place."""
    if not target.same_architecture(online):
        raise ContractViolation("soft_update needs identical architectures")
    if not 0.0 < tau <= 1.0:
        raise ContractViolation(f"tau must be in (0, 1], got {tau}")
    for pt, po in zip(target.parameters(), online.parameters()):
        pt *= 1.0 - tau
        pt += tau * po
    return target


def _fmt_array(a: np.ndarray) -> str:
    return "[" + ",".join(format(float(v), ".17g") for v in a.ravel()) + "]"


def export_net(net: DenseNet) -> str:
    """Structured-text dump: architecture header, then row-major parameter arrays."""
    header = json.dumps({
        "format": EXPORT_FORMAT,
        "version": EXPORT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activations": list(net.activations),
    }, sort_keys=True)
    weights = ",\n".join(_fmt_array(w) for w in net.weights)
    biases = ",\n".join(_fmt_array(b) for b in net.biases)
    return (header[:-1] + ',\n"weights": [\n' + weights + '\n],\n"biases": [\n' + biases + "\n]}\n")


def import_net(text: str) -> DenseNet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"network document is not valid JSON: {exc}") from exc
    return net_from_dict(doc)


def net_from_dict(doc: dict) -> DenseNet:
    if doc.get("format") != EXPORT_FORMAT:
        raise ContractViolation(f"unexpected network format {doc.get('format')!r}")
    if doc.get("version") != EXPORT_VERSION:
        raise ContractViolation(f"unsupported network format version {doc.get('version')!r}")
    sizes = [int(n) for n in doc["layer_sizes"]]
    acts = list(doc["activations"])
    if len(acts) != len(sizes) - 1:
        raise ContractViolation("activation count does not match layer count")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = np.asarray(doc["weights"][i], dtype=np.float64)
        b = np.asarray(doc["biases"][i], dtype=np.float64)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ContractViolation(f"parameter count mismatch in layer {i}")
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return DenseNet(sizes, acts, weights, biases)
