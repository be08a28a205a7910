"""Agent checkpoints as line-oriented structured text.

Line 1 is a JSON manifest (format, version, section names). Every following
line is ``name<TAB>sha256<TAB>json``. Each section is checked on its own, so a
damaged file is rejected with the name of the first bad section and nothing
is applied to the agent until every section has been verified.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import ndmath
from .agent import RNG_STREAMS, Agent
from .config import config_from_dict
from .envs import make_env
from .errors import CheckpointError, ConfigurationError, ContractViolation

FORMAT = "adinfohrl-checkpoint"
VERSION = 1
SECTIONS = ("config", "progress", "rng", "critic", "policies", "option_net", "optimizers")


def _net_doc(net):
    return json.loads(ndmath.export_net(net))


def _adam_doc(state: ndmath.AdamState):
    return {
        "first_moment": [m.ravel().tolist() for m in state.first_moment],
        "second_moment": [v.ravel().tolist() for v in state.second_moment],
        "learning_rate": state.learning_rate, "beta1": state.beta1, "beta2": state.beta2,
        "epsilon": state.epsilon, "step_count": state.step_count,
    }


def _restore_adam(state: ndmath.AdamState, doc):
    for dst, src in ((state.first_moment, doc["first_moment"]),
                     (state.second_moment, doc["second_moment"])):
        if len(dst) != len(src):
            raise ContractViolation("optimizer moment count mismatch")
        for arr, vals in zip(dst, src):
            vals = np.asarray(vals, dtype=np.float64)
            if vals.size != arr.size:
                raise ContractViolation("optimizer moment shape mismatch")
            arr[...] = vals.reshape(arr.shape)
    state.learning_rate = float(doc["learning_rate"])
    state.beta1, state.beta2 = float(doc["beta1"]), float(doc["beta2"])
    state.epsilon = float(doc["epsilon"])
    state.step_count = int(doc["step_count"])


def _copy_into(dst: ndmath.DenseNet, doc):
    src = ndmath.net_from_dict(doc)
    if not dst.same_architecture(src):
        raise ContractViolation("network architecture does not match the configuration")
    for p, q in zip(dst.parameters(), src.parameters()):
        p[...] = q


def agent_sections(agent: Agent) -> dict:
    critic, policies = agent.critic, agent.policies
    adams = {"q1": _adam_doc(critic.q1_adam), "q2": _adam_doc(critic.q2_adam),
             "policies": [_adam_doc(a) for a in policies.adams]}
    if agent.option_net is not None:
        adams["option_net"] = _adam_doc(agent.option_net.adam)
    return {
        "config": agent.config.to_dict(),
        "progress": {
            "seed": agent.seed,
            "step_count": agent.step_count,
            "critic_updates": agent.critic_updates,
            "current_option": agent.current_option,
            "steps_since_option_draw": agent.steps_since_option_draw,
            "option_training_steps": list(agent.option_training_steps),
        },
        "rng": {name: agent.rngs[name].bit_generator.state for name in RNG_STREAMS},
        "critic": {name: _net_doc(net) for name, net in critic.nets().items()},
        "policies": {"online": [_net_doc(n) for n in policies.policies],
                     "target": [_net_doc(n) for n in policies.target_policies]},
        "option_net": None if agent.option_net is None else _net_doc(agent.option_net.net),
        "optimizers": adams,
    }


def _encode(body) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def dumps(agent: Agent) -> str:
    sections = agent_sections(agent)
    lines = [json.dumps({"format": FORMAT, "version": VERSION, "sections": list(SECTIONS)},
                        sort_keys=True)]
    for name in SECTIONS:
        text = _encode(sections[name])
        digest = hashlib.sha256(text.encode()).hexdigest()
        lines.append(f"{name}\t{digest}\t{text}")
    return "\n".join(lines) + "\n"


def save_checkpoint(agent: Agent, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(agent))
    tmp.replace(path)
    return path


def parse_sections(text: str) -> dict:
    """Verify the manifest and every section checksum; return the decoded sections."""
    lines = text.split("\n")
    try:
        manifest = json.loads(lines[0])
    except (json.JSONDecodeError, IndexError):
        raise CheckpointError("checkpoint manifest is unreadable") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError("not an adinfohrl checkpoint (bad manifest format)")
    if manifest.get("version") != VERSION:
        raise CheckpointError(
            f"incompatible checkpoint version {manifest.get('version')!r}; "
            f"this build reads version {VERSION}")
    if manifest.get("sections") != list(SECTIONS):
        raise CheckpointError("checkpoint manifest lists unexpected sections")
    body_lines = [ln for ln in lines[1:] if ln]
    out = {}
    for k, name in enumerate(SECTIONS):
        if k >= len(body_lines):
            raise CheckpointError(f"checkpoint section {name!r} is missing")
        parts = body_lines[k].split("\t", 2)
        if len(parts) != 3 or parts[0] != name:
            raise CheckpointError(f"checkpoint section {name!r} is malformed")
        if hashlib.sha256(parts[2].encode()).hexdigest() != parts[1]:
            raise CheckpointError(f"checkpoint section {name!r} failed its checksum")
        try:
            out[name] = json.loads(parts[2])
        except json.JSONDecodeError:
            raise CheckpointError(f"checkpoint section {name!r} is not valid JSON") from None
    if len(body_lines) != len(SECTIONS):
        raise CheckpointError("checkpoint has trailing data after the last section")
    return out


def loads(text: str) -> Agent:
    sections = parse_sections(text)
    try:
        config = config_from_dict(sections["config"])
    except ConfigurationError as exc:
        raise CheckpointError(f"checkpoint section 'config' is invalid: {exc}") from None
    current = "progress"
    try:
        progress = sections["progress"]
        env = make_env(config.env_name, **config.env_params)
        agent = Agent(config, env.spec, int(progress["seed"]))
        agent.step_count = int(progress["step_count"])
        agent.critic_updates = int(progress["critic_updates"])
        agent.current_option = int(progress["current_option"])
        agent.steps_since_option_draw = int(progress["steps_since_option_draw"])
        agent.option_training_steps = [int(s) for s in progress["option_training_steps"]]

        current = "rng"
        for name in RNG_STREAMS:
            agent.rngs[name].bit_generator.state = sections["rng"][name]

        current = "critic"
        for name, net in agent.critic.nets().items():
            _copy_into(net, sections["critic"][name])

        current = "policies"
        pol = sections["policies"]
        if len(pol["online"]) != agent.option_count or len(pol["target"]) != agent.option_count:
            raise ContractViolation("option count does not match the configuration")
        for net, doc in zip(agent.policies.policies, pol["online"]):
            _copy_into(net, doc)
        for net, doc in zip(agent.policies.target_policies, pol["target"]):
            _copy_into(net, doc)

        current = "option_net"
        doc = sections["option_net"]
        if (doc is None) != (agent.option_net is None):
            raise ContractViolation("option network presence does not match the mode")
        if doc is not None:
            _copy_into(agent.option_net.net, doc)

        current = "optimizers"
        opt = sections["optimizers"]
        _restore_adam(agent.critic.q1_adam, opt["q1"])
        _restore_adam(agent.critic.q2_adam, opt["q2"])
        for state, d in zip(agent.policies.adams, opt["policies"], strict=True):
            _restore_adam(state, d)
        if agent.option_net is not None:
            _restore_adam(agent.option_net.adam, opt["option_net"])
    except (KeyError, TypeError, ValueError, ContractViolation) as exc:
        raise CheckpointError(f"checkpoint section {current!r} is invalid: {exc}") from None
    return agent


def load_checkpoint(path) -> Agent:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise CheckpointError(f"{path}: checkpoint is not text") from None
    return loads(text)
