import numpy as np
import pytest

from adinfohrl.agent import evaluate, run_training
from adinfohrl.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from adinfohrl.config import load_config
from adinfohrl.envs import make_env
from adinfohrl.errors import CheckpointError


@pytest.fixture(scope="module")
def trained():
    cfg = load_config(overrides=["total_steps=300", "eval_interval=300", "eval_episodes=2",
                                 "on_policy_capacity=250", "option_net_epochs=1",
                                 "warmup_steps=0", "critic_batch=20", "hidden_sizes=[16,16]"])
    return run_training(cfg, 3).agent


def test_save_load_save_is_byte_identical(trained, tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(trained, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_agent_matches(trained):
    agent = loads(dumps(trained))
    for a, b in zip(trained.policies.policies, agent.policies.policies):
        assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    for a, b in zip(trained.critic.nets().values(), agent.critic.nets().values()):
        assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    assert agent.step_count == trained.step_count == 300
    assert agent.option_training_steps == [250]
    env = make_env(agent.config.env_name)
    assert evaluate(agent, env, 4, 1).returns == evaluate(trained, env, 4, 1).returns


def test_rng_streams_restored(trained):
    agent = loads(dumps(trained))
    for name, rng in trained.rngs.items():
        assert agent.rngs[name].bit_generator.state == rng.bit_generator.state


def test_td3_checkpoint_round_trip():
    cfg = load_config(overrides=["mode=td3", "total_steps=10", "eval_interval=10",
                                 "eval_episodes=1", "hidden_sizes=[8]"])
    agent = run_training(cfg, 0).agent
    text = dumps(agent)
    assert dumps(loads(text)) == text
    assert loads(text).option_net is None


def corrupt(text, section):
    lines = text.split("\n")
    for k, line in enumerate(lines):
        if line.startswith(section + "\t"):
            # flip one digit inside the payload
            i = line.rindex("1")
            lines[k] = line[:i] + "2" + line[i + 1:]
            return "\n".join(lines)
    raise AssertionError(section)


@pytest.mark.parametrize("section", ["config", "critic", "policies", "option_net", "rng"])
def test_corrupt_section_named(trained, section):
    with pytest.raises(CheckpointError, match=f"'{section}'"):
        loads(corrupt(dumps(trained), section))


def test_truncated_file(trained):
    text = dumps(trained)
    with pytest.raises(CheckpointError, match="'optimizers'"):
        loads(text[: text.index("\noptimizers\t")])


def test_version_mismatch(trained):
    text = dumps(trained).replace('"version": 1', '"version": 99', 1)
    with pytest.raises(CheckpointError, match="incompatible checkpoint version 99"):
        loads(text)


def test_not_a_checkpoint():
    with pytest.raises(CheckpointError, match="manifest"):
        loads("hello\n")
