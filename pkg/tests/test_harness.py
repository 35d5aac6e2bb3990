import json

import numpy as np
import pytest

from ppgl import harness
from ppgl.checkpoint import (
    MAGIC,
    CorruptHeaderError,
    TruncatedCheckpointError,
    VersionMismatchError,
    checkpoint_load,
    checkpoint_save,
    decode,
    encode,
    load_arrays,
    save_arrays,
)
from ppgl.config import TrainConfig
from ppgl.envs import Reach, make_env
from ppgl.harness import (
    RolloutCollector,
    evaluate,
    load_policy,
    random_baseline,
    run_episode,
    train,
)
from ppgl.learn import AdamState
from ppgl.metrics import read_metrics_csv
from ppgl.nets import make_policy


def tiny(**kw) -> TrainConfig:
    base = dict(env="cartpole", total_timesteps=4 * 64, n_envs=2, horizon=32, hidden=8, epochs=2,
                minibatch_size=32, eval_episodes=0, record_wallclock=False, checkpoint_every=2)
    base.update(kw)
    return TrainConfig(**base)


def policy_for(env_name, kind="mlp", seed=0, hidden=8):
    env = make_env(env_name)
    return make_policy(kind, env.obs_dim, env.act_dim, seed=seed, hidden=hidden)


def params_bytes(policy):
    return {k: p.data.tobytes() for k, p in policy.params.items()}


# -- collection ----------------------------------------------------------------


def test_minimal_rollout_has_one_transition():
    pol = policy_for("cartpole")
    buf = RolloutCollector("cartpole", [0], 0, pol).collect(pol, 1, 0)
    assert len(buf) == 1 and buf.obs.shape == (1, 1, 4)


def test_noop_policy_leaves_reach_arm_still():
    pol = policy_for("reach")
    for p in pol.params.values():
        p.data[...] = 0.0
    pol.params["log_std"].data[...] = -20.0
    col = RolloutCollector("reach", [0], 3, pol)
    angles = col.envs[0].arm.joint_angles.copy()
    buf = col.collect(pol, 20, 0)
    assert np.abs(buf.actions).max() < 1e-7
    assert np.abs(col.envs[0].arm.joint_angles - angles).max() < 1e-8


@pytest.mark.parametrize("kind", ["mlp", "lstm"])
def test_parallel_streams_match_sequential_single_env_collection(kind):
    pol = policy_for("cartpole", kind)
    batched = RolloutCollector("cartpole", range(8), 5, pol).collect(pol, 256, 0)
    assert len(batched) == 2048
    for e in range(8):
        single = RolloutCollector("cartpole", [e], 5, pol).collect(pol, 256, 0)
        np.testing.assert_array_equal(single.dones[:, 0], batched.dones[:, e])
        np.testing.assert_array_equal(single.starts[:, 0], batched.starts[:, e])
        np.testing.assert_allclose(single.obs[:, 0], batched.obs[:, e], rtol=0, atol=1e-12)
        np.testing.assert_allclose(single.actions[:, 0], batched.actions[:, e], rtol=0, atol=1e-12)
        np.testing.assert_allclose(single.rewards[:, 0], batched.rewards[:, e], rtol=0, atol=0)


def test_collection_does_not_touch_parameters():
    pol = policy_for("reach", "lstm")
    before = params_bytes(pol)
    RolloutCollector("reach", range(2), 0, pol).collect(pol, 50, 0)
    assert params_bytes(pol) == before


def test_done_steps_get_no_bootstrap_and_next_step_starts():
    pol = policy_for("cartpole")
    col = RolloutCollector("cartpole", range(4), 0, pol)
    buf = col.collect(pol, 200, 0)
    assert buf.starts[0].all()
    T = buf.horizon
    for t, e in zip(*np.nonzero(buf.dones)):
        if t + 1 < T:
            assert buf.starts[t + 1, e]
        else:
            assert buf.last_values[e] == 0.0


def test_recurrent_entering_state_zero_at_starts():
    pol = policy_for("cartpole", "lstm")
    buf = RolloutCollector("cartpole", range(3), 1, pol).collect(pol, 120, 0)
    assert np.all(buf.h[buf.starts] == 0.0)
    assert np.abs(buf.h[~buf.starts]).max() > 0


# -- training ----------------------------------------------------------------------


def test_empty_run_returns_initial_parameters():
    cfg = tiny(total_timesteps=10)
    result = train(cfg)
    assert result.updates == 0 and result.metrics == []
    assert params_bytes(result.policy) == params_bytes(harness.build_policy(cfg))


@pytest.mark.parametrize("algo,kind", [("ppo", "mlp"), ("ppg", "lstm")])
def test_training_is_deterministic(tmp_path, algo, kind):
    cfg = tiny(algo=algo, policy=kind, n_pi=2, aux_epochs=1)
    a = train(cfg, out_dir=tmp_path / "a")
    b = train(cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert params_bytes(a.policy) == params_bytes(b.policy)


def test_timestep_accounting(tmp_path):
    cfg = tiny(total_timesteps=5 * 64 + 10)
    result = train(cfg, out_dir=tmp_path)
    assert result.updates == 5
    assert result.total_steps == result.updates * cfg.horizon * cfg.n_envs
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert [r.timesteps for r in rows] == [64 * (i + 1) for i in range(5)]


def test_run_directory_layout(tmp_path):
    cfg = tiny(eval_episodes=2)
    train(cfg, out_dir=tmp_path)
    assert (tmp_path / "resolved_config.toml").exists()
    assert (tmp_path / "latest.ppgl").exists()
    assert sorted(p.name for p in (tmp_path / "checkpoints").iterdir()) == ["update_000002.ppgl", "update_000004.ppgl"]
    report = json.loads((tmp_path / "eval_report.json").read_text())
    assert report["env"] == "cartpole" and set(report["reports"]) == {"deterministic", "stochastic"}


def test_ppg_logs_aux_loss_only_on_aux_updates(tmp_path):
    cfg = tiny(algo="ppg", n_pi=2, aux_epochs=1)
    train(cfg, out_dir=tmp_path)
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert [r.aux_loss is not None for r in rows] == [False, True, False, True]


@pytest.mark.parametrize("algo,kind", [("ppo", "mlp"), ("ppg", "lstm")])
def test_resume_matches_uninterrupted_run(tmp_path, algo, kind):
    cfg = tiny(algo=algo, policy=kind, total_timesteps=6 * 64, n_pi=3, aux_epochs=1)
    full = train(cfg, out_dir=tmp_path / "full")
    train(cfg, out_dir=tmp_path / "part", max_updates=4)
    resumed = train(cfg, out_dir=tmp_path / "part", resume=tmp_path / "part" / "checkpoints" / "update_000004.ppgl")
    assert (tmp_path / "full" / "metrics.csv").read_bytes() == (tmp_path / "part" / "metrics.csv").read_bytes()
    assert params_bytes(full.policy) == params_bytes(resumed.policy)


def test_resume_rejects_different_config(tmp_path):
    cfg = tiny()
    train(cfg, out_dir=tmp_path)
    with pytest.raises(ValueError, match="different config"):
        train(cfg.replace(lr=1e-3), resume=tmp_path / "latest.ppgl")


def test_divergence_is_logged_and_training_continues(tmp_path, monkeypatch):
    from ppgl.learn import DivergenceError

    calls = []

    def boom(policy, buf, cfg, adam, rng, stale_hidden=False):
        calls.append(1)
        raise DivergenceError("forced")

    monkeypatch.setattr(harness, "ppo_update", boom)
    result = train(tiny(), out_dir=tmp_path)
    assert len(calls) == 4 and len(result.events) == 4 and "divergence" in result.events[0]


# -- evaluation ------------------------------------------------------------------------


class FixedReach(Reach):
    def reset(self, seed=None):
        return super().reset(0)


def test_deterministic_eval_on_fixed_env_has_zero_spread(monkeypatch):
    monkeypatch.setattr(harness, "make_env", lambda name: FixedReach())
    report = evaluate(policy_for("reach"), "reach", 100, mode="deterministic", seed=3)
    assert report.std == 0.0 and len(set(report.episode_rewards)) == 1


def test_single_episode_mean_is_that_episode():
    pol = policy_for("cartpole")
    report = evaluate(pol, "cartpole", 1, mode="stochastic", seed=4)
    assert report.mean == report.episode_rewards[0] == report.min == report.max


def test_evaluation_leaves_parameters_untouched():
    pol = policy_for("reach", "lstm")
    before = params_bytes(pol)
    evaluate(pol, "reach", 3, mode="stochastic")
    evaluate(pol, "reach", 3, mode="deterministic")
    assert params_bytes(pol) == before


def test_untrained_reach_policy_is_near_random_baseline():
    def brute_force_random(n, seed):
        env = Reach()
        out = []
        for i in range(n):
            rng = np.random.default_rng([seed, i, 99])
            out.append(run_episode(env, lambda obs, t: rng.uniform(-1, 1, 7), seed + i)[0])
        return np.array(out)

    base = random_baseline("reach", 100, seed=0)
    np.testing.assert_array_equal(base.episode_rewards, brute_force_random(100, 0))
    untrained = evaluate(policy_for("reach", hidden=64), "reach", 100, mode="stochastic", seed=0)
    assert abs(untrained.mean - base.mean) < 3 * base.std


def test_evaluate_rejects_bad_mode():
    with pytest.raises(ValueError):
        evaluate(policy_for("cartpole"), "cartpole", 1, mode="greedy")


# -- checkpoints --------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    pol = policy_for("reach", "lstm")
    adam = AdamState.create(pol.params)
    adam.t = 7
    adam.m["W_ii"][...] = 0.25
    cfg = tiny(env="reach", policy="lstm")
    path = checkpoint_save(tmp_path / "c.ppgl", pol.params, adam, cfg, step=3)
    params, adam2, step, ckpt = checkpoint_load(path)
    assert step == 3 and adam2.t == 7 and ckpt.digest == cfg.digest()
    assert all(params[k].tobytes() == p.data.tobytes() for k, p in pol.params.items())
    assert np.array_equal(adam2.m["W_ii"], adam.m["W_ii"])
    restored = load_policy(path)
    assert params_bytes(restored) == params_bytes(pol) and restored.recurrent


def test_encoded_layout():
    blob = encode({"a": np.array([[1.0, 2.0]])}, b"d" * 32)
    assert blob[:4] == MAGIC
    assert int.from_bytes(blob[4:8], "little") == 1
    assert blob[8:40] == b"d" * 32
    assert int.from_bytes(blob[40:44], "little") == 1
    assert int.from_bytes(blob[44:46], "little") == 1 and blob[46:47] == b"a"
    assert blob[47] == 2 and int.from_bytes(blob[48:52], "little") == 1 and int.from_bytes(blob[52:56], "little") == 2
    assert np.frombuffer(blob[56:], "<f8").tolist() == [1.0, 2.0]


def test_every_truncation_is_detected(tmp_path):
    arrays = {"x": np.arange(6.0).reshape(2, 3), "scalar": np.array(4.0)}
    blob = encode(arrays)
    assert decode(blob).arrays["x"].tolist() == arrays["x"].tolist()
    for cut in range(1, len(blob)):
        with pytest.raises((TruncatedCheckpointError, CorruptHeaderError)):
            decode(blob[:cut])
    path = save_arrays(tmp_path / "t.ppgl", arrays)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(TruncatedCheckpointError):
        load_arrays(path)


def test_corrupt_header_and_version(tmp_path):
    blob = bytearray(encode({"x": np.ones(2)}))
    bad_magic = bytes(b"XXXX" + blob[4:])
    with pytest.raises(CorruptHeaderError):
        decode(bad_magic)
    blob[4] = 9
    with pytest.raises(VersionMismatchError):
        decode(bytes(blob))
    with pytest.raises(CorruptHeaderError):
        decode(encode({"x": np.ones(2)}) + b"\0")


def test_missing_checkpoint_raises_oserror(tmp_path):
    with pytest.raises(FileNotFoundError):
        checkpoint_load(tmp_path / "nope.ppgl")
