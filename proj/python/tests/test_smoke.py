import json
import math

import pytest

import sdar


def tiny(env="builtin:point_mass"):
    c = sdar.preset("default")
    return sdar.with_settings(
        c,
        run={"env": env, "total_steps": 400, "warmup_steps": 100, "eval_every": 200, "eval_episodes": 2, "seed": 3},
        agent={"hidden": [8, 8]},
        optimizer={"batch_size": 16},
    )


def test_presets_and_hash():
    assert "paper-desk" in sdar.preset_names()
    desk = sdar.preset("paper-desk")
    assert desk["run"]["env"] == "builtin:mountain_car"
    assert len(sdar.config_hash(desk)) == 64
    back = sdar.parse_config(sdar.config_text(desk))
    assert sdar.config_hash(back) == sdar.config_hash(desk)


def test_bad_settings_raise():
    with pytest.raises(sdar.ConfigError):
        sdar.with_settings(sdar.preset(), run={"no_such_key": 1})
    with pytest.raises(sdar.ConfigError):
        sdar.preset("nope")


def test_metrics():
    repeat4 = [[0.5]] * 4 + [[-0.5]] * 4
    t = sdar.EpisodeTrace(repeat4, initial_action=[0.0])
    r = sdar.apr([t])
    assert r["p"] == 6 / 8
    assert r["apr"] == 4.0
    assert sdar.apr([sdar.EpisodeTrace([[0.1], [0.2], [0.3]])])["apr"] == 1.0
    assert sdar.afr([sdar.EpisodeTrace([[0.0, 0.0], [0.3, 0.4]])]) == pytest.approx(0.25)
    assert sdar.n_score(5.0, 0.0, 10.0) == 0.5
    assert sdar.auc([(0.0, 0.0), (10.0, 1.0)]) == 0.5
    assert sdar.best_normalized([2.0, 4.0]) == [0.5, 1.0]


def test_env_steps():
    env = sdar.Env("mountain_car")
    assert (env.obs_dim, env.act_dim, env.max_episode_steps) == (2, 1, 999)
    obs = env.reset(0)
    assert -0.6 <= obs[0] <= -0.4 and obs[1] == 0.0
    obs2, reward, terminated, truncated = env.step([1.0])
    assert reward == pytest.approx(-0.1)
    assert not terminated and not truncated
    assert "point_mass" in sdar.builtin_env_names()


def test_trainer_act_repeats_previous_action():
    tr = sdar.Trainer(tiny())
    spec = tr.env_spec
    assert spec["act_dim"] == 4
    obs = [0.0] * spec["obs_dim"]
    a_prev = [0.25, -0.5, 1.0, -1.0]
    for _ in range(50):
        a, b = tr.act(obs, a_prev)
        for i in range(4):
            if b[i] == 0:
                assert a[i] == a_prev[i]
    a, b = tr.act(obs, a_prev, episode_start=True)
    assert b == [1, 1, 1, 1]
    records = tr.train()
    assert [r["step"] for r in records] == [200, 400]
    assert tr.step == 400
    assert tr.temperatures["alpha_pi"] > 0


def test_train_is_deterministic_and_evaluates(tmp_path):
    a = sdar.train(tiny(), str(tmp_path / "a"))
    b = sdar.train(tiny(), str(tmp_path / "b"))
    assert a["finished"] and a["steps"] == 400
    assert open(a["log"], "rb").read() == open(b["log"], "rb").read()
    log = sdar.read_run_log(a["log"])
    assert log["end_step"] == 400 and len(log["evals"]) == 2
    ev = sdar.evaluate(a["checkpoint"], episodes=2, seed=1, traces_out=str(tmp_path / "t.jsonl"))
    assert ev["checkpoint_step"] == 400 and ev["episodes"] == 2
    assert math.isfinite(ev["return_mean"])
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 2 and "actions" in json.loads(lines[0])


def test_fast_checks(tmp_path):
    for name in ["repeat-invariant", "metrics", "temperature"]:
        r = sdar.run_check(name, str(tmp_path))
        assert r["passed"], r["detail"]
