import json

import pytest

from dextron_lite import cli, traj


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Tiny gen -> mc -> train -> sm-data -> sm-train -> explain run shared by the tests."""
    root = tmp_path_factory.mktemp("pipe")
    steps = [
        ["gen", "--out", root / "traj"],
        ["mc", "--traj", root / "traj", "--out", root / "mc", "--set", "n_samples=3000"],
        ["train", "rlil", "--traj", root / "traj", "--gs", root / "mc", "--out", root / "rlil",
         "--set", "sac.total_frames=2000", "--set", "sac.warm_start=1000", "--set", "sac.epoch=500",
         "--set", "sac.hidden=(16,16)", "--set", "eval_episodes=5"],
        ["sm-data", "--traj", root / "traj", "--gs", root / "mc", "--policy", root / "rlil" / "policy.npz",
         "--out", root / "sm", "--set", "n_episodes=60"],
        ["sm-train", "--data", root / "sm" / "dataset.npz", "--out", root / "sm_model",
         "--set", "epochs=2", "--set", "hidden=(16,16)"],
        ["explain", "--model", root / "sm_model" / "model.npz", "--traj", root / "traj", "--gs", root / "mc",
         "--out", root / "explain", "--set", "episodes=2"],
    ]
    for argv in steps:
        assert cli.main([str(a) for a in argv]) == 0, argv
    return root


def test_gen_writes_sixteen(pipeline):
    files = sorted((pipeline / "traj").glob("*.csv"))
    assert len(files) == 16
    assert (pipeline / "traj" / "config.resolved").is_file()
    back = traj.load_set(pipeline / "traj")
    ref = traj.synthetic_set()
    assert all(a.allclose(b, atol=1e-12) for a, b in zip(back, ref))


def test_every_stage_has_artifacts(pipeline):
    for rel in ["mc/gs.jsonl", "mc/stats.json", "mc/gs.index.json", "rlil/policy.npz", "rlil/curve.csv",
                "rlil/eval.json", "sm/dataset.npz", "sm/dataset.meta.json", "sm_model/model.npz",
                "sm_model/metrics.json", "explain/episode_00.csv", "explain/episodes.jsonl", "explain/summary.json"]:
        p = pipeline / rel
        assert p.is_file() and p.stat().st_size > 0, rel
    for stage in ["traj", "mc", "rlil", "sm", "sm_model", "explain"]:
        assert (pipeline / stage / "config.resolved").is_file()


def test_resolved_config_reproduces(pipeline, capsys, tmp_path):
    code, out, _ = run(capsys, "mc", "--traj", pipeline / "traj", "--out", tmp_path / "mc2",
                       "--config", pipeline / "mc" / "config.resolved")
    assert code == 0
    assert (tmp_path / "mc2" / "gs.jsonl").read_text() == (pipeline / "mc" / "gs.jsonl").read_text()


def test_eval_expert_matches_stored(pipeline, capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--expert", "--traj", pipeline / "traj", "--gs", pipeline / "mc",
                       "--set", "stratum=all", "--episodes", 50, "--out", tmp_path)
    assert code == 0
    res = json.loads(out)
    assert res["mean_return"] == res["stored_mean_return"]
    assert res["seed"] == 0
    assert json.loads((tmp_path / "eval.json").read_text())["episodes"] == 50


def test_eval_checkpoint(pipeline, capsys):
    code, out, _ = run(capsys, "eval", "--checkpoint", pipeline / "rlil" / "policy.npz", "--traj", pipeline / "traj",
                       "--gs", pipeline / "mc", "--episodes", 5, "--seed", 3)
    res = json.loads(out)
    assert code == 0 and res["episodes"] == 5 and res["seed"] == 3 and sum(res["histogram"]) == 5


def test_eval_errors(pipeline, capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "missing.npz", "--traj", pipeline / "traj",
                       "--gs", pipeline / "mc")
    assert code != 0
    line = json.loads(err.strip().splitlines()[-1])
    assert line["error"] == "MissingCheckpoint" and line["command"] == "eval"
    code, _, err = run(capsys, "eval", "--expert", "--episodes", 0, "--traj", pipeline / "traj", "--gs", pipeline / "mc")
    assert code != 0 and json.loads(err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_unknown_key_rejected(capsys, tmp_path):
    code, _, err = run(capsys, "gen", "--out", tmp_path, "--set", "bogus=1")
    assert code != 0
    assert json.loads(err.strip())["error"] == "ConfigError"


def test_gen_import_validates(pipeline, capsys, tmp_path):
    code, out, _ = run(capsys, "gen", "--import", pipeline / "traj", "--out", tmp_path / "imp")
    assert code == 0 and json.loads(out)["n_trajectories"] == 16
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "a.csv").write_text("t,x,y,z,qw,qx,qy,qz\n0.0,0,0,0,1,0,0,0\nx,0,0,0,1,0,0,0\n")
    code, _, err = run(capsys, "gen", "--import", bad, "--out", tmp_path / "imp2")
    line = json.loads(err.strip())
    assert code != 0 and line["error"] == "ParseError" and "a.csv" in line["message"]


def test_train_bc_and_rl(pipeline, capsys, tmp_path):
    code, out, _ = run(capsys, "train", "bc", "--traj", pipeline / "traj", "--gs", pipeline / "mc", "--out",
                       tmp_path / "bc", "--set", "bc.epochs=3", "--set", "bc.hidden=(16,16)", "--set", "bc_records=3",
                       "--set", "eval_episodes=3")
    assert code == 0 and (tmp_path / "bc" / "loss.csv").is_file() and (tmp_path / "bc" / "policy.npz").is_file()
    code, out, _ = run(capsys, "train", "rl", "--traj", pipeline / "traj", "--gs", pipeline / "mc", "--out",
                       tmp_path / "rl", "--set", "sac.total_frames=1000", "--set", "sac.warm_start=500",
                       "--set", "sac.epoch=500", "--set", "sac.hidden=(8,8)", "--set", "eval_episodes=2")
    assert code == 0
    rows = (tmp_path / "rl" / "curve.csv").read_text().splitlines()
    assert rows[0] == "epoch,mean_return,std_return,n_episodes" and len(rows) == 3


def test_explain_csv_columns(pipeline):
    header = (pipeline / "explain" / "episode_00.csv").read_text().splitlines()[0]
    assert header == "t_norm,action,probability,executed,flag"
    summary = json.loads((pipeline / "explain" / "summary.json").read_text())
    assert len(summary) == 2


def test_sm_data_meta(pipeline):
    meta = json.loads((pipeline / "sm" / "dataset.meta.json").read_text())
    assert meta["state_dim"] == 21 and meta["n_episodes"] == 60
    assert meta["per_source"]["RL"] > 0 and meta["mix_rl_to_ex"] == "30:30"


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "dextron_lite", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sm-train" in res.stdout
