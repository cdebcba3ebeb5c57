import json
import subprocess
import sys

import pytest

from sokotl import cli, experiments, net


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(text):
    return json.loads(text)


@pytest.fixture(scope="module")
def gen_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("levels") / "set"
    code = cli.main(["gen-levels", "--boxes", "1", "--count", "4",
                     "--seed", "11", "--max-len", "20", "--out", str(out)])
    assert code == 0
    return out


def test_parse_seeds():
    assert cli._parse_seeds("5") == (0, 1, 2, 3, 4)
    assert cli._parse_seeds("0,3,9") == (0, 3, 9)
    assert cli._parse_seeds("3,") == (3,)


def test_gen_levels_deterministic(tmp_path, capsys):
    argv = ["gen-levels", "--boxes", "2", "--count", "3", "--seed", "7",
            "--max-len", "30"]
    code, out, _ = run_cli(capsys, *argv, "--out", str(tmp_path / "a"))
    assert code == 0
    report = last_json(out)
    assert report["count"] == 3 and report["boxes"] == 2
    assert report["optimal_length"]["max"] <= 30
    code, _, _ = run_cli(capsys, *argv, "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "a" / "levels.txt").read_bytes() == \
        (tmp_path / "b" / "levels.txt").read_bytes()
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert manifest["command"] == "gen-levels"
    assert "levels.txt" in manifest["artifacts"]
    assert manifest["schema_version"] == cli.CONFIG_SCHEMA_VERSION


def test_gen_levels_split(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "gen-levels", "--boxes", "1", "--count", "6",
                         "--seed", "3", "--max-len", "20",
                         "--split", "4,2", "--out", str(tmp_path))
    assert code == 0
    from sokotl import levels
    train = levels.load_level_set(tmp_path / "train")
    test = levels.load_level_set(tmp_path / "test")
    assert len(train) == 4 and len(test) == 2
    assert not {l.id for l in train.levels} & {l.id for l in test.levels}


def test_solve_by_index_and_id(gen_dir, capsys):
    code, out, _ = run_cli(capsys, "solve", "--levels", str(gen_dir),
                           "--index", "1")
    assert code == 0
    report = last_json(out)
    assert report["status"] == "solved"
    assert report["length"] == len(report["actions"])

    code, out2, _ = run_cli(capsys, "solve", "--levels", str(gen_dir),
                            "--id", report["id"])
    assert code == 0
    assert last_json(out2) == report


def test_solve_unknown_id_reports_error(gen_dir, capsys):
    code, _, err = run_cli(capsys, "solve", "--levels", str(gen_dir),
                           "--id", "nope")
    assert code == 1
    record = json.loads(err)
    assert record["error"] == "KeyError"
    assert "nope" in record["message"]


def test_stats_histogram(gen_dir, capsys):
    code, out, _ = run_cli(capsys, "stats", "--levels", str(gen_dir))
    assert code == 0
    report = last_json(out)
    assert report["count"] == 4
    assert sum(report["histogram"].values()) == 4
    assert report["summary"]["min"] >= 1


def test_train_scratch_end_to_end(gen_dir, tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "train", "--levels", str(gen_dir), "--task", "1box",
        "--seeds", "1", "--budget-steps", "200", "--deterministic",
        "--out", str(tmp_path))
    assert code == 0
    report = last_json(out)
    assert report["experiment"] == "scratch_1box"
    assert report["runs"][0]["env_steps"] == 300  # 2 updates of 150

    run_dir = tmp_path / "scratch_1box" / "seed0"
    assert (run_dir / "metrics.csv").exists()
    assert (run_dir / "checkpoint_final.ckpt").exists()
    run = json.loads((run_dir / "run.json").read_text())
    assert run["status"] == "completed"
    manifest = json.loads(
        (tmp_path / "scratch_1box" / "run_manifest.json").read_text())
    assert "seed0/metrics.csv" in manifest["artifacts"]
    assert manifest["config"]["budget_steps"] == 200


def test_train_multi_seed_writes_aggregate(gen_dir, tmp_path, capsys):
    code, _, _ = run_cli(
        capsys, "train", "--levels", str(gen_dir), "--task", "1box",
        "--seeds", "2", "--budget-steps", "200", "--deterministic",
        "--out", str(tmp_path))
    assert code == 0
    exp_dir = tmp_path / "scratch_1box"
    assert (exp_dir / "aggregate.csv").exists()
    assert (exp_dir / "curve.svg").exists()


def test_transfer_train_needs_source_checkpoint(gen_dir, tmp_path, capsys):
    code, _, err = run_cli(
        capsys, "transfer-train", "--levels", str(gen_dir),
        "--experiment", "s2t1k1", "--out", str(tmp_path))
    assert code == 1
    record = json.loads(err)
    assert record["error"] == "ExperimentError"
    assert "--source-checkpoint" in record["message"]


def test_transfer_train_end_to_end(gen_dir, tmp_path, capsys):
    source = net.init(5)
    ckpt = tmp_path / "source.ckpt"
    net.save_checkpoint(source, ckpt, source_task="2boxes")

    code, out, _ = run_cli(
        capsys, "transfer-train", "--levels", str(gen_dir),
        "--experiment", "s2t1k1", "--source-checkpoint", str(ckpt),
        "--seeds", "1", "--budget-steps", "150", "--deterministic",
        "--out", str(tmp_path))
    assert code == 0
    run_dir = tmp_path / "s2t1k1" / "seed0"
    run = json.loads((run_dir / "run.json").read_text())
    assert run["transfer"]["conv1"] is True
    assert run["transfer"]["fc"] is False
    final = net.load_checkpoint(run_dir / "checkpoint_final.ckpt")
    assert final.layer_bytes("conv1") == source.layer_bytes("conv1")
    assert final.frozen("conv1")


def test_experiment_config_file_conflict(gen_dir, tmp_path, capsys):
    cfg_path = experiments.save_config(
        experiments.parse_experiment("s1t1k3"), tmp_path / "cfg.json")
    code, _, err = run_cli(
        capsys, "train", "--levels", str(gen_dir), "--config", str(cfg_path),
        "--experiment", "s2t1k1", "--out", str(tmp_path))
    assert code == 1
    assert json.loads(err)["error"] == "ExperimentError"


def test_eval_subcommand(gen_dir, tmp_path, capsys):
    ckpt = tmp_path / "p.ckpt"
    net.save_checkpoint(net.init(0), ckpt)
    code, out, _ = run_cli(
        capsys, "eval", "--checkpoint", str(ckpt), "--levels", str(gen_dir),
        "--episodes-per-level", "2")
    assert code == 0
    report = last_json(out)
    assert report["episodes"] == 8
    assert 0.0 <= report["solved_ratio"] <= 1.0


def test_aggregate_and_plot_subcommands(gen_dir, tmp_path, capsys):
    code, _, _ = run_cli(
        capsys, "train", "--levels", str(gen_dir), "--task", "1box",
        "--seeds", "2", "--budget-steps", "200", "--deterministic",
        "--out", str(tmp_path / "runs"))
    assert code == 0
    seed_dirs = ",".join(
        str(tmp_path / "runs" / "scratch_1box" / f"seed{s}") for s in (0, 1))
    agg_path = tmp_path / "agg.csv"
    code, out, _ = run_cli(capsys, "aggregate", "--runs", seed_dirs,
                           "--out", str(agg_path))
    assert code == 0
    assert last_json(out)["n_runs"] == 2
    assert agg_path.exists()

    svg = tmp_path / "curve.svg"
    code, out, _ = run_cli(capsys, "plot", "--curves", f"scratch={agg_path}",
                           "--out", str(svg), "--title", "demo")
    assert code == 0
    assert svg.exists() and svg.stat().st_size > 0


def test_plot_rejects_unlabelled_curves(tmp_path, capsys):
    code, _, err = run_cli(capsys, "plot", "--curves", "justapath.csv",
                           "--out", str(tmp_path / "x.svg"))
    assert code == 1
    assert json.loads(err)["error"] == "ValueError"


def test_dump_features_subcommand(gen_dir, tmp_path, capsys):
    ckpt = tmp_path / "p.ckpt"
    net.save_checkpoint(net.init(0), ckpt)
    out_dir = tmp_path / "features"
    code, out, _ = run_cli(
        capsys, "dump-features", "--checkpoint", str(ckpt),
        "--levels", str(gen_dir), "--walk-steps", "5", "--out", str(out_dir))
    assert code == 0
    for name in ("input.png", "conv1.png", "conv2.png", "conv3.png",
                 "index.json", "run_manifest.json"):
        assert (out_dir / name).exists()


def test_out_root_env_fallback(gen_dir, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SOKOTL_OUT", str(tmp_path / "envroot"))
    ckpt = tmp_path / "p.ckpt"
    net.save_checkpoint(net.init(0), ckpt)
    code, _, _ = run_cli(
        capsys, "dump-features", "--checkpoint", str(ckpt),
        "--levels", str(gen_dir))
    assert code == 0
    assert (tmp_path / "envroot" / "input.png").exists()


def test_bad_flag_exits_via_argparse(capsys):
    with pytest.raises(SystemExit):
        cli.main(["eval", "--eval-mode", "greedy", "--checkpoint", "x",
                  "--levels", "y"])


def test_verify_subcommand_runs_all_checks(capsys):
    code, out, _ = run_cli(capsys, "verify")
    assert code == 0
    assert "verify: all checks passed" in out
    assert out.count("PASS") >= 9


def test_help_via_module_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "sokotl.cli", "--help"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("gen-levels", "train", "transfer-train", "verify"):
        assert name in proc.stdout
