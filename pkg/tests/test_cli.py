import json
import subprocess
import sys
from pathlib import Path

from uqrank.cli import main

DATA = Path(__file__).parent / "data"


def simulate(tmp_path, name="logs.jsonl", **flags):
    out = tmp_path / name
    args = [
        "simulate", "--n-models", "4", "--n-samples", "25", "--seed", "3",
        "--resamples", "2", "--dataset-id", "dcli", "--out", str(out),
    ]
    for key, value in flags.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    assert main(args) == 0
    return out


def test_simulate_then_validate_round_trip(tmp_path, capsys):
    log = simulate(tmp_path)
    assert main(["validate", str(log)]) == 0
    out = capsys.readouterr().out
    assert "accepted=100" in out and "errors=0" in out


def test_validate_flags_bad_lines(tmp_path, capsys):
    log = tmp_path / "bad.jsonl"
    log.write_text('{"model_id": "m"}\n', encoding="utf-8")
    assert main(["validate", str(log)]) == 2
    assert "MISSING_FIELD" in capsys.readouterr().out


def test_validate_missing_file_is_config_error(tmp_path):
    assert main(["validate", str(tmp_path / "absent.jsonl")]) == 3


def test_score_and_rank_and_eval(tmp_path, capsys):
    log = simulate(tmp_path, truth_out=tmp_path / "truth.csv")
    capsys.readouterr()  # drop the simulate status line
    scores = tmp_path / "scores.json"
    assert main([
        "score", "--logs", str(log), "--methods", "nll_avg,sample_bleu",
        "--out", str(scores),
    ]) == 0
    tables = json.loads(scores.read_text())["tables"]
    assert [t["method"] for t in tables] == ["nll_avg", "sample_bleu"]

    assert main(["rank", "--scores", str(scores), "--method", "nll_avg"]) == 0
    ranked = capsys.readouterr().out.strip().splitlines()
    assert ranked[0] == "method,dataset_id,model_id,score,rank"
    assert len(ranked) == 5

    eval_out = tmp_path / "eval.csv"
    assert main([
        "eval", "--scores", str(scores), "--perf", str(tmp_path / "truth.csv"),
        "--out", str(eval_out),
    ]) == 0
    lines = eval_out.read_text().strip().splitlines()
    assert lines[0].startswith("method,dcli_rho,dcli_tau_w")
    assert len(lines) == 3


def test_atc_subcommand(tmp_path, capsys):
    proxy = simulate(tmp_path, name="proxy.jsonl", seed=5)
    target = simulate(tmp_path, name="target.jsonl", seed=6, dataset_id="dtgt")
    capsys.readouterr()
    assert main([
        "atc", "--proxy-logs", str(proxy), "--target-logs", str(target),
    ]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "model_id,dataset_id,delta,atc"
    assert len(lines) == 5


def test_aol_subcommand(tmp_path, capsys):
    perf = tmp_path / "perf.csv"
    perf.write_text(
        "model_id,dataset_id,score\nm1,src,0.9\nm2,src,0.5\nm1,tgt,0.8\nm2,tgt,0.4\n"
    )
    assert main(["aol", "--perf", str(perf), "--source-dataset", "src"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "model_id,dataset_id,score"
    assert len(lines) == 3  # two models on one target dataset


def test_subset_subcommand(tmp_path, capsys):
    log = simulate(tmp_path)
    capsys.readouterr()
    assert main(["subset", "--logs", str(log), "--n", "10", "--seed", "4"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5


def test_fd_subcommand(tmp_path, capsys):
    assert main([
        "fd",
        "--embeddings", f"dvqa={DATA / 'embeddings' / 'fd_vqa'}",
        "--embeddings", f"dmcvq={DATA / 'embeddings' / 'fd_mcvq'}",
    ]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "dataset_a,dataset_b,fd,rho,is_min_fd_partner"
    assert len(lines) == 2


def test_fd_requires_two_datasets(tmp_path):
    assert main(["fd", "--embeddings", f"dvqa={DATA / 'embeddings' / 'fd_vqa'}"]) == 3


def _write_perf(tmp_path):
    perf = tmp_path / "perf.csv"
    rows = ["model_id,dataset_id,score"]
    for m in range(5):
        rows.append(f"m{m:03d},dvqa,{0.25 + 0.15 * m}")
        rows.append(f"m{m:03d},dmcvq,{0.3 + 0.14 * m}")
    perf.write_text("\n".join(rows) + "\n")
    return perf


def test_run_and_report_subcommands(tmp_path, capsys):
    out_dir = tmp_path / "out"
    assert main([
        "run", "--config", str(DATA / "golden_config.toml"), "--out-dir", str(out_dir),
    ]) == 0
    assert (out_dir / "scores.json").exists()

    report_dir = tmp_path / "report"
    assert main([
        "report", "--scores", str(out_dir / "scores.json"),
        "--perf", str(_write_perf(tmp_path)), "--out-dir", str(report_dir),
    ]) == 0
    assert (report_dir / "eval.csv").exists()
    assert (report_dir / "perf_corr.csv").exists()
    assert (report_dir / "aol_fit.json").exists()


def test_run_bad_config_exit_3(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"methods": ["nll_avg"]}')  # no logs
    assert main(["run", "--config", str(cfg)]) == 3


def test_run_missing_config_exit_3(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.toml")]) == 3


def test_console_entry_point_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "uqrank.cli", "validate", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    proc2 = subprocess.run(["uqrank", "--help"], capture_output=True, text=True)
    assert proc2.returncode == 0
    assert "simulate" in proc2.stdout
