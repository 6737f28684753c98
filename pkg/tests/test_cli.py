"""Command-line entry points, exit codes, and error formatting."""

import subprocess
import sys

import pytest

from voqual.minicorpus import build_minicorpus


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "voqual.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_minicorpus(root)
    return root


def test_version_and_usage_exit_codes():
    ok = run_cli("--version")
    assert ok.returncode == 0
    assert "voqual" in ok.stdout

    usage = run_cli("split")               # missing required args
    assert usage.returncode == 2

    unknown = run_cli("frobnicate")
    assert unknown.returncode == 2


def test_domain_errors_exit_one(tmp_path):
    missing = run_cli("ingest", "--clips", str(tmp_path / "nope.csv"),
                      "--ratings", str(tmp_path / "nope2.csv"))
    assert missing.returncode == 1
    assert missing.stderr.startswith("error ")


def test_ingest_reports_counts(corpus):
    result = run_cli("ingest", "--clips", str(corpus / "clips.csv"),
                     "--ratings", str(corpus / "ratings.csv"))
    assert result.returncode == 0
    assert "clips: 12" in result.stdout
    assert "ratings: 144" in result.stdout


def test_split_writes_file(corpus, tmp_path):
    out = tmp_path / "split.csv"
    result = run_cli("split", "--clips", str(corpus / "clips.csv"),
                     "--seed", "3", "--out", str(out))
    assert result.returncode == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "# seed=3"
    assert len(lines) == 2 + 12            # seed line + header + 12 clips


def test_agreement_json(corpus):
    result = run_cli("agreement", "--labels", str(corpus / "ratings.csv"),
                     "--json")
    assert result.returncode == 0
    import json
    doc = json.loads(result.stdout)
    assert doc["expert_icc2k"]["pitch"] is not None
    assert 0.0 <= doc["expert_icc2k_average"] <= 1.0


def test_scatter_writes_per_pq_files(corpus, tmp_path):
    out = tmp_path / "scatter"
    result = run_cli("scatter", "--labels", str(corpus / "ratings.csv"),
                     "--pq", "pitch", "--out", str(out))
    assert result.returncode == 0
    text = (out / "scatter_pitch.csv").read_text()
    assert text.startswith("clip_id,expert_mean,nonexpert_mean\n")
    assert "# pearson_r=" in text


def test_minicorpus_command(tmp_path):
    result = run_cli("minicorpus", "--out", str(tmp_path / "mc"))
    assert result.returncode == 0
    assert (tmp_path / "mc" / "config.toml").is_file()
    assert (tmp_path / "mc" / "audio" / "mini_00.wav").is_file()
