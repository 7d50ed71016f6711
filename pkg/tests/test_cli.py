import json
import shutil

import pytest

from ghlgen.cli import main
from ghlgen.config import ConfigError, apply_overrides, config_from_dict, load_config


@pytest.fixture
def workdir(tmp_path, fixture_dir):
    """Copy of the fixture so tests may damage the cache."""
    dst = tmp_path / "mini"
    shutil.copytree(fixture_dir, dst, ignore=shutil.ignore_patterns("out"))
    return dst


def run(workdir, *extra):
    return main(["run", "--config", str(workdir / "config.json"), "--out", str(workdir / "out"), *extra])


def test_strategy_filter(workdir):
    assert run(workdir, "--strategy", "ghl-f") == 0
    dirs = {p.name for p in (workdir / "out" / "mini" / "theme").iterdir()}
    assert dirs == {"ghl-f"}
    summary = (workdir / "out" / "report" / "summary.md").read_text()
    assert "GHL-F" in summary and "zero-shot" not in summary


def test_function_filter(workdir):
    assert run(workdir, "--function", "avrcp-lite", "--strategy", "zero-shot", "--repeats", "1") == 0
    assert not (workdir / "out" / "mini" / "theme").exists()
    assert sorted(p.name for p in (workdir / "out" / "mini" / "avrcp-lite" / "zero-shot").iterdir()) == ["run-0"]


def test_repeats_average_equals_single(workdir):
    assert run(workdir, "--repeats", "3") == 0
    three = (workdir / "out" / "report" / "tables" / "summary.csv").read_text().splitlines()
    shutil.rmtree(workdir / "out")
    assert run(workdir, "--repeats", "1") == 0
    one = (workdir / "out" / "report" / "tables" / "summary.csv").read_text().splitlines()

    def metrics(rows):
        # drop duration_s and n
        return [r.split(",")[:10] for r in rows]

    assert metrics(three) == metrics(one)


def test_generation_artifact_contents(workdir):
    assert run(workdir, "--strategy", "ghl", "--repeats", "1") == 0
    gen = json.loads((workdir / "out" / "mini" / "theme" / "ghl" / "run-0" / "generation.json").read_text())
    assert gen["num_gen_ts"] == 5
    assert gen["techniques_used"] == ["Equivalence Partitioning", "State Transition Testing", "Use Case Testing"]
    assert gen["config"]["evaluation"]["threshold"] == 0.7
    assert "GHL_API_KEY" not in json.dumps(gen)
    transcripts = json.loads((workdir / "out" / "mini" / "theme" / "ghl" / "run-0" / "transcripts.json").read_text())
    assert len(transcripts) == 4


def test_threshold_override_changes_counts(workdir):
    assert run(workdir, "--strategy", "ghl", "--repeats", "1", "--rounding", "raw", "--threshold", "0.99") == 0
    ev = json.loads((workdir / "out" / "mini" / "avrcp-lite" / "ghl" / "run-0" / "evaluation.json").read_text())
    assert ev["rule"] == {"mode": "raw", "threshold": 0.99}
    # only identical IDs score 1.0
    assert ev["metrics"]["C"] == 2


def test_cache_miss_exit_code(workdir):
    # a different seed changes every request digest
    assert run(workdir, "--seed", "7", "--repeats", "1") == 3


def test_missing_cache_is_config_error(workdir, capsys):
    (workdir / "cache.ghlc").unlink()
    assert run(workdir) == 2
    assert "cache" in capsys.readouterr().err


def test_bad_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"provider": {"api_key": "sk-x"}}))
    assert main(["run", "--config", str(p)]) == 2
    p.write_text("{")
    assert main(["run", "--config", str(p)]) == 2


def test_evaluate_subcommand(workdir, capsys):
    assert run(workdir, "--strategy", "ghl-f", "--repeats", "1") == 0
    gen = workdir / "out" / "mini" / "avrcp-lite" / "ghl-f" / "run-0" / "generation.json"
    out1 = workdir / "e1.json"
    out2 = workdir / "e2.json"
    args = ["evaluate", "--config", str(workdir / "config.json"), "--truth", str(workdir / "avrcp-lite.truth"),
            "--id-scheme", "bluetooth", "--generated", str(gen)]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    metrics = json.loads(out1.read_text())["metrics"]
    assert (metrics["A"], metrics["B"], metrics["C"], metrics["D"]) == (4, 4, 4, 4)
    assert "A=4 B=4 C=4 D=4" in capsys.readouterr().out


def test_evaluate_no_generated_cases(workdir, capsys):
    assert run(workdir, "--strategy", "ghl", "--repeats", "1") == 0
    gen = workdir / "out" / "mini" / "theme" / "ghl" / "run-0" / "generation.json"
    data = json.loads(gen.read_text())
    data["cases"] = []
    gen.write_text(json.dumps(data))
    code = main(["evaluate", "--config", str(workdir / "config.json"), "--truth", str(workdir / "theme.truth"),
                 "--generated", str(gen)])
    assert code == 2
    assert "no generated cases" in capsys.readouterr().err


def test_cache_stats(workdir, tmp_path, capsys):
    assert main(["cache", "stats", "--cache", str(tmp_path / "fresh.ghlc")]) == 0
    assert capsys.readouterr().out.strip() == "0 completion, 0 embedding"
    assert main(["cache", "stats", "--config", str(workdir / "config.json")]) == 0
    assert capsys.readouterr().out.strip() == "11 completion, 18 embedding"


def test_cache_verify_truncated(workdir, capsys):
    cache = workdir / "cache.ghlc"
    cache.write_bytes(cache.read_bytes()[:-40])
    assert main(["cache", "verify", "--cache", str(cache)]) == 0
    out = capsys.readouterr().out.splitlines()
    completion, embedding = (int(x.split()[0]) for x in out[0].split(", "))
    assert completion + embedding == 11 + 18 - 1
    assert len([ln for ln in out if ln.startswith("warning:")]) == 1


def test_cache_verify_corrupt(workdir, capsys):
    cache = workdir / "cache.ghlc"
    data = cache.read_bytes()
    cache.write_bytes(data.replace(b'"kind":"completion"', b'"kind":"completiom"', 1))
    assert main(["cache", "verify", "--cache", str(cache)]) == 1
    assert "corrupt:" in capsys.readouterr().out


def test_config_overrides_and_snapshot(workdir):
    cfg = load_config(workdir / "config.json")
    assert cfg.datasets == {"mini": "manifest.json"}
    cfg2 = apply_overrides(cfg, repeats=1, threshold=0.8, rounding="raw", out=str(workdir / "x"))
    assert cfg2.execution.repeats == 1 and cfg2.evaluation.mode == "raw"
    snap = json.dumps(cfg2.snapshot())
    assert str(workdir) not in snap and "credential_env" not in snap
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"execution": {"repeats": 0, "mode": "live_record"}}).validate()
