import json

import pytest

from tsre.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_OK, EXIT_TOPOLOGY, main


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def samples(tmp_path):
    cfg = write(tmp_path / "g.json", {"graph": {"type": "chain", "n": 6, "mu": 1.0, "lambda": 1.0}})
    out = tmp_path / "s"
    assert main(["sample", "--config", cfg, "--seed", "3", "--count", "2", "--out", str(out)]) == EXIT_OK
    return out


def test_sample_idempotent(samples, tmp_path):
    cfg = write(tmp_path / "g2.json", {"graph": {"type": "chain", "n": 6, "mu": 1.0, "lambda": 1.0}})
    main(["sample", "--config", cfg, "--seed", "3", "--count", "2", "--out", str(tmp_path / "t")])
    for f in sorted(samples.iterdir()):
        assert f.read_bytes() == (tmp_path / "t" / f.name).read_bytes()


def test_canonicalize_and_solve(samples, tmp_path, capsys):
    s = str(samples / "sample_00000.json")
    assert main(["canonicalize", s, "--out", str(tmp_path / "c.json")]) == EXIT_OK
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["diagnostics"]["max_asymmetry"] < 1e-10
    capsys.readouterr()
    assert main(["solve", s]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["gap"] > 0 and res["e0"] < res["e1"]


def test_exit_codes(tmp_path):
    bad = write(tmp_path / "bad.json", {"graph": {"type": "star", "n": 4}})
    assert main(["sample", "--config", bad]) == EXIT_CONFIG
    cfg = write(tmp_path / "k4.json", {"graph": {"type": "custom", "n": 4, "mu": 1.0, "lambda": 0.5,
                                                 "edges": [[1, 2], [2, 3], [3, 4], [4, 1], [1, 3]]}})
    main(["sample", "--config", cfg, "--out", str(tmp_path / "k")])
    assert main(["canonicalize", str(tmp_path / "k" / "sample_00000.json")]) == EXIT_TOPOLOGY
    # identity bonds have degenerate singular values
    chain = write(tmp_path / "c.json", {"graph": {"type": "chain", "n": 3, "mu": 1.0, "lambda": 0.5}})
    main(["sample", "--config", chain, "--out", str(tmp_path / "c")])
    sdoc = json.loads((tmp_path / "c" / "sample_00000.json").read_text())
    for b in sdoc["bonds"]:
        b["matrix"] = [1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0]
    deg = write(tmp_path / "deg.json", sdoc)
    assert main(["canonicalize", deg, "--out", str(tmp_path / "o.json")]) == EXIT_DEGENERATE
    assert main(["sweep", "--preset", "nope"]) == EXIT_CONFIG
    assert main(["analyze", deg, "--config", bad]) == EXIT_CONFIG


def test_sweep_resume_and_analyze(tmp_path):
    cfg = write(tmp_path / "sw.json", {"graph": "chain", "n_list": [4, 6, 8], "lambda_list": [1.0],
                                       "realizations": 4, "master_seed": 2,
                                       "analysis": {"analyses": [
                                           {"kind": "gap_scaling", "lambda": 1.0, "name": "gaps"},
                                           {"kind": "gap_histogram", "n": 6, "bins": 8, "name": "hist"}]}})
    out = tmp_path / "run"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["failures"] == 0
    first = (out / "main.csv").read_bytes()
    lines = (out / "main.jsonl").read_text().splitlines()
    (out / "main.jsonl").write_text("\n".join(lines[:5]) + "\n")
    assert main(["sweep", "--resume", "--out", str(out)]) == EXIT_OK
    assert (out / "main.csv").read_bytes() == first
    hist = (out / "main_analysis" / "hist.txt").read_text().splitlines()
    assert hist[0].split() == ["#", "g_tilde", "empirical_density", "gue_density"]
    assert all(len(line.split()) == 3 for line in hist if not line.startswith("#"))
    spec = write(tmp_path / "spec.json", {"analyses": [{"kind": "gap_scaling", "lambda": 1.0}]})
    assert main(["analyze", str(out / "main.csv"), "--config", spec, "--out", str(tmp_path / "an")]) == EXIT_OK
    fit = json.loads((tmp_path / "an" / "analysis.json").read_text())
    assert "power_law" in next(iter(fit.values()))["fits"]
