import json

import numpy as np
import pytest

from quadnorm_kit.cli import main
from quadnorm_kit.fieldio import read_csv_table, read_field


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_weights_trapezoid(capsys):
    code, out, _ = run(capsys, "weights", "--rule", "trapezoid", "--n", "3")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1] == "0.25,0.5,0.25"


def test_weights_json(capsys):
    code, out, _ = run(capsys, "weights", "--n", "3,2", "--format", "json")
    doc = json.loads(out)
    assert doc["weights"] == [[0.125, 0.125], [0.25, 0.25], [0.125, 0.125]]
    assert doc["config"]["n"] == [3, 2]


def test_consistency_summary_and_roundtrip(tmp_path, capsys):
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "consistency", "--field", "quadratic1d", "--rule", "uniform",
                     "--ladder", "17,33,65,129,257", "-o", str(out))
    assert code == 0
    cfg, rows, summary = read_csv_table(out)
    assert summary["fitted_order"] == pytest.approx(1.0, abs=0.05)
    assert len(rows) == 4 and cfg["rule"] == "uniform"
    # re-running from the file's own config reproduces the summary exactly
    again = tmp_path / "again.csv"
    assert main(["consistency", "--config", str(out), "-o", str(again)]) == 0
    assert read_csv_table(again)[2] == summary
    assert again.read_text() == out.read_text()


def test_consistency_output_kind(capsys):
    code, out, _ = run(capsys, "consistency", "--field", "mixed2d", "--kind", "output", "--method", "quadnorm",
                       "--ladder", "17,33,65", "--channels", "2")
    assert code == 0
    _, _, summary = read_csv_table(out)
    assert summary["fitted_order"] > 1.7


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["weights", "--bogus"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["nosuchcommand"])
    assert e.value.code == 2
    code, _, err = run(capsys, "weights")
    assert code == 2 and "--n" in err
    code, _, err = run(capsys, "weights", "--rule", "boole", "--n", "4")
    assert code == 2 and "divisible" in err


def test_sample_moments_normalize_resample(tmp_path, capsys):
    f = tmp_path / "f.qnkf"
    assert main(["sample", "--field", "mixed2d", "--n", "9,9", "--channels", "2", "--out", str(f)]) == 0
    capsys.readouterr()
    assert read_field(f).shape == (1, 2, 9, 9)
    code, out, _ = run(capsys, "moments", "--input", str(f), "--pattern", "instance")
    _, rows, _ = read_csv_table(out)
    assert len(rows) == 2 and rows[0]["variance"] > 0
    g = tmp_path / "g.qnkf"
    code, out, _ = run(capsys, "normalize", "--input", str(f), "--method", "quadnorm", "--mode", "instance", "--epsilon", "0", "--out", str(g))
    _, rows, _ = read_csv_table(out)
    assert abs(rows[0]["weighted_mean"]) < 1e-12
    h = tmp_path / "h.qnkf"
    code, _, _ = run(capsys, "resample", "--input", str(f), "--target-n", "17,17", "--out", str(h))
    assert code == 0
    np.testing.assert_allclose(read_field(h)[..., ::2, ::2], read_field(f), atol=1e-14)


def test_meshbias_and_opsim(capsys):
    code, out, _ = run(capsys, "meshbias", "--strengths", "3", "--n", "64")
    _, rows, _ = read_csv_table(out)
    assert rows[0]["reduction_factor"] >= 100
    code, out, _ = run(capsys, "opsim", "gap", "--seed", "7", "--norms", "layernorm,quadnorm", "--targets", "33,65")
    cfg, rows, summary = read_csv_table(out)
    assert cfg["command"] == "opsim gap" and cfg["seed"] == 7
    assert len(rows) == 4 and "quadnorm_slope" in summary
    code, out, _ = run(capsys, "opsim", "depth", "--depths", "1,2", "--norms", "quadnorm")
    assert code == 0 and len(read_csv_table(out)[1]) == 2


def test_stats_battery(tmp_path, capsys):
    r = np.random.default_rng(1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("seed,error\n" + "".join(f"{s},{10 + r.normal()}\n" for s in range(10)))
    b.write_text("".join(f"{s},{8 + r.normal()}\n" for s in reversed(range(10))))
    code, out, _ = run(capsys, "stats", str(a), str(b), "--resamples", "2000", "--seed", "3")
    assert code == 0
    cfg, rows, _ = read_csv_table(out)
    vals = {row["metric"]: row["value"] for row in rows}
    assert vals["ci_method"] == "percentile" and vals["n"] == 10
    assert vals["ci_lo"] <= vals["improvement"] <= vals["ci_hi"]
    code, out2, _ = run(capsys, "stats", str(a), str(b), "--resamples", "2000", "--seed", "3")
    assert out2 == out


def test_stats_bad_input(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("1,2.0\n1,3.0\n")
    code, _, err = run(capsys, "stats", str(a), str(a))
    assert code == 2 and "duplicate" in err


def test_verify_all_subset(tmp_path, capsys):
    code, out, _ = run(capsys, "verify-all", "--criteria", "1,2,5", "--output", str(tmp_path))
    assert code == 0
    assert out.count("[PASS]") == 3
    assert sorted(p.name for p in tmp_path.iterdir()) == ["criterion_01.csv", "criterion_02.csv", "criterion_05.csv", "summary.csv"]


def test_verify_all_failure_exit_code(monkeypatch, capsys):
    from quadnorm_kit import acceptance

    monkeypatch.setitem(acceptance.CRITERIA, 2, ("forced failure", lambda seed: (False, "forced", []), None))
    code, out, _ = run(capsys, "verify-all", "--criteria", "2")
    assert code == 1 and "[FAIL]" in out
