import json
import math
from pathlib import Path

import numpy as np
import pytest

from zicount.cli import EXIT_NUMERIC, EXIT_OK, EXIT_PARSE, EXIT_USAGE, main
from zicount.tables import read_table

DATA = Path(__file__).parent / "data"


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def hurdle_file(tmp_path):
    path = tmp_path / "h.csv"
    values = [0] * 7 + [2, 2, 2]
    path.write_text("feature," + ",".join(f"s{i}" for i in range(10)) + "\nx," +
                    ",".join(map(str, values)) + "\n")
    return path


def compare_json(got, want, path="$"):
    if isinstance(want, dict):
        assert set(got) == set(want), path
        for k in want:
            compare_json(got[k], want[k], f"{path}.{k}")
    elif isinstance(want, list):
        assert len(got) == len(want), path
        for i, (g, w) in enumerate(zip(got, want)):
            compare_json(g, w, f"{path}[{i}]")
    elif isinstance(want, float) and not isinstance(got, bool):
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9), path
    else:
        assert got == want, path


class TestFit:
    def test_hurdle_phi_in_output(self, hurdle_file, capsys):
        code, out, _ = run(["fit", hurdle_file, "--family", "poisson", "--kind", "hurdle"], capsys)
        assert code == EXIT_OK
        assert "phi" in out and "0.7" in out
        assert "1.59362" in out

    def test_json(self, hurdle_file, capsys):
        code, out, _ = run(["fit", hurdle_file, "--family", "poisson", "--kind", "hurdle",
                            "--format", "json"], capsys)
        doc = json.loads(out)
        assert code == EXIT_OK and doc["estimates"]["phi"] == 0.7

    def test_golden(self, capsys):
        code, out, _ = run(["fit", DATA / "zinb_fixture.csv", "--family", "nb", "--kind", "zi",
                            "--format", "json"], capsys)
        assert code == EXIT_OK
        want = json.loads((DATA / "zinb_fit_golden.json").read_text())
        compare_json(json.loads(out), want)

    def test_empty_file(self, tmp_path, capsys):
        (tmp_path / "e.csv").write_text("")
        code, _, err = run(["fit", tmp_path / "e.csv", "--family", "poisson"], capsys)
        assert code == EXIT_PARSE and "empty" in err

    def test_parse_error_line(self, tmp_path, capsys):
        (tmp_path / "b.csv").write_text("id,a,b\nf,1,-2\n")
        code, _, err = run(["fit", tmp_path / "b.csv", "--family", "poisson"], capsys)
        assert code == EXIT_PARSE and "line 2" in err

    @pytest.mark.parametrize("argv", [
        ["--family", "gamma"],
        ["--family", "nb", "--kind", "mixture"],
        ["--family", "nb", "--level", "1.5"],
        ["--family", "nb", "--max-iter", "0"],
    ])
    def test_usage_errors(self, hurdle_file, capsys, argv):
        code, _, _ = run(["fit", hurdle_file, *argv], capsys)
        assert code == EXIT_USAGE

    def test_missing_feature(self, capsys):
        code, _, err = run(["fit", DATA / "toy_table.csv", "--family", "poisson"], capsys)
        assert code == EXIT_USAGE
        code, _, _ = run(["fit", DATA / "toy_table.csv", "--family", "poisson", "--feature", "nope"],
                         capsys)
        assert code == EXIT_USAGE

    def test_all_zero_feature_is_numeric_failure(self, tmp_path, capsys):
        (tmp_path / "z.csv").write_text("id,a,b\nf,0,0\n")
        code, _, _ = run(["fit", tmp_path / "z.csv", "--family", "poisson", "--kind", "zi"], capsys)
        assert code == EXIT_NUMERIC


class TestSimulate:
    def test_round_trip(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code, _, _ = run(["simulate", "--family", "bnb", "--kind", "hurdle", "--params",
                          "r=2,alpha=3,beta=2", "--phi", "0.4", "--n", "50", "--features", "3",
                          "--seed", "9", "--out", out], capsys)
        assert code == EXIT_OK
        table = read_table(out)
        assert table.counts.shape == (3, 50)
        code, stdout, _ = run(["simulate", "--family", "bnb", "--kind", "hurdle", "--params",
                               "r=2,alpha=3,beta=2", "--phi", "0.4", "--n", "50", "--features", "3",
                               "--seed", "9"], capsys)
        assert stdout == out.read_text()

    def test_phi_one_gives_zeros(self, tmp_path, capsys):
        out = tmp_path / "z.csv"
        run(["simulate", "--family", "poisson", "--kind", "zi", "--params", "lambda=4", "--phi", "1",
             "--n", "30", "--features", "2", "--out", out], capsys)
        assert not read_table(out).counts.any()

    def test_hurdle_zero_fraction(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        run(["simulate", "--family", "poisson", "--kind", "hurdle", "--params", "lambda=2",
             "--phi", "0.7", "--n", "100000", "--seed", "3", "--out", out], capsys)
        counts = read_table(out).counts[0]
        assert abs(np.mean(counts == 0) - 0.7) <= 0.007

    @pytest.mark.parametrize("argv", [
        ["--family", "nb", "--kind", "zi", "--params", "r=1,p=0.5", "--n", "5"],
        ["--family", "nb", "--params", "r=1,q=0.5", "--n", "5"],
        ["--family", "nb", "--params", "r=-1,p=0.5", "--n", "5"],
        ["--family", "nb", "--kind", "zi", "--params", "r=1,p=0.5", "--phi", "2", "--n", "5"],
        ["--family", "nb", "--params", "r=1,p=0.5", "--n", "5", "--seed", "-1"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, _, _ = run(["simulate", *argv], capsys)
        assert code == EXIT_USAGE


class TestGof:
    def test_byte_identical(self, tmp_path, capsys):
        args = ["gof", DATA / "zinb_fixture.csv", "--family", "nb", "--kind", "zi",
                "--bootstrap", "19", "--seed", "5"]
        a = run(args + ["--jobs", "1"], capsys)
        b = run(args + ["--jobs", "2"], capsys)
        assert a[0] == EXIT_OK and a[1] == b[1]
        assert "p-value" in a[1]

    def test_lattice(self, capsys):
        code, out, _ = run(["gof", DATA / "zinb_fixture.csv", "--family", "nb", "--kind", "zi",
                            "--bootstrap", "99", "--format", "json", "--jobs", "1"], capsys)
        doc = json.loads(out)
        k = doc["p_value"] * (doc["successful_replicates"] + 1)
        assert k == pytest.approx(round(k), abs=1e-9)


class TestScan:
    def test_toy_table(self, tmp_path, capsys):
        code, out, _ = run(["scan", DATA / "toy_table.csv", "--models", "poisson,ph,nbh",
                            "--bootstrap", "9", "--jobs", "1", "--out", tmp_path], capsys)
        assert code == EXIT_OK
        report = json.loads((tmp_path / "scan_report.json").read_text())
        assert report["n_features"] == 3
        assert len(report["records"]) == 9
        assert {r["feature_id"] for r in report["records"]} == {
            "Streptococcus pneumoniae", "Escherichia coli", "Staphylococcus aureus"}
        assert "Poisson hurdle (PH)" in out
        assert (tmp_path / "scan_features.csv").read_text().count("\n") == 10

    def test_poisson_rejected_on_overdispersed_data(self, tmp_path, capsys):
        table = tmp_path / "nb.csv"
        run(["simulate", "--family", "nb", "--params", "r=0.5,p=0.9", "--n", "200",
             "--features", "20", "--seed", "1", "--out", table], capsys)
        run(["scan", table, "--models", "poisson", "--bootstrap", "19", "--out", tmp_path / "o"],
            capsys)
        report = json.loads((tmp_path / "o" / "scan_report.json").read_text())
        assert report["aggregate"][0]["percent"] <= 5.0

    def test_aggregate_consistency(self, tmp_path, capsys):
        run(["scan", DATA / "toy_table.csv", "--models", "zip,ph", "--bootstrap", "9",
             "--alpha", "0.1", "--out", tmp_path], capsys)
        report = json.loads((tmp_path / "scan_report.json").read_text())
        for row in report["aggregate"]:
            recs = [r for r in report["records"] if r["model"] == row["model"]]
            passing = sum(r["p_value"] is not None and r["p_value"] > 0.1 for r in recs)
            assert row["passing"] == passing <= report["n_features"]
            assert math.isclose(row["percent"], 100 * passing / 3)

    def test_bad_model(self, tmp_path, capsys):
        code, _, _ = run(["scan", DATA / "toy_table.csv", "--models", "zig", "--out", tmp_path],
                         capsys)
        assert code == EXIT_USAGE
