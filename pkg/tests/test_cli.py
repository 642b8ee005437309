import csv
import io
import json
import subprocess
import sys
import textwrap

import pytest

from qosgame import cli
from qosgame.admission import network_capacity
from qosgame.efficiency import ExponentialEfficiency


def run(*argv):
    buf = io.StringIO()
    code = cli.main(list(argv), out=buf)
    return code, buf.getvalue()


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SYSTEM = """\
system:
  bandwidth: 5 MHz
  noise_power: 1e-13 W
"""


class TestGammaStar:
    def test_default(self):
        code, text = run("gamma-star", "--output", "json")
        assert code == cli.EXIT_OK
        d = json.loads(text)
        assert d["gamma_star"] == pytest.approx(6.4746, abs=1e-4)
        assert d["f_star"] == pytest.approx(0.857, abs=1e-3)

    def test_human_has_db(self):
        code, text = run("gamma-star")
        assert "8.112 dB" in text

    def test_m2(self, tmp_path):
        s = write(tmp_path, SYSTEM + "efficiency:\n  packet_size: 2 bit\n")
        d = json.loads(run("gamma-star", "--scenario", s, "--output", "json")[1])
        assert d["gamma_star"] == ExponentialEfficiency(2).optimal_sir().gamma_star

    def test_malformed_family(self, tmp_path, capsys):
        s = write(tmp_path, SYSTEM + "efficiency:\n  family: nope\n")
        code, text = run("gamma-star", "--scenario", s)
        assert code == cli.EXIT_CONFIG
        assert text == ""
        assert "efficiency.family" in capsys.readouterr().err


class TestSize:
    def test_three_classes(self):
        code, text = run("size", "--output", "csv")
        rows = [r for r in csv.DictReader(io.StringIO(text)) if r["kind"] == "class"]
        assert [r["label"] for r in rows] == ["A", "B", "C"]
        for r, expect in zip(rows, (0.0198, 0.0718, 0.1848)):
            assert float(r["size"]) == pytest.approx(expect, abs=2e-4)

    def test_identical_users_identical_rows(self, tmp_path):
        s = write(tmp_path, SYSTEM + textwrap.dedent("""\
            users:
              - {label: x, source_rate: 8 kbps, max_delay: 20 ms}
              - {label: y, source_rate: 8 kbps, max_delay: 20 ms}
            """))
        rows = json.loads(run("size", "--scenario", s, "--output", "json")[1])["rows"]
        a, b = ({k: v for k, v in r.items() if k != "label"} for r in rows)
        assert a == b

    def test_zero_rate_user(self, tmp_path):
        s = write(tmp_path, SYSTEM + "users:\n  - {label: z, source_rate: 0 bps, max_delay: 50 ms}\n")
        d = json.loads(run("size", "--scenario", s, "--output", "json")[1])
        g, f = d["gamma_star"], d["f_star"]
        assert d["rows"][0]["size"] == pytest.approx(1 / (1 + 5e6 * 0.05 * f / (100 * g)), rel=1e-12)


class TestEquilibrium:
    def test_default_users_with_brd(self):
        code, text = run("equilibrium", "--verify-brd", "--output", "json")
        assert code == cli.EXIT_OK
        d = json.loads(text)
        assert d["feasible"]
        assert len(d["users"]) == 25
        assert all(u["sir"] == pytest.approx(d["gamma_star"], rel=1e-9) for u in d["users"])
        assert d["brd"]["converged"]
        assert d["brd"]["max_rel_deviation"] < 1e-8

    def test_51_users_infeasible(self, tmp_path):
        s = write(tmp_path, SYSTEM + "users:\n  - {label: A, source_rate: 5 kbps, max_delay: 10 ms, count: 51}\n")
        code, text = run("equilibrium", "--scenario", s)
        assert code == cli.EXIT_INFEASIBLE
        assert text.startswith("infeasible: total size 1.01")
        assert ">= 1" in text

    def test_empty_users(self, tmp_path):
        s = write(tmp_path, SYSTEM)
        assert run("equilibrium", "--scenario", s)[0] == cli.EXIT_CONFIG

    def test_human(self):
        code, text = run("equilibrium", "--verify-brd")
        assert "feasible, total size 0.4962" in text
        assert "max relative power deviation" in text


class TestSweep:
    @pytest.mark.parametrize("fig", ["2", "3"])
    def test_header_units(self, fig):
        code, text = run("sweep", "--figure", fig)
        assert code == cli.EXIT_OK
        header = text.splitlines()[0]
        assert header.startswith("source_rate [bit/s],delay [s],normalized_delay [D*B]")
        assert len(text.splitlines()) == 1 + 3 * 41

    def test_capacity_column_consistent(self):
        rows = list(csv.DictReader(io.StringIO(run("sweep", "--figure", "3")[1])))
        for r in rows:
            phi = float(r["size [1]"])
            # .6g rounding of phi can only matter right at an integer boundary
            assert int(r["capacity [users]"]) in (network_capacity(phi), network_capacity(phi) - 1)

    def test_fig2_utility_increasing(self):
        # json keeps full precision; CSV rounds the flat tail to 6 digits
        rows = json.loads(run("sweep", "--figure", "2", "--output", "json")[1])["rows"]
        for rate in (5e3, 5e4, 1.5e5):
            u = [r["normalized_utility"] for r in rows if r["source_rate"] == rate and r["feasible"]]
            assert len(u) > 10
            assert all(b > a for a, b in zip(u, u[1:]))

    def test_missing_sweep(self, tmp_path):
        s = write(tmp_path, SYSTEM)
        assert run("sweep", "--figure", "2", "--scenario", s)[0] == cli.EXIT_CONFIG


class TestAdmit:
    def test_loss_table(self):
        code, text = run("admit")
        assert code == cli.EXIT_OK
        assert "optimal allocation: A=25, B=0, C=0" in text
        for pct in ("10%", "30%", "38%", "71%", "87%"):
            assert pct in text

    def test_infeasible_candidate(self, tmp_path):
        c = tmp_path / "c.csv"
        c.write_text("A,B,C\n0,14,0\n23,1,0\n")
        code, text = run("admit", "--candidates", str(c), "--output", "json")
        assert code == cli.EXIT_OK
        rows = json.loads(text)["candidates"]
        assert rows[0]["feasible"] is False
        assert rows[0]["total_size"] == pytest.approx(14 * 0.0718, abs=14 * 2e-4)
        assert rows[1]["loss"] == pytest.approx(0.10, abs=0.01)

    def test_yaml_candidates(self, tmp_path):
        c = tmp_path / "c.yaml"
        c.write_text("- [0, 0, 3]\n")
        rows = json.loads(run("admit", "--candidates", str(c), "--output", "json")[1])["candidates"]
        assert rows[0]["loss"] == pytest.approx(0.87, abs=0.01)

    def test_bad_candidates(self, tmp_path):
        c = tmp_path / "c.csv"
        c.write_text("1,2\n")
        assert run("admit", "--candidates", str(c))[0] == cli.EXIT_CONFIG

    def test_single_class_of_size_point_three(self, tmp_path):
        s = write(tmp_path, SYSTEM + "classes:\n  - {label: X, source_rate: 280 kbps, max_delay: 1 s}\n")
        d = json.loads(run("admit", "--scenario", s, "--output", "json")[1])
        assert d["classes"][0]["size"] == pytest.approx(0.3, abs=0.01)
        assert d["optimal"]["allocation"] == [2]

    def test_user_pool(self, tmp_path):
        s = write(tmp_path, SYSTEM + textwrap.dedent("""\
            users:
              - {label: a, source_rate: 280 kbps, max_delay: 1 s}
              - {label: b, source_rate: 280 kbps, max_delay: 1 s}
              - {label: c, source_rate: 280 kbps, max_delay: 1 s}
            """))
        d = json.loads(run("admit", "--scenario", s, "--output", "json")[1])
        assert d["admitted"] == [0, 1]


class TestValidate:
    def test_class_a_user_passes(self, tmp_path):
        s = write(tmp_path, SYSTEM + "users:\n  - {label: A, source_rate: 5 kbps, max_delay: 10 ms}\nseed: 7\n")
        code, text = run("validate", "--scenario", s, "--packets", "1000000", "--output", "json")
        assert code == cli.EXIT_OK
        row = json.loads(text)["rows"][0]
        assert row["analytic"] == pytest.approx(0.010, rel=1e-9)
        assert row["empirical"] == pytest.approx(0.010, abs=3e-4)

    @pytest.mark.slow
    def test_near_unstable(self, tmp_path):
        # lam * tau = 50 * 0.01 = 0.5, success probability 1.01 times that
        s = write(tmp_path, SYSTEM + textwrap.dedent("""\
            users:
              - {label: n, source_rate: 5 kbps, max_delay: 1 s, rate: 10 kbps, success_prob: 0.505}
            seed: 3
            """))
        code, text = run("validate", "--scenario", s, "--packets", "10000000", "--output", "json")
        row = json.loads(text)["rows"][0]
        assert row["analytic"] > 0.5  # about 100 service times
        assert code == cli.EXIT_OK, row

    def test_unstable_reported_not_simulated(self, tmp_path):
        s = write(tmp_path, SYSTEM + textwrap.dedent("""\
            users:
              - {label: n, source_rate: 5 kbps, max_delay: 1 s, rate: 10 kbps, success_prob: 0.4}
            """))
        code, text = run("validate", "--scenario", s, "--packets", "1000")
        assert code == cli.EXIT_VALIDATION
        assert "not simulated" in text

    def test_bad_packets(self):
        assert run("validate", "--packets", "0")[0] == cli.EXIT_CONFIG


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ("gamma-star", "--output", "json"),
            ("size", "--output", "csv"),
            ("equilibrium", "--output", "json"),
            ("sweep", "--figure", "3"),
            ("admit", "--output", "csv"),
            ("validate", "--packets", "20000", "--output", "json"),
            ("validate", "--packets", "20000"),
        ],
    )
    def test_byte_identical(self, argv):
        assert run(*argv) == run(*argv)


class TestEntryPoint:
    def test_env_scenario_dir(self, tmp_path, monkeypatch):
        write(tmp_path, SYSTEM + "efficiency:\n  packet_size: 10 bit\n", name="default.yaml")
        monkeypatch.setenv("QOSGAME_SCENARIO_DIR", str(tmp_path))
        d = json.loads(run("gamma-star", "--output", "json")[1])
        assert d["packet_size_bits"] == 10

    def test_module_invocation(self):
        p = subprocess.run(
            [sys.executable, "-m", "qosgame", "gamma-star", "--output", "csv"],
            capture_output=True, text=True, check=False,
        )
        assert p.returncode == 0
        assert p.stdout.startswith("family,packet_size_bits,gamma_star,f_star\n")

    def test_output_flag_after_subcommand_or_before(self):
        assert run("--output", "json", "gamma-star") == run("gamma-star", "--output", "json")
