import json
import subprocess
import sys

import pytest

from hfconv.analysis import find_oscillating_seed
from hfconv.cli import main, parse_preset, InputError

DIMER = "hubbard-ring:L=2,t=1,U=2,N=2"


def summary(path):
    return json.loads((path / "summary.json").read_text())


def test_run_dimer(tmp_path):
    assert main(["run", "--preset", DIMER, "--algorithm", "roothaan", "--out", str(tmp_path)]) == 0
    doc = summary(tmp_path)
    assert abs(doc["energy"] - (-1.0)) <= 1e-10
    assert doc["status"] == "converged" and doc["exit_code"] == 0
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "k,energy,grad_norm,dd1,dd2,gap,lyapunov,step"


@pytest.mark.parametrize("algorithm", ["gradient", "level-shifting", "auto-shift"])
def test_run_dimer_other_algorithms(tmp_path, algorithm):
    args = ["run", "--preset", DIMER, "--algorithm", algorithm, "--b", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    assert abs(summary(tmp_path)["energy"] + 1.0) <= 1e-10


def test_unreadable_system_file(tmp_path, capsys):
    assert main(["run", "--system", str(tmp_path / "missing.fcidump"), "--out", str(tmp_path)]) == 1
    assert "cannot read" in capsys.readouterr().err
    assert not (tmp_path / "summary.json").exists()


def test_malformed_fcidump_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.fcidump"
    bad.write_text("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n 0.5 1 1 1 1\n 0.5 1 1\n")
    assert main(["run", "--system", str(bad), "--out", str(tmp_path)]) == 1
    assert f"{bad}:4:" in capsys.readouterr().err


def test_oscillating_exit_code(tmp_path):
    seed, _, _ = find_oscillating_seed()
    preset = f"random:seed={seed},n=6,N=3,scale=1.0"
    assert main(["run", "--preset", preset, "--algorithm", "roothaan", "--out", str(tmp_path)]) == 2
    assert summary(tmp_path)["status"] == "oscillating"
    assert main(["run", "--preset", preset, "--algorithm", "auto-shift", "--out", str(tmp_path)]) == 0
    assert summary(tmp_path)["b"] > 0


def test_max_iterations_exit_code(tmp_path):
    args = ["run", "--preset", "random:seed=0,n=6,N=3", "--algorithm", "gradient", "--max-iter", "2", "--out", str(tmp_path)]
    assert main(args) == 3


def test_well_posedness_exit_code(tmp_path):
    # zero-interaction ring with a degenerate frontier: no aufbau projector exists
    assert main(["run", "--preset", "hubbard-ring:L=4,t=1,U=0,N=4", "--out", str(tmp_path)]) == 4


def test_input_errors(tmp_path):
    out = ["--out", str(tmp_path)]
    assert main(["run", "--preset", "lattice:L=2"] + out) == 1
    assert main(["run", "--preset", "hubbard-ring:L=2,t=1"] + out) == 1
    assert main(["run", "--preset", "hubbard-ring:L=2,t=x,U=1,N=2"] + out) == 1
    assert main(["run", "--preset", DIMER, "--algorithm", "level-shifting"] + out) == 1
    assert main(["run", "--preset", DIMER, "--algorithm", "gradient", "--step", "fixed"] + out) == 1
    assert main(["run", "--preset", "hubbard-ring:L=3,t=1,U=1,N=3"] + out) == 1
    with pytest.raises(SystemExit):
        main(["run", "--preset", DIMER, "--system", "x"])


def test_preset_conventions():
    assert parse_preset(DIMER).convention.value == "rhf"
    assert parse_preset("random:seed=1,n=4,N=2").convention.value == "spinless"
    assert parse_preset("random:seed=1,n=4,N=2", "rhf").n_occ == 1
    with pytest.raises(InputError):
        parse_preset("random:seed=1,n=4,N=2,bogus=3")


def test_convert_then_run_is_bitwise_identical(tmp_path, data_dir):
    native = tmp_path / "small4.json"
    assert main(["convert", str(data_dir / "small4.FCIDUMP"), str(native)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--system", str(data_dir / "small4.FCIDUMP"), "--seed", "1", "--out", str(a)]) == 0
    assert main(["run", "--system", str(native), "--seed", "1", "--out", str(b)]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    sa, sb = summary(a), summary(b)
    sa.pop("source"), sb.pop("source")
    assert sa == sb


def test_convert_errors(tmp_path):
    assert main(["convert", str(tmp_path / "none"), str(tmp_path / "x.json")]) == 1
    bad = tmp_path / "bad"
    bad.write_text("&FCI NORB=1,NELEC=2,MS2=1,\n&END\n")
    assert main(["convert", str(bad), str(tmp_path / "x.json")]) == 1


def test_outputs_are_byte_identical_across_runs(tmp_path):
    for name in ("a", "b"):
        args = ["run", "--preset", "random:seed=4,n=6,N=2", "--algorithm", "gradient", "--seed", "4",
                "--store-iterates", "--out", str(tmp_path / name)]
        assert main(args) == 0
    for f in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert summary(tmp_path / "a")["tail_errors"]


def test_sweep_shift(tmp_path):
    args = ["sweep-shift", "--preset", "hubbard-ring:L=6,t=1,U=4,N=6", "--seed", "0", "--jobs", "2",
            "--b-grid", "8,16,32,64,128,256", "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert -1.15 <= doc["slope"] <= -0.85
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "b,status,iterations,energy,nu,nu_r2" and len(rows) == 7


def test_sweep_with_failing_shift_writes_partial_csv(tmp_path):
    args = ["sweep-shift", "--preset", "hubbard-ring:L=6,t=1,U=4,N=6", "--seed", "0",
            "--b-grid", "8,256", "--max-iter", "300", "--out", str(tmp_path)]
    assert main(args) != 0
    rows = [line.split(",") for line in (tmp_path / "sweep.csv").read_text().splitlines()]
    assert rows[0][1] == "status"
    assert [r[1] for r in rows[1:]] == ["converged", "max_iterations"]
    assert json.loads((tmp_path / "sweep_summary.json").read_text())["failed_b"] == [256.0]


def test_compare(tmp_path):
    args = ["compare", "--preset", "hubbard-ring:L=6,t=1,U=1,N=6", "--seed", "0", "--out", str(tmp_path)]
    assert main(args) == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0] == "name,status,iterations,iterations_to_tol,energy,nu,nu_r2"
    rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
    assert int(rows["roothaan"][3]) < int(rows["gradient-alpha"][3])
    assert abs(float(rows["roothaan"][4]) - float(rows["gradient-alpha"][4])) <= 1e-8


def test_compare_unknown_algorithm(tmp_path):
    assert main(["compare", "--preset", DIMER, "--algorithms", "newton", "--out", str(tmp_path)]) == 1


def test_probe_on_quartic_trace(tmp_path, data_dir):
    args = ["probe-loja", "--trace", str(data_dir / "quartic_trace.csv"), "--e-inf", "0", "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "loja.json").read_text())
    assert abs(doc["theta"] - 0.25) <= 1e-6


def test_probe_on_preset_run(tmp_path):
    args = ["probe-loja", "--preset", "hubbard-ring:L=6,t=1,U=4,N=6", "--seed", "0", "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "loja.json").read_text())
    assert abs(doc["theta"] - 0.5) <= 0.05 and doc["status"] == "converged"


def test_probe_insufficient_data(tmp_path):
    trace = tmp_path / "short.csv"
    trace.write_text("k,energy,grad_norm\n0,1.0,1.0\n1,0.5,0.5\n")
    assert main(["probe-loja", "--trace", str(trace), "--out", str(tmp_path)]) == 5


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hfconv.cli", "run", "--preset", DIMER, "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "converged" in proc.stdout
