import inspect
import json

import numpy as np
import pytest

from conftest import EQ_K, EQ_TAU, EQ_TD, EQ_TP, rel
from mrftid import cli, errors
from mrftid.lprs import df_predict
from mrftid.mrft import MrftConfig
from mrftid.plant import soiptd
from mrftid.stepfit import write_step_log

PLANT = ["--K", str(EQ_K), "--Tp", str(EQ_TP), "--Td", str(EQ_TD), "--tau", str(EQ_TAU)]
GRID = ["--tp-range", "0.02", "0.3", "--td-range", "0.2", "5", "--n-tp", "10", "--n-td", "24"]
REPORTED = ["--obs=-0.4:0.708", "--obs=-0.7:1.022"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def mdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("manifolds")
    for beta, name in ((-0.4, "m4.json"), (-0.7, "m7.json")):
        assert run("--outdir", d, "gen-manifold", "--beta", beta, *GRID, "--out", name) == 0
    return d


def test_solve_to_stdout(capsys):
    assert run("solve", *PLANT, "--beta", -0.4) == 0
    doc = json.loads(capsys.readouterr().out)
    assert rel(doc["omega_hz"], 0.708) < 0.005
    df = df_predict(soiptd(K=EQ_K, T_p=EQ_TP, T_d=EQ_TD, tau=EQ_TAU), MrftConfig(-0.4))
    assert doc["df_omega_hz"] == df.frequency_hz
    assert doc["config"]["beta"] == -0.4


def test_solve_bad_beta(capsys):
    assert run("solve", *PLANT, "--beta", 1.5) == 2
    assert "InvalidParameter" in capsys.readouterr().err


def test_physical_parameters(capsys):
    assert run("solve", "--Jx", 1 / 1.42, "--Bx", 1, "--kM", 0.14, "--Tp", 0.1, "--tau", 0.06, "--beta", -0.7) == 0
    assert rel(json.loads(capsys.readouterr().out)["omega_hz"], 1.022) < 0.005


def test_missing_plant_flags(capsys):
    assert run("solve", "--K", 1, "--beta", -0.5) == 2
    assert "--Tp" in capsys.readouterr().err


def test_simulate(tmp_path):
    assert run("--outdir", tmp_path, "simulate", *PLANT, "--beta", -0.7, "--duration", 30) == 0
    doc = json.loads((tmp_path / "mrft.json").read_text())
    assert rel(doc["omega_hz"], 1.022) < 0.01
    assert (tmp_path / "mrft.csv").read_text().startswith("# config:")
    assert (tmp_path / "mrft.json.meta.json").exists()


def test_simulate_too_short(tmp_path, capsys):
    assert run("--outdir", tmp_path, "simulate", *PLANT, "--beta", -0.7, "--duration", 3) == 3
    assert "NotConverged" in capsys.readouterr().err


def test_missing_output_directory(tmp_path):
    assert run("--outdir", tmp_path / "nope", "simulate", *PLANT, "--beta", -0.7) == 2


def test_env_default_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path))
    assert run("solve", *PLANT, "--beta", -0.7, "--out", "s.json") == 0
    assert (tmp_path / "s.json").exists()


def test_identify(mdir, tmp_path):
    args = ["--outdir", tmp_path, "identify", *REPORTED, "--Tp", 0.1,
            "--manifold", mdir / "m4.json", "--manifold", mdir / "m7.json", "--out", "id.json"]
    assert run(*args) == 0
    first = (tmp_path / "id.json").read_bytes()
    doc = json.loads(first)
    assert rel(doc["T_d"], 0.704) < 0.05
    assert rel(doc["tau"], 0.060) < 0.03
    assert doc["config"]["Tp"] == 0.1
    assert run(*args) == 0
    assert (tmp_path / "id.json").read_bytes() == first


def test_identify_swapped(mdir, tmp_path):
    code = run("--outdir", tmp_path, "identify", "--obs=-0.4:1.022", "--obs=-0.7:0.708", "--Tp", 0.1,
               "--manifold", mdir / "m4.json", "--manifold", mdir / "m7.json", "--out", "id.json")
    assert code == cli.EXIT_CODES[errors.NoIntersection]


def test_identify_missing_manifold(tmp_path):
    code = run("--outdir", tmp_path, "identify", *REPORTED, "--Tp", 0.1, "--manifold", tmp_path / "x.json", "--out", "o")
    assert code == 2


def test_sensitivity_zero_noise(mdir, tmp_path):
    assert run("--outdir", tmp_path, "sensitivity", *REPORTED, "--Tp", 0.1, "--manifold", mdir / "m4.json",
               "--manifold", mdir / "m7.json", "--sigma", 0, "--n", 4, "--out", "s.json") == 0
    stats = json.loads((tmp_path / "s.json").read_text())["stats"]
    assert stats["T_d"]["std"] == 0.0
    assert stats["tau"]["std"] == 0.0


def test_plotdata_surface_and_slice(mdir, tmp_path):
    assert run("--outdir", tmp_path, "plotdata", "--manifold", mdir / "m7.json", "--out", "surf.csv") == 0
    lines = [ln for ln in (tmp_path / "surf.csv").read_text().splitlines() if not ln.startswith("#")]
    man = json.loads((mdir / "m7.json").read_text())
    feasible = sum(v is not None for row in man["tau"] for v in row)
    assert lines[0] == "T_p,T_d,tau,amp"
    assert len(lines) - 1 == feasible
    assert run("--outdir", tmp_path, "plotdata", "--manifold", mdir / "m7.json", "--omega", 1.022,
               "--slice-tp", 0.1, "--out", "slice.csv") == 0
    rows = np.loadtxt(tmp_path / "slice.csv", delimiter=",", skiprows=2)
    assert rows.shape[1] == 3


def test_fit_step(tmp_path):
    t = np.arange(-0.1, 0.4, 1e-3)
    f = np.where(t >= 0.017, 1 - np.exp(-(t - 0.017) / 0.0422), 0.0)
    write_step_log(t, f, tmp_path / "step.csv")
    assert run("--outdir", tmp_path, "fit-step", "--log", tmp_path / "step.csv", "--out", "fit.json") == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["T_p"] == pytest.approx(0.0422, rel=5e-3)
    write_step_log(t, np.ones_like(t), tmp_path / "flat.csv")
    code = run("--outdir", tmp_path, "fit-step", "--log", tmp_path / "flat.csv", "--out", "fit.json")
    assert code == cli.EXIT_CODES[errors.NoStepDetected]


def error_classes():
    return [c for _, c in inspect.getmembers(errors, inspect.isclass)
            if issubclass(c, errors.MrftError) and c is not errors.MrftError]


def test_exit_code_table_is_exhaustive():
    classes = error_classes()
    assert set(classes) == set(cli.EXIT_CODES)
    assert len(set(cli.EXIT_CODES.values())) == len(classes)
    assert all(code not in (0, 1) for code in cli.EXIT_CODES.values())


@pytest.mark.parametrize("cls", error_classes(), ids=lambda c: c.__name__)
def test_each_error_class_maps_to_its_code(cls, monkeypatch, capsys):
    def boom(*a, **k):
        raise cls("injected")

    monkeypatch.setattr(cli, "solve_limit_cycle", boom)
    assert run("solve", *PLANT, "--beta", -0.7) == cli.EXIT_CODES[cls]
    assert cls.__name__ in capsys.readouterr().err
