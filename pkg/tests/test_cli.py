import json

import numpy as np
import pytest

from crlab import acceptance, cli
from crlab.config import ConfigError, parse_config

SMALL = """
[model]
dims = [16, 16, 16]
"""

WEBSTER_ID = SMALL + """
[target]
variant = "webster"
[map]
builtin = "identity"
[check]
f1_expected = -0.5
"""

SCALAR_RESCALED = """
conformal_factor = "0.1*sin(2*pi*x)*sin(2*pi*y)"
[model]
kind = "heisenberg_rescaled"
dims = [16, 16, 16]
[target]
variant = "flat_torus"
dim = 1
[map]
components = ["0.1*sin(2*pi*x)*cos(2*pi*y)"]
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path / "out")]
    if config is not None:
        args += ["--config", str(write(tmp_path, config))]
    return cli.run(args)


def summary(tmp_path, command):
    return json.loads((tmp_path / "out" / f"{command}.json").read_text())


def test_default_config_parses():
    cfg = parse_config(cli.default_config_text())
    assert cfg.map_builtin == "projection" and cfg.dims == (32, 32, 32)


@pytest.mark.parametrize("text,fragment", [
    ('[target]\nvariant = "sphere"\n[map]\ncomponents = ["x", "y"]\n', "target needs 3"),
    ('[target]\ndim = 3\n[map]\ncomponents = ["x", "y"]\n', "target needs 3"),
    ("[model]\ndims = [16, 16]\n[map]\nbuiltin = \"projection\"\n", "dims"),
    ('[model]\nkind = "sphere"\n', "kind"),
    ('[bogus]\nx = 1\n', "unknown"),
    ('[map]\nbuiltin = "projection"\ncomponents = ["x", "y"]\n', "exactly one"),
    ('[map]\ncomponents = ["x + z", "y"]\n', "unknown variable"),
    ('[map]\ncomponents = ["sin(", "y"]\n', "offset 4"),
    ('[model]\nkind = "heisenberg_rescaled"\n[map]\nbuiltin = "projection"\n', "conformal_factor"),
    ('[target]\nvariant = "sphere"\n[map]\nbuiltin = "identity"\n', "identity"),
    ('[map]\ncomponents = ["x", "y"]\nlift = [[1, 0], [0, 1]]\n', "lift"),
    ('[model]\nn = "one"\n', "expected int"),
    ("[model\n", "syntax"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_config_builds_sphere_map():
    cfg = parse_config('[model]\ndims = [16, 16, 16]\n[target]\nvariant = "sphere"\n'
                       '[map]\ncomponents = ["0.1*sin(2*pi*x)", "0", "1"]\n')
    phi = cfg.build_map(cfg.grid())
    assert np.allclose(np.sum(phi.values ** 2, axis=0), 1)


def test_refine_doubles_grid():
    cfg = parse_config(SMALL + '[map]\nbuiltin = "projection"\n')
    assert cfg.grid(1).dims == (32, 32, 32)


def test_map_dim_mismatch_exits_1(tmp_path, capsys):
    code = run(tmp_path, "p1", config='[target]\nvariant = "sphere"\n[map]\ncomponents = ["x", "y"]\n')
    assert code == 1
    assert "target needs 3" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert cli.run(["f1", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 1


def test_f1_identity_prints_minus_half(tmp_path, capsys):
    assert run(tmp_path, "f1", config=WEBSTER_ID) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(-0.5, abs=1e-8)
    doc = summary(tmp_path, "f1")
    assert doc["schema"] == 1 and doc["status"] == "ok"
    assert doc["abs_error"] < 1e-8


def test_structure_command(tmp_path):
    assert run(tmp_path, "structure", config=SCALAR_RESCALED) == 0
    doc = summary(tmp_path, "structure")
    assert doc["residuals"]["structure"] < 1e-8
    with np.load(tmp_path / "out" / "structure.npz") as z:
        assert {"torsion", "scal_w", "omega", "reeb", "T1", "vol_density"} <= set(z.files)


def test_p1_command_writes_terms(tmp_path):
    assert run(tmp_path, "p1", config=SCALAR_RESCALED) == 0
    with np.load(tmp_path / "out" / "p1.npz") as z:
        total = z["term_bilaplace"] + z["term_reeb"] + z["term_torsion"] + z["term_curvature"]
        assert np.allclose(total, z["p1"], atol=1e-9)


def test_covariance_check_failure_exits_2(tmp_path, capsys):
    assert run(tmp_path, "covariance", "--scheme", "fd4", config=SCALAR_RESCALED) == 2
    err = capsys.readouterr().err
    assert "covariance" in err and "tolerance" in err
    doc = summary(tmp_path, "covariance")
    assert doc["status"] == "check_failed" and doc["measured"] > doc["tolerance"]


def test_covariance_and_invariance_pass(tmp_path):
    assert run(tmp_path, "covariance", "--refine", "1", config=SCALAR_RESCALED) == 0
    assert summary(tmp_path, "covariance")["rel_error"] < 1e-6
    assert run(tmp_path, "invariance", config=SCALAR_RESCALED) == 0


def test_gradcheck_command(tmp_path):
    assert run(tmp_path, "gradcheck", "--seed", "3", config=SCALAR_RESCALED) == 0
    doc = summary(tmp_path, "gradcheck")
    assert doc["mismatch"] < 1e-6 and doc["gradient_scale"] == -1.0


def test_jet_on_curved_model_is_config_error(tmp_path):
    assert run(tmp_path, "jet", config=SCALAR_RESCALED) == 1


def test_jet_command(tmp_path):
    assert run(tmp_path, "jet", config=SMALL + '[map]\nbuiltin = "projection"\n') == 0
    assert summary(tmp_path, "jet")["max_abs"] == 0.0


FLOW = SMALL + """
[map]
builtin = "projection"
[flow]
step = 1.0
max_steps = 5
preconditioner = true
perturbation = 0.02
"""


def test_flow_outputs_and_determinism(tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.run(["flow", "--config", str(write(tmp_path, FLOW)), "--out", str(out), "--seed", "5"]) == 0
        blobs.append(((out / "flow.csv").read_bytes(), (out / "flow.json").read_bytes()))
        assert (out / "flow.gp").read_text().count("flow.csv") == 2
    assert blobs[0] == blobs[1]
    assert blobs[0][0].startswith(b"iter,f1,p1_norm,tension_norm,step\n")


def test_flow_bad_option_exits_1(tmp_path):
    assert run(tmp_path, "flow", config=SMALL + '[map]\nbuiltin = "projection"\n[flow]\nspeed = 2\n') == 1


def test_internal_error_exits_3(tmp_path, monkeypatch):
    def boom(cfg, args, out):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.HANDLERS, "f1", boom)
    assert run(tmp_path, "f1", config=WEBSTER_ID) == 3


def _fake(passed, expected=False):
    def crit(s):
        return acceptance.CriterionResult("x", "fake", passed, {"v": 1.0}, {"v": 0.5}, expected)
    return crit


@pytest.mark.parametrize("crits,code", [
    ([_fake(True), _fake(False, expected=True)], 0),
    ([_fake(True), _fake(False)], 2),
])
def test_suite_exit_codes(tmp_path, monkeypatch, crits, code):
    monkeypatch.setattr(acceptance, "CRITERIA", crits)
    assert run(tmp_path, "suite") == code
    doc = summary(tmp_path, "suite")
    assert doc["schema"] == 1


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert paths
    for p in paths:
        cfg = parse_config(p.read_text(encoding="utf-8"))
        assert cfg.grid().ndim == cfg.d
