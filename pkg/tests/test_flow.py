import csv

import numpy as np
import pytest

from crlab.acceptance import flow_start, random_trig
from crlab.flow import FlowConfig, FlowTrace, gradient_flow, horizontal_energy, subharmonic_flow
from crlab.grid import GridSpec
from crlab.mapcalc import MapField
from crlab.structure import heisenberg, solve_structure
from crlab.target import embedded_sphere_2


@pytest.fixture(scope="module")
def setup():
    spec = GridSpec((16, 16, 16))
    return spec, solve_structure(heisenberg(1, spec))


def sphere_start(spec, seed):
    rng = np.random.default_rng(seed)
    w = np.stack([random_trig(spec, rng, amp=0.05, axes=(0, 1)) for _ in range(3)])
    w[2] += 1
    return MapField(embedded_sphere_2(), w / np.sqrt(np.sum(w * w, axis=0)))


@pytest.mark.parametrize("precondition", [False, True])
def test_f1_never_increases(setup, precondition):
    spec, S = setup
    cfg = FlowConfig(step=1.0 if precondition else 1e-4, max_steps=15, preconditioner=precondition)
    _, trace = gradient_flow(flow_start(spec, 3), S, cfg)
    F = trace.column("f1")
    assert np.all(np.diff(F) <= 0)
    assert F[-1] < F[0]


def test_preconditioned_flow_reaches_projection(setup):
    spec, S = setup
    cfg = FlowConfig(step=1.0, max_steps=50, preconditioner=True, stop_tol=1e-9)
    phi, trace = gradient_flow(flow_start(spec, 3), S, cfg)
    norms = trace.column("p1_norm")
    assert norms[-1] < norms[0] / 10
    assert trace.stopped_by == "stop_tol"


def test_sphere_flow_descends(setup):
    spec, S = setup
    cfg = FlowConfig(step=1.0, max_steps=10, preconditioner=True)
    phi, trace = gradient_flow(sphere_start(spec, 1), S, cfg)
    assert np.all(np.diff(trace.column("f1")) <= 0)
    assert np.allclose(np.sum(phi.values ** 2, axis=0), 1, atol=1e-12)


def test_subharmonic_flow_reduces_energy(setup):
    spec, S = setup
    phi0 = sphere_start(spec, 2)
    cfg = FlowConfig(step=1.0, max_steps=10, preconditioner=True)
    phi, trace = subharmonic_flow(phi0, S, cfg)
    assert horizontal_energy(phi, S) < horizontal_energy(phi0, S)
    tau = trace.column("tension_norm")
    assert tau[-1] < tau[0]
    assert np.all(np.isfinite(trace.column("reeb_norm")))


def test_trace_csv(setup, tmp_path):
    spec, S = setup
    _, trace = gradient_flow(flow_start(spec, 3), S, FlowConfig(step=1.0, max_steps=3, preconditioner=True))
    path = tmp_path / "flow.csv"
    trace.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "f1", "p1_norm", "tension_norm", "step"]
    assert len(rows) == len(trace) + 1
    assert float(rows[1][1]) == trace.records[0].f1


def test_flow_is_deterministic(setup, tmp_path):
    spec, S = setup
    cfg = FlowConfig(step=1.0, max_steps=4, preconditioner=True)
    outs = []
    for k in range(2):
        _, trace = gradient_flow(flow_start(spec, 7), S, cfg)
        trace.write_csv(tmp_path / f"{k}.csv")
        outs.append((tmp_path / f"{k}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_zero_steps_records_initial_state(setup):
    spec, S = setup
    _, trace = gradient_flow(flow_start(spec, 1), S, FlowConfig(max_steps=0))
    assert len(trace) == 1 and trace.records[0].iteration == 0


@pytest.mark.parametrize("kw", [{"step": 0}, {"stop_tol": -1}, {"max_steps": -1}])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        FlowConfig(**kw)


def test_empty_trace_column():
    assert FlowTrace().column("f1").size == 0
