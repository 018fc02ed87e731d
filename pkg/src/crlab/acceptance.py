"""Acceptance checks shared by the test-suite and the ``suite`` command.

Every check returns a :class:`CriterionResult` carrying the measured values
and the tolerances they are compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mapcalc as mc
from .extension import residual_ratios, solve_jet
from .flow import FlowConfig, gradient_flow
from .grid import GridSpec, coordinate_frame, derivative, exterior_derivative, integrate, l2_norm
from .mapcalc import MapField
from .paneitz import (
    LITERAL_GRADIENT_SCALE,
    covariance_check,
    directional_derivative,
    f1,
    gradient_check,
    invariance_check,
    p1,
    pairing,
)
from .structure import conformal_rescale, flat_heisenberg, heisenberg, solve_structure
from .target import embedded_sphere_2, flat_torus, webster_metric

TWO_PI = 2 * math.pi


@dataclass
class CriterionResult:
    number: str
    name: str
    passed: bool
    measured: dict
    tolerance: dict
    expected_failure: bool = False
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else ("XFAIL" if self.expected_failure else "FAIL")
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tols = ", ".join(f"{k}<={_fmt(v)}" if not isinstance(v, str) else f"{k}:{v}"
                         for k, v in self.tolerance.items())
        return f"[{status}] criterion {self.number}: {self.name} | {vals} | {tols}"

    def as_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": bool(self.passed),
                "expected_failure": self.expected_failure, "measured": self.measured,
                "tolerance": self.tolerance, "note": self.note}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class SuiteSettings:
    n1_dims: int = 32
    covariance_dims: int = 64
    fd4_dims: tuple = (16, 32, 64)
    n2_dims: int = 10
    gradient_dims: int = 32
    flow_dims: int = 32
    flow_steps: int = 500
    seed: int = 0
    cache: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "SuiteSettings":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()
              if k in cls.__dataclass_fields__ and k != "cache"}
        out = cls(**kw)
        if seed is not None:
            out.seed = seed
        return out


# ---------------------------------------------------------------- fixtures

def cube(n: int, d: int = 3, scheme: str = "spectral") -> GridSpec:
    return GridSpec((n,) * d, scheme=scheme)


def projection_map(spec: GridSpec) -> MapField:
    lift = np.zeros((2, spec.ndim))
    lift[0, 0] = lift[1, 1] = 1
    return MapField(flat_torus(2), np.zeros((2,) + spec.dims), lift)


def identity_map(spec: GridSpec) -> MapField:
    return MapField(webster_metric(), np.zeros((3,) + spec.dims), np.eye(3))


def random_trig(spec: GridSpec, rng, kmax: int = 1, amp: float = 0.1, axes=None) -> np.ndarray:
    """Real trigonometric polynomial with modes ``|k_i| <= kmax`` on the chosen axes."""
    axes = range(spec.ndim) if axes is None else axes
    axes = list(axes)
    out = np.zeros(spec.dims)
    for k in np.ndindex(*([2 * kmax + 1] * len(axes))):
        phase = 0.0
        for a, ki in zip(axes, k):
            phase = phase + (ki - kmax) * spec.coord(a)
        out = out + amp * rng.normal() * np.cos(TWO_PI * phase + rng.uniform(0, TWO_PI))
    return out


def horizontal_axes(spec: GridSpec):
    return range(spec.ndim - 1)


def bump(spec: GridSpec, eps: float = 0.1) -> np.ndarray:
    """``eps sin(2 pi x) sin(2 pi y)`` on a three-dimensional grid."""
    return eps * np.sin(TWO_PI * spec.coord(0)) * np.sin(TWO_PI * spec.coord(1)) + np.zeros(spec.dims)


def generic_scalar(spec: GridSpec) -> MapField:
    """Fixed t-independent scalar map used by the covariance studies."""
    x, y = spec.coord(0), spec.coord(1)
    f = (0.1 * np.sin(TWO_PI * x) * np.cos(TWO_PI * y) + 0.1 * np.cos(TWO_PI * x)
         + 0.05 * np.sin(TWO_PI * (x + 2 * y)))
    return MapField(flat_torus(1), (f + np.zeros(spec.dims))[None])


def composed_paneitz(f: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``-(L^2 f) - f_tt`` with ``L = -(X^2 + Y^2)``, built directly from coordinate derivatives."""
    y = spec.coord(1)

    def X(g):
        return derivative(g, spec, 0) + y * derivative(g, spec, 2)

    def Y(g):
        return derivative(g, spec, 1)

    def L(g):
        return -(X(X(g)) + Y(Y(g)))

    return -L(L(f)) - derivative(derivative(f, spec, 2), spec, 2)


def flat_structure(spec: GridSpec):
    return solve_structure(heisenberg(1, spec))


def rescaled_structure(spec: GridSpec, eps: float = 0.1):
    return solve_structure(conformal_rescale(heisenberg(1, spec), bump(spec, eps)))


# ---------------------------------------------------------------- criteria

def criterion_1(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    F = f1(identity_map(spec), flat_structure(spec))
    return CriterionResult("1", "F1(identity) = -Vol/2", abs(F + 0.5) <= 1e-8,
                           {"F1": F, "abs_error": abs(F + 0.5)}, {"abs_error": 1e-8})


def criterion_2(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    P = p1(projection_map(spec), flat_structure(spec))
    m = float(np.max(np.abs(P)))
    return CriterionResult("2", "projection is CR-harmonic", m <= 1e-10,
                           {"P1_sup": m}, {"P1_sup": 1e-10})


def criterion_3(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    P = p1(identity_map(spec), flat_structure(spec))
    m = float(np.max(np.abs(P)))
    return CriterionResult("3", "identity into the Webster metric is CR-harmonic", m <= 1e-8,
                           {"P1_sup": m}, {"P1_sup": 1e-8})


def _covariance_data(s: SuiteSettings) -> dict:
    if "covariance" in s.cache:
        return s.cache["covariance"]
    out = {}
    spec = cube(s.n1_dims)
    phi = generic_scalar(spec)
    cf = heisenberg(1, spec)
    S = solve_structure(cf)
    P = p1(phi, S)
    F = f1(phi, S)
    const_cov, const_inv, slopes = [], [], []
    for c in (0.1, 0.2, 0.3):
        u = np.full(spec.dims, c)
        Sh = solve_structure(conformal_rescale(cf, u))
        Ph = p1(phi, Sh)
        const_cov.append(l2_norm(Ph - np.exp(-4 * c) * P, spec) / l2_norm(P, spec))
        const_inv.append(abs(f1(phi, Sh) - F) / (1 + abs(F)))
        slopes.append(math.log(l2_norm(Ph, spec) / l2_norm(P, spec)))
    out["const_rel"] = max(const_cov)
    out["const_inv"] = max(const_inv)
    out["exponent"] = float(np.polyfit([0.1, 0.2, 0.3], slopes, 1)[0])

    spec = cube(s.covariance_dims)
    phi = generic_scalar(spec)
    u = bump(spec)
    out["spectral_rel"] = covariance_check(phi, heisenberg(1, spec), u).rel_error
    out["spectral_inv"] = invariance_check(phi, heisenberg(1, spec), u)

    errs = []
    for n in s.fd4_dims:
        spec = cube(n, scheme="fd4")
        errs.append(covariance_check(generic_scalar(spec), heisenberg(1, spec), bump(spec)).rel_error)
    out["fd4_errors"] = errs
    out["fd4_orders"] = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    s.cache["covariance"] = out
    return out


def criterion_4(s: SuiteSettings) -> CriterionResult:
    d = _covariance_data(s)
    ok = (d["const_rel"] <= 1e-10 and d["spectral_rel"] <= 1e-6
          and min(d["fd4_orders"]) >= 3.5 and abs(d["exponent"] + 4) <= 1e-10)
    return CriterionResult(
        "4", "conformal covariance of P1", ok,
        {"const_rel": d["const_rel"], "log_slope": d["exponent"], "spectral_rel": d["spectral_rel"],
         "fd4_errors": d["fd4_errors"], "fd4_orders": d["fd4_orders"]},
        {"const_rel": 1e-10, "log_slope": "-4 +- 1e-10", "spectral_rel": 1e-6, "fd4_orders": ">= 3.5"})


def criterion_5(s: SuiteSettings) -> CriterionResult:
    d = _covariance_data(s)
    ok = d["const_inv"] <= 1e-10 and d["spectral_inv"] <= 1e-6
    return CriterionResult("5", "conformal invariance of F1", ok,
                           {"const_rel": d["const_inv"], "spectral_rel": d["spectral_inv"]},
                           {"const_rel": 1e-10, "spectral_rel": 1e-6})


def _gradient_cases(s: SuiteSettings):
    """Seeded (label, map, direction, structure) cases for the gradient identity."""
    spec = cube(s.gradient_dims)
    structures = {"flat": flat_structure(spec), "rescaled": rescaled_structure(spec)}
    rng = np.random.default_rng(s.seed)
    cases = []
    for i in range(3):
        # flat target, perturbation of the projection, t-dependent data on the flat structure
        vals = np.stack([random_trig(spec, rng), random_trig(spec, rng)])
        v = np.stack([random_trig(spec, rng, amp=1.0), random_trig(spec, rng, amp=1.0)])
        lift = projection_map(spec).lift
        cases.append((f"flat-target/flat#{i}", MapField(flat_torus(2), vals, lift), v, structures["flat"]))
        hz = list(horizontal_axes(spec))
        vals = np.stack([random_trig(spec, rng, axes=hz), random_trig(spec, rng, axes=hz)])
        v = np.stack([random_trig(spec, rng, amp=1.0, axes=hz), random_trig(spec, rng, amp=1.0, axes=hz)])
        cases.append((f"flat-target/rescaled#{i}", MapField(flat_torus(2), vals, lift), v,
                      structures["rescaled"]))
        for key, S in structures.items():
            w = np.stack([random_trig(spec, rng, amp=0.05, axes=hz) for _ in range(3)])
            w[2] += 1
            w = w / np.sqrt(np.sum(w * w, axis=0))
            v = np.stack([random_trig(spec, rng, amp=1.0, axes=hz) for _ in range(3)])
            v = v - np.sum(v * w, axis=0) * w
            cases.append((f"sphere/{key}#{i}", MapField(embedded_sphere_2(), w), v, S))
    return cases


def _gradient_data(s: SuiteSettings) -> dict:
    if "gradient" in s.cache:
        return s.cache["gradient"]
    flat, sphere, literal, ratios = [], [], [], []
    for label, phi, v, S in _gradient_cases(s):
        P = p1(phi, S)
        dF = directional_derivative(phi, v, S)
        pair = pairing(phi, S, v, P)
        mismatch = gradient_check(phi, v, S)
        (sphere if label.startswith("sphere") else flat).append(mismatch)
        literal.append(abs(dF - LITERAL_GRADIENT_SCALE * pair))
        ratios.append(dF / pair)
    out = {"flat": flat, "sphere": sphere, "literal": literal, "ratios": ratios}
    s.cache["gradient"] = out
    return out


def criterion_6(s: SuiteSettings) -> CriterionResult:
    d = _gradient_data(s)
    ok = max(d["flat"]) <= 1e-6 and max(d["sphere"]) <= 1e-5
    return CriterionResult(
        "6", "gradient identity dF1[v] = -int <v, P1>", ok,
        {"flat_max": max(d["flat"]), "sphere_max": max(d["sphere"]),
         "ratio_min": min(d["ratios"]), "ratio_max": max(d["ratios"])},
        {"flat_max": 1e-6, "sphere_max": 1e-5})


def criterion_6_literal(s: SuiteSettings) -> CriterionResult:
    d = _gradient_data(s)
    ok = max(d["literal"]) <= 1e-6
    return CriterionResult(
        "6*", "gradient identity with constant +1/2", ok,
        {"mismatch_max": max(d["literal"]), "measured_ratio": float(np.median(d["ratios"]))},
        {"mismatch_max": 1e-6}, expected_failure=True,
        note="the first variation of F1 equals -1 times the P1 pairing, so the +1/2 constant cannot hold")


def criterion_7(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    S = flat_structure(spec)
    rng = np.random.default_rng(s.seed + 7)
    errs, rel = [], []
    for _ in range(5):
        # four chained spectral derivatives amplify roundoff by ~k_max^4, so
        # O(0.01) data keeps the absolute noise floor below the tolerance
        f = random_trig(spec, rng, amp=0.01, axes=horizontal_axes(spec))
        P = p1(MapField(flat_torus(1), f[None]), S)[0]
        err = float(np.max(np.abs(P - composed_paneitz(f, spec))))
        errs.append(err)
        rel.append(err / float(np.max(np.abs(P))))
    return CriterionResult("7", "scalar reduction P1 f = -L^2 f - f_tt", max(errs) <= 1e-10,
                           {"sup_errors": errs, "relative_max": max(rel)}, {"sup_errors": 1e-10})


def criterion_8(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    S = flat_structure(spec)
    rng = np.random.default_rng(s.seed + 8)
    phi = MapField(flat_torus(1), random_trig(spec, rng)[None])
    jet = solve_jet(phi, S, 1)
    diff = float(np.max(np.abs(jet.log_coeff - p1(phi, S))))
    ratios = residual_ratios(jet, phi, S, [1e-1, 1e-2, 1e-3])
    spread = max(ratios) / min(ratios)
    return CriterionResult("8", "jet log coefficient equals P1; residual O(r^{n+2})",
                           diff <= 1e-12 and spread <= 10,
                           {"sup_diff": diff, "ratios": ratios, "spread": spread},
                           {"sup_diff": 1e-12, "spread": 10.0})


def _asymmetry(spec, S, op, rng):
    f = random_trig(spec, rng)
    g = random_trig(spec, rng)
    pf = op(MapField(flat_torus(1), f[None]))[0]
    pg = op(MapField(flat_torus(1), g[None]))[0]
    a = integrate(f * pg, spec, S.vol_density).real
    b = integrate(g * pf, spec, S.vol_density).real
    return abs(a - b) / (l2_norm(f, spec, S.vol_density) * l2_norm(g, spec, S.vol_density))


def criterion_9(s: SuiteSettings) -> CriterionResult:
    rng = np.random.default_rng(s.seed + 9)
    spec1 = cube(s.n1_dims)
    S1 = flat_structure(spec1)
    a1 = _asymmetry(spec1, S1, lambda m: p1(m, S1), rng)
    spec2 = cube(s.n2_dims, 5)
    S2 = flat_heisenberg(2, spec2)
    a2 = _asymmetry(spec2, S2, lambda m: solve_jet(m, S2, 2).log_coeff, rng)
    return CriterionResult("9", "self-adjointness of P_n on scalars", max(a1, a2) <= 1e-8,
                           {"n1": a1, "n2": a2}, {"relative": 1e-8})


def criterion_10(s: SuiteSettings) -> CriterionResult:
    spec1 = cube(s.n1_dims)
    j1 = solve_jet(projection_map(spec1), flat_structure(spec1), 1).max_abs()
    spec2 = cube(s.n2_dims, 5)
    j2 = solve_jet(projection_map(spec2), flat_heisenberg(2, spec2), 2).max_abs()
    return CriterionResult("10", "jets of the projection vanish", max(j1, j2) <= 1e-12,
                           {"n1": j1, "n2": j2}, {"sup": 1e-12})


def flow_start(spec: GridSpec, seed: int) -> MapField:
    rng = np.random.default_rng(seed)
    hz = list(horizontal_axes(spec))
    pert = np.stack([random_trig(spec, rng, amp=0.02, axes=hz) for _ in range(2)])
    return MapField(flat_torus(2), pert, projection_map(spec).lift)


def criterion_11(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.flow_dims)
    S = flat_structure(spec)
    cfg = FlowConfig(step=1.0, max_steps=s.flow_steps, backtracking=True, stop_tol=1e-9,
                     preconditioner=True)
    _, trace = gradient_flow(flow_start(spec, s.seed + 11), S, cfg)
    F = trace.column("f1")
    norms = trace.column("p1_norm")
    monotone = bool(np.all(np.diff(F) <= 0))
    first_10x = next((int(i) for i, v in enumerate(norms) if v <= norms[0] / 10), None)
    reduction = float(norms[0] / norms[-1]) if norms[-1] > 0 else float("inf")
    ok = monotone and first_10x is not None and first_10x <= s.flow_steps
    return CriterionResult("11", "flow descent from a perturbed projection", ok,
                           {"monotone_F1": monotone, "p1_reduction": reduction,
                            "iterations_to_10x": first_10x, "steps": len(trace) - 1},
                           {"p1_reduction": ">= 10 within 500 steps"})


def criterion_12(s: SuiteSettings) -> CriterionResult:
    spec = cube(s.n1_dims)
    rng = np.random.default_rng(s.seed + 12)
    hz = list(horizontal_axes(spec))
    measured = {}
    # d^2 = 0 on the coordinate frame (any data) and on the Heisenberg frame (t-independent data)
    f = random_trig(spec, rng)
    cframe = coordinate_frame(spec)
    dd_c = np.max(np.abs(exterior_derivative(cframe.grad(f), cframe)))
    S = flat_structure(spec)
    g = random_trig(spec, rng, axes=hz)
    dd_h = np.max(np.abs(exterior_derivative(S.frame.grad(g), S.frame)))
    measured["dd"] = float(max(dd_c, dd_h))
    Sr = rescaled_structure(spec)
    spec2 = cube(s.n2_dims, 5)
    S2 = flat_heisenberg(2, spec2)
    measured["structure"] = max(S.residuals["structure"], Sr.residuals["structure"])
    measured["levi"] = max(S.residuals["levi"], Sr.residuals["levi"], S2.residuals["levi"])
    measured["reeb"] = max(S.residuals["reeb"], Sr.residuals["reeb"], Sr.residuals["reeb_dual"])
    w = np.stack([random_trig(spec, rng, amp=0.05, axes=hz) for _ in range(3)])
    w[2] += 1
    w = w / np.sqrt(np.sum(w * w, axis=0))
    phi = MapField(embedded_sphere_2(), w)
    tang = 0.0
    for SS in (S, Sr):
        D = mc.differentiate(phi, SS)
        for sec in (p1(phi, SS), mc.tension_b(phi, SS, D), mc.reeb_second(phi, SS, D), D.T1[0]):
            # normal component relative to the section size (roundoff scales with it)
            normal = float(np.max(np.abs(np.sum(sec * w, axis=0))))
            tang = max(tang, normal / (1.0 + float(np.max(np.abs(sec)))))
    measured["sphere_normal"] = tang
    tol = {"dd": 1e-10, "structure": 1e-8, "levi": 1e-8, "reeb": 1e-10, "sphere_normal": 1e-12}
    ok = all(measured[k] <= tol[k] for k in tol)
    return CriterionResult("12", "infrastructure invariants", ok, measured, tol)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_6_literal, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11, criterion_12]


def run_all(settings: SuiteSettings | None = None, log=None) -> list[CriterionResult]:
    settings = settings or SuiteSettings()
    results = []
    for fn in CRITERIA:
        res = fn(settings)
        if log is not None:
            log(res.line())
        results.append(res)
    return results
