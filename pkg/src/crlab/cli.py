"""Command-line driver: ``crlab <command> [--config FILE] [--out DIR] ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical check failure,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import acceptance, expr
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .extension import NotFlatModel, PoleReached, residual_ratios, solve_jet
from .flow import FlowConfig, StepCollapse, gradient_flow, subharmonic_flow
from .grid import SingularFrame, integrate, l2_norm
from .mapcalc import FrameMismatch
from .paneitz import (
    GRADIENT_SCALE,
    covariance_check,
    directional_derivative,
    f1,
    invariance_check,
    p1,
    p1_terms,
    pairing,
    retract,
)
from .structure import DimensionMismatch, NormalizationFailure, StructureResidual
from .target import StepTooLarge

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_INTERNAL = 0, 1, 2, 3
COMMANDS = ("structure", "p1", "f1", "covariance", "invariance", "gradcheck", "jet", "flow", "suite")


class CheckFailure(Exception):
    def __init__(self, check: str, measured, tolerance, summary: dict | None = None):
        self.check, self.measured, self.tolerance, self.summary = check, measured, tolerance, summary
        super().__init__(f"check '{check}' failed: measured {measured} vs tolerance {tolerance}")


def default_config_text() -> str:
    return resources.files("crlab").joinpath("data/default.toml").read_text(encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_summary(out: Path, command: str, body: dict) -> Path:
    path = out / f"{command}.json"
    doc = {"schema": SCHEMA, "command": command, **body}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _setup(cfg: ExperimentConfig, args):
    spec = cfg.grid(args.refine)
    S = cfg.model(spec).build()
    return spec, S


def _norms(a, S) -> dict:
    return {"sup": float(np.max(np.abs(a))), "l2": l2_norm(a, S.spec, S.vol_density)}


def _tol(cfg, key, default):
    return float(cfg.check.get(key, default))


def _conformal_or_fail(cfg, spec):
    u = cfg.conformal(spec)
    if u is None:
        raise ConfigError("this command needs a conformal_factor")
    return u


def cmd_structure(cfg, args, out):
    spec, S = _setup(cfg, args)
    arrays = {"reeb": S.reeb, "T1": S.T1, "vol_density": S.vol_density}
    for name in ("torsion", "scal_w", "omega"):
        val = getattr(S, name)
        if val is not None:
            arrays[name] = val
    np.savez(out / "structure.npz", **arrays)
    body = {"dims": spec.dims, "scheme": spec.scheme, "n": S.n, "residuals": S.residuals,
            "volume": integrate(np.ones(spec.dims), spec, S.vol_density).real}
    if S.torsion is not None:
        body["torsion_sup"] = float(np.max(np.abs(S.torsion)))
        body["scal_w_mean"] = integrate(S.scal_w, spec, S.vol_density).real / body["volume"]
    return body


def cmd_p1(cfg, args, out):
    spec, S = _setup(cfg, args)
    phi = cfg.build_map(spec)
    terms = p1_terms(phi, S)
    P = p1(phi, S)
    np.savez(out / "p1.npz", p1=P, **{f"term_{k}": np.real(v) for k, v in terms.items()})
    body = {"p1": _norms(P, S), "terms": {k: _norms(np.real(v), S) for k, v in terms.items()}}
    tol = cfg.check.get("p1_sup")
    if tol is not None and body["p1"]["sup"] > tol:
        raise CheckFailure("p1_sup", body["p1"]["sup"], tol, body)
    return body


def cmd_f1(cfg, args, out):
    spec, S = _setup(cfg, args)
    F = f1(cfg.build_map(spec), S)
    print(f"{F:.12g}")
    body = {"f1": F}
    if "f1_expected" in cfg.check:
        err = abs(F - cfg.check["f1_expected"])
        body["abs_error"] = err
        tol = _tol(cfg, "f1_tol", 1e-8)
        if err > tol:
            raise CheckFailure("f1", err, tol, body)
    return body


def cmd_covariance(cfg, args, out):
    spec = cfg.grid(args.refine)
    u = _conformal_or_fail(cfg, spec)
    rep = covariance_check(cfg.build_map(spec), cfg.model(spec).coframe(), u, cfg.conformal_factor)
    body = {"rel_error": rep.rel_error, "abs_error": rep.abs_error, "absolute": rep.absolute,
            "expected_exponent": rep.expected_exponent, "conformal_factor": rep.u_description}
    tol = _tol(cfg, "covariance_tol", 1e-6)
    if rep.rel_error > tol:
        raise CheckFailure("covariance", rep.rel_error, tol, body)
    return body


def cmd_invariance(cfg, args, out):
    spec = cfg.grid(args.refine)
    u = _conformal_or_fail(cfg, spec)
    err = invariance_check(cfg.build_map(spec), cfg.model(spec).coframe(), u)
    body = {"rel_change": err, "conformal_factor": cfg.conformal_factor}
    tol = _tol(cfg, "invariance_tol", 1e-6)
    if err > tol:
        raise CheckFailure("invariance", err, tol, body)
    return body


def cmd_gradcheck(cfg, args, out):
    spec, S = _setup(cfg, args)
    phi = cfg.build_map(spec)
    opts = cfg.gradcheck
    rng = np.random.default_rng(args.seed)
    axes = range(spec.ndim) if opts.get("t_dependent", False) else acceptance.horizontal_axes(spec)
    amp = float(opts.get("amplitude", 1.0))
    v = np.stack([acceptance.random_trig(spec, rng, amp=amp, axes=axes) for _ in range(phi.values.shape[0])])
    v = phi.target.project(phi.points(spec), v)
    eps = float(opts.get("eps", 1e-3))
    dF = directional_derivative(phi, v, S, eps)
    pair = pairing(phi, S, v, p1(phi, S))
    mismatch = abs(dF - GRADIENT_SCALE * pair)
    body = {"directional_derivative": dF, "pairing": pair, "gradient_scale": GRADIENT_SCALE,
            "mismatch": mismatch, "eps": eps, "seed": args.seed}
    default = 1e-5 if phi.target.ambient else 1e-6
    tol = float(opts.get("tol", default))
    if mismatch > tol:
        raise CheckFailure("gradcheck", mismatch, tol, body)
    return body


def cmd_jet(cfg, args, out):
    spec, S = _setup(cfg, args)
    phi = cfg.build_map(spec)
    jet = solve_jet(phi, S, cfg.n)
    r_samples = [float(r) for r in cfg.jet.get("r_samples", [1e-1, 1e-2, 1e-3])]
    ratios = residual_ratios(jet, phi, S, r_samples)
    np.savez(out / "jet.npz", log_coeff=jet.log_coeff,
             **{f"phi_{k}": c for k, c in enumerate(jet.coeffs, 1)})
    body = {"n": jet.n, "max_abs": jet.max_abs(), "log_coeff": _norms(jet.log_coeff, S),
            "r_samples": r_samples, "residual_ratios": ratios}
    tol = cfg.jet.get("ratio_spread")
    if tol is not None:
        spread = max(ratios) / min(ratios) if min(ratios) > 0 else 0.0
        body["ratio_spread"] = spread
        if spread > tol:
            raise CheckFailure("jet_residual", spread, tol, body)
    return body


GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel 'iteration'
set multiplot layout 2,1
plot '{csv}' using 1:2 with lines title 'F1'
set logscale y
plot '{csv}' using 1:3 with lines title '|P1|', '' using 1:4 with lines title '|tau_b|'
unset multiplot
"""


def cmd_flow(cfg, args, out):
    spec, S = _setup(cfg, args)
    opts = dict(cfg.flow)
    kind = opts.pop("kind", "paneitz")
    perturb = float(opts.pop("perturbation", 0.0))
    try:
        fc = FlowConfig(**opts)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[flow] {e}") from e
    phi = cfg.build_map(spec)
    if perturb:
        rng = np.random.default_rng(args.seed)
        hz = acceptance.horizontal_axes(spec)
        v = np.stack([acceptance.random_trig(spec, rng, amp=perturb, axes=hz)
                      for _ in range(phi.values.shape[0])])
        phi = retract(phi, phi.target.project(phi.points(spec), v), spec)
    if kind == "paneitz":
        phi, trace = gradient_flow(phi, S, fc)
    elif kind == "subharmonic":
        phi, trace = subharmonic_flow(phi, S, fc)
    else:
        raise ConfigError("[flow] kind must be 'paneitz' or 'subharmonic'")
    csv = out / "flow.csv"
    trace.write_csv(csv)
    (out / "flow.gp").write_text(GNUPLOT.format(csv=csv.name))
    np.savez(out / "flow_final.npz", values=phi.values)
    F = trace.column("f1")
    norms = trace.column("p1_norm")
    body = {"kind": kind, "steps": len(trace) - 1, "stopped_by": trace.stopped_by,
            "f1_initial": F[0], "f1_final": F[-1], "p1_norm_initial": norms[0],
            "p1_norm_final": norms[-1], "tension_norm_final": trace.records[-1].tension_norm,
            "csv": csv.name}
    if kind == "paneitz" and not np.all(np.diff(F) <= 0):
        raise CheckFailure("flow_monotone", float(np.max(np.diff(F))), 0.0, body)
    return body


def cmd_suite(cfg, args, out):
    settings = acceptance.SuiteSettings.from_dict(cfg.suite, seed=args.seed)
    results = acceptance.run_all(settings, log=lambda line: print(line, flush=True))
    body = {"criteria": [r.as_dict() for r in results], "seed": settings.seed}
    failed = [r for r in results if not r.passed and not r.expected_failure]
    body["passed"] = not failed
    if failed:
        r = failed[0]
        raise CheckFailure(f"criterion {r.number}", r.measured, r.tolerance, body)
    return body


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crlab", description="CR-harmonic map laboratory")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML experiment file (default: shipped config)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scheme", choices=("spectral", "fd4"))
    p.add_argument("--refine", type=int, default=0, metavar="K", help="multiply grid sizes by 2^K")
    return p


NUMERICAL_ERRORS = (StructureResidual, NormalizationFailure, SingularFrame, StepCollapse,
                    StepTooLarge, PoleReached)
CONFIG_ERRORS = (ConfigError, NotFlatModel, DimensionMismatch, FrameMismatch, expr.EvalError)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config(default_config_text())
        if args.scheme:
            cfg.scheme = args.scheme
        if args.refine < 0:
            raise ConfigError("--refine must be non-negative")
        if args.seed is None:
            args.seed = int(cfg.suite.get("seed", 0))
        args.out.mkdir(parents=True, exist_ok=True)
        body = HANDLERS[args.command](cfg, args, args.out)
        _write_summary(args.out, args.command, {"status": "ok", **body})
        return EXIT_OK
    except CONFIG_ERRORS as e:
        print(f"crlab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as e:
        print(f"crlab: {e}", file=sys.stderr)
        body = {"status": "check_failed", "check": e.check, "measured": e.measured,
                "tolerance": e.tolerance}
        if e.summary:
            body["details"] = e.summary
        _write_summary(args.out, args.command, body)
        return EXIT_CHECK
    except NUMERICAL_ERRORS as e:
        print(f"crlab: numerical check failed ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_CHECK
    except Exception as e:  # noqa: BLE001
        print(f"crlab: internal error ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main(argv=None) -> None:
    sys.exit(run(argv))
