"""Descent flows towards CR-harmonic and subharmonic maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from . import mapcalc as mc
from .grid import integrate, l2_norm
from .mapcalc import MapField
from .paneitz import GRADIENT_SCALE, f1, p1, retract
from .structure import PseudohermitianData
from .target import StepTooLarge

MIN_STEP = 1e-12


class StepCollapse(RuntimeError):
    pass


@dataclass
class FlowConfig:
    step: float = 1e-3
    max_steps: int = 500
    backtracking: bool = True
    stop_tol: float = 1e-8
    preconditioner: bool = False
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4

    def __post_init__(self):
        if self.step <= 0 or self.stop_tol <= 0:
            raise ValueError("step and stop_tol must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


@dataclass
class FlowRecord:
    iteration: int
    f1: float
    p1_norm: float
    tension_norm: float
    step: float
    reeb_norm: float = float("nan")


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)
    stopped_by: str = "max_steps"

    CSV_HEADER = ("iter", "f1", "p1_norm", "tension_norm", "step")

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_HEADER)
            for r in self.records:
                w.writerow([r.iteration] + [f"{v:.17g}" for v in (r.f1, r.p1_norm, r.tension_norm, r.step)])


def _precondition(g: np.ndarray, S: PseudohermitianData) -> np.ndarray:
    """Apply ``(1 + L^2)^{-1}`` with ``L`` the horizontal Laplacian symbol."""
    spec = S.spec
    sym = 0.0
    for ax in range(spec.ndim - 1):
        sym = sym + spec.wavenumber(ax) ** 2
    axes = tuple(range(g.ndim - spec.ndim, g.ndim))
    gh = scipy.fft.fftn(g, axes=axes)
    out = scipy.fft.ifftn(gh / (1.0 + sym ** 2), axes=axes)
    return out.real


def _record(it, phi, S, step, P=None, F=None):
    D = mc.differentiate(phi, S)
    tau = np.real(mc.tension_b(phi, S, D))
    if P is None:
        P = p1(phi, S)
    if F is None:
        F = f1(phi, S)
    reeb = np.real(mc.reeb_second(phi, S, D))
    return FlowRecord(it, F, l2_norm(P, S.spec, S.vol_density),
                      l2_norm(tau, S.spec, S.vol_density), step,
                      l2_norm(reeb, S.spec, S.vol_density)), tau


def _line_search(phi, S, energy, E0, direction, slope, eta, cfg):
    """Backtracking (Armijo) search along ``direction``; returns the new map and step."""
    while True:
        try:
            cand = retract(phi, eta * direction, S.spec)
            E1 = energy(cand)
        except StepTooLarge:
            E1, cand = np.inf, None
        if not cfg.backtracking and cand is not None:
            return cand, eta, E1
        if cand is not None and E1 <= E0 + cfg.armijo_slope * eta * slope:
            return cand, eta, E1
        eta *= cfg.armijo_factor
        if eta < MIN_STEP:
            raise StepCollapse(f"backtracking step fell below {MIN_STEP:g}")


def _pair(phi, S, a, b):
    q = phi.points(S.spec)
    return float(integrate(phi.target.inner(q, a, b), S.spec, S.vol_density).real)


def gradient_flow(phi0: MapField, S: PseudohermitianData, cfg: FlowConfig):
    """Descend ``F1`` along its L2 gradient ``GRADIENT_SCALE * P1``.

    Returns ``(phi, trace)``; iteration 0 of the trace describes ``phi0``.
    """
    phi = phi0
    P = p1(phi, S)
    rec, _ = _record(0, phi, S, 0.0, P)
    trace = FlowTrace([rec])
    eta = cfg.step
    for it in range(1, cfg.max_steps + 1):
        grad = GRADIENT_SCALE * P
        if l2_norm(grad, S.spec, S.vol_density) <= cfg.stop_tol:
            trace.stopped_by = "stop_tol"
            return phi, trace
        direction = -grad
        if cfg.preconditioner:
            direction = phi.target.project(phi.points(S.spec), _precondition(direction, S))
        slope = _pair(phi, S, grad, direction)
        phi, eta, F = _line_search(phi, S, lambda m: f1(m, S), trace.records[-1].f1,
                                   direction, slope, min(cfg.step, 2 * eta), cfg)
        P = p1(phi, S)
        rec, _ = _record(it, phi, S, eta, P, F)
        trace.records.append(rec)
    if l2_norm(GRADIENT_SCALE * P, S.spec, S.vol_density) <= cfg.stop_tol:
        trace.stopped_by = "stop_tol"
    return phi, trace


def horizontal_energy(phi: MapField, S: PseudohermitianData) -> float:
    """``E_b(phi) = int h(T1 phi, T1bar phi) theta ^ d theta``, the energy whose gradient is the tension."""
    D = mc.differentiate(phi, S)
    dens = sum(phi.target.inner(D.q, D.T1[a], D.T1bar[a]) for a in range(S.n))
    return float(integrate(np.real(dens), S.spec, S.vol_density).real)


def subharmonic_flow(phi0: MapField, S: PseudohermitianData, cfg: FlowConfig):
    """Descend the horizontal energy along ``-delta_b T phi``; stops on ``|tension| <= stop_tol``.

    Each record also carries ``|nabla_R R phi|`` so the limit can be checked
    for the extra condition under which subharmonic maps are CR-harmonic.
    """
    phi = phi0
    rec, tau = _record(0, phi, S, 0.0)
    trace = FlowTrace([rec])
    E = horizontal_energy(phi, S)
    eta = cfg.step
    for it in range(1, cfg.max_steps + 1):
        if trace.records[-1].tension_norm <= cfg.stop_tol:
            trace.stopped_by = "stop_tol"
            return phi, trace
        direction = -tau
        if cfg.preconditioner:
            direction = phi.target.project(phi.points(S.spec), _precondition(direction, S))
        slope = _pair(phi, S, tau, direction)
        phi, eta, E = _line_search(phi, S, lambda m: horizontal_energy(m, S), E,
                                   direction, slope, min(cfg.step, 2 * eta), cfg)
        rec, tau = _record(it, phi, S, eta)
        trace.records.append(rec)
    if trace.records[-1].tension_norm <= cfg.stop_tol:
        trace.stopped_by = "stop_tol"
    return phi, trace
