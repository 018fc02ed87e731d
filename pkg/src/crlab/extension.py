"""Formal harmonic extension into the Einstein ACH filling of the flat model.

On the filling ``(0, eps) x H^n`` of the flat Heisenberg model the divergence
of a ``phi^* TN``-valued one-form ``w`` splits as

    a_dr w(d_r) + a_rr nabla_{d_r} w(d_r) + a_RR nabla_R w(R) + a_b delta_b w,

with the scalar coefficients of :func:`einstein_divergence_coeffs`.  Solving
``delta T phi~ = O(r^{n+2})`` order by order for
``phi~ = phi + sum_k phi_k r^k / k! + P r^{n+1} log r / (n+1)!`` gives the jet
coefficients ``phi_k`` and the obstruction ``P = P_n(phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mapcalc as mc
from .mapcalc import MapField
from .structure import PseudohermitianData
from .target import FlatTorus


class PoleReached(ValueError):
    pass


class NotFlatModel(ValueError):
    pass


def einstein_divergence_coeffs(lam: float, r: float, n: int) -> tuple[float, float, float, float]:
    """Coefficients ``(a_dr, a_rr, a_RR, a_b)`` of the model divergence at ``(lam, r)``."""
    if abs(lam * r) >= 1:
        raise PoleReached(f"|lambda r| = {abs(lam * r)} >= 1")
    l2r2 = (lam * r) ** 2
    a_dr = (n * (1 + l2r2) / (1 - l2r2) + (1 + lam * r) / (1 - lam * r) - 1) * r
    a_rr = -r * r
    a_RR = -r * r / (1 - l2r2) ** 2
    a_b = r / (1 - lam * r) ** 2
    return a_dr, a_rr, a_RR, a_b


@dataclass
class JetExpansion:
    n: int
    coeffs: list
    log_coeff: np.ndarray
    lam: float = 0.0

    def max_abs(self) -> float:
        vals = [np.max(np.abs(c)) for c in self.coeffs] + [np.max(np.abs(self.log_coeff))]
        return float(max(vals))


def _check_flat(phi: MapField, S: PseudohermitianData):
    if not isinstance(phi.target, FlatTorus):
        raise NotFlatModel("jets are computed for flat targets only")
    if not S.flat:
        for name, val in (("omega", S.omega), ("torsion", S.torsion)):
            if val is not None and np.max(np.abs(val)) > 1e-12:
                raise NotFlatModel(f"structure has nonzero {name}")
        if S.frame.name != "heisenberg":
            raise NotFlatModel("structure is not the Heisenberg model")
        if np.max(np.abs(S.reeb - _unit_t(S))) > 1e-12:
            raise NotFlatModel("Reeb field is not d/dt")


def _unit_t(S):
    R = np.zeros_like(S.reeb)
    R[-1] = 1.0
    return R


class _FlatOps:
    """Sub-Laplacian and ``R^2`` on the base map and on sections along it."""

    def __init__(self, phi, S):
        self.phi, self.S = phi, S
        self.D = mc.differentiate(phi, S)

    def lap(self, k, sec):
        if k == 0:
            return mc.tension_b(self.phi, self.S, self.D)
        return mc.delta_nabla(sec, self.phi, self.S, self.D)

    def reeb2(self, k, sec):
        if k == 0:
            return mc.reeb_second(self.phi, self.S, self.D)
        R = self.S.reeb
        return self.S.apply(R, self.S.apply(R, sec))


def solve_jet(phi: MapField, S: PseudohermitianData, n: int | None = None) -> JetExpansion:
    """Jet coefficients ``phi_1..phi_n`` and log coefficient ``P_n(phi)``."""
    if n is None:
        n = S.n
    if n != S.n:
        raise NotFlatModel(f"structure has dimension 2*{S.n}+1, requested n = {n}")
    _check_flat(phi, S)
    ops = _FlatOps(phi, S)
    secs = [None]  # phi_0 is the map itself
    lap = [ops.lap(0, None)]
    reeb2 = [ops.reeb2(0, None)]
    for k in range(1, n + 1):
        rhs = -lap[k - 1]
        if k >= 2:
            rhs = rhs + (k - 1) * reeb2[k - 2]
        sec = rhs / (n - k + 1)
        secs.append(sec)
        lap.append(ops.lap(k, sec))
        reeb2.append(ops.reeb2(k, sec))
    log_coeff = lap[n] - n * reeb2[n - 1]
    # Maps are real, so the coefficients are real sections; the complex frame
    # only leaves roundoff in their imaginary parts.
    return JetExpansion(n, [np.real(c) for c in secs[1:]], np.real(log_coeff))


def _lift_derivs(ops, jet):
    lap = [ops.lap(0, None)] + [ops.lap(k, c) for k, c in enumerate(jet.coeffs, 1)]
    reeb2 = [ops.reeb2(0, None)] + [ops.reeb2(k, c) for k, c in enumerate(jet.coeffs, 1)]
    return lap, reeb2, ops.lap(1, jet.log_coeff), ops.reeb2(1, jet.log_coeff)


def residual_ratios(jet: JetExpansion, phi: MapField, S: PseudohermitianData, r_samples) -> list[float]:
    """``max |delta T phi~(r)| / r^{n+2}`` at each sample radius."""
    _check_flat(phi, S)
    n = jet.n
    ops = _FlatOps(phi, S)
    lap, reeb2, lapL, reeb2L = _lift_derivs(ops, jet)
    coeffs = [None] + list(jet.coeffs)
    L = jet.log_coeff
    c = 1.0 / math.factorial(n + 1)
    out = []
    for r in r_samples:
        a_dr, a_rr, a_RR, a_b = einstein_divergence_coeffs(jet.lam, r, n)
        lr = math.log(r)
        dU = sum(coeffs[k] * r ** (k - 1) / math.factorial(k - 1) for k in range(1, n + 1))
        dU = dU + c * L * r ** n * ((n + 1) * lr + 1)
        ddU = sum(coeffs[k] * r ** (k - 2) / math.factorial(k - 2) for k in range(2, n + 1))
        ddU = ddU + c * L * r ** (n - 1) * ((n + 1) * n * lr + 2 * n + 1)
        g = c * r ** (n + 1) * lr
        RRU = sum(reeb2[k] * r ** k / math.factorial(k) for k in range(n + 1)) + g * reeb2L
        LU = sum(lap[k] * r ** k / math.factorial(k) for k in range(n + 1)) + g * lapL
        res = a_dr * dU + a_rr * ddU + a_RR * RRU + a_b * LU
        out.append(float(np.max(np.abs(res))) / r ** (n + 2))
    return out


def residual_check(jet: JetExpansion, phi: MapField, S: PseudohermitianData, r_samples) -> float:
    """Largest normalized residual over ``r_samples`` (bounded as ``r -> 0`` for a true jet)."""
    return max(residual_ratios(jet, phi, S, r_samples))
