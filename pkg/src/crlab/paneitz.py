"""The dimension-three obstruction ``P1``, the renormalized energy ``F1`` and their checks.

Conventions (all fixed numerically by the checks in this module):

* ``P1(phi) = -delta_b nabla delta_b T phi - nabla_R R phi
  + 4 Im(nabla_{T1bar}(A T1bar phi)) + S_b(delta_b T phi)`` with the curvature
  sign of :mod:`crlab.target`.
* ``F1(phi) = -1/2 int (-|delta_b T phi|^2 + |R phi|^2
  - 4 Im(A h(T1bar phi, T1bar phi))) theta ^ d theta``.
* First variation: ``dF1(phi)[v] = GRADIENT_SCALE * int <v, P1(phi)>``.
* Under ``theta -> e^{2u} theta`` the obstruction scales as
  ``P1 -> e^{-4u} P1`` and ``F1`` is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mapcalc as mc
from .grid import GridSpec, integrate, l2_norm
from .mapcalc import MapField
from .structure import (
    ContactCoframe,
    DimensionMismatch,
    PseudohermitianData,
    conformal_rescale,
    solve_structure,
)
from .target import FlatTorus

GRADIENT_SCALE = -1.0
LITERAL_GRADIENT_SCALE = 0.5
FD_EPS = 1e-3


class NoComplexStructure(ValueError):
    pass


def _require_three(S: PseudohermitianData):
    if S.n != 1:
        raise DimensionMismatch("P1 and F1 are defined on three-dimensional structures")


def _torsion_field(phi, S, D):
    A = S.torsion
    if A is None or not np.any(A):
        return None
    # nabla_{T1bar}(A T1bar phi) - omega(T1bar) A T1bar phi: the frame index of T1bar
    # rotates with conj(omega) = -omega.
    sec = A * D.T1bar[0]
    Q = mc.covariant(phi, S, S.T1bar[0], sec, D.q, D.T1bar[0])
    Q = Q - S.omega_on(S.T1bar[0]) * sec
    return 4.0 * mc.im_part(Q)


def p1_terms(phi: MapField, S: PseudohermitianData) -> dict:
    """The four contributions to ``P1`` (complex arrays, before taking real parts)."""
    _require_three(S)
    D = mc.differentiate(phi, S)
    tau = mc.tension_b(phi, S, D)
    terms = {
        "bilaplace": -mc.delta_nabla(tau, phi, S, D),
        "reeb": -mc.reeb_second(phi, S, D),
        "torsion": _torsion_field(phi, S, D),
        "curvature": mc.s_b(tau, phi, S, D),
    }
    if terms["torsion"] is None:
        terms["torsion"] = np.zeros_like(terms["reeb"])
    return terms


def p1(phi: MapField, S: PseudohermitianData) -> np.ndarray:
    """Real section ``P1(phi)`` of ``phi^* TN``."""
    total = sum(p1_terms(phi, S).values())
    out = np.real(total)
    return phi.target.project(phi.points(S.spec), out)


def f1_density(phi: MapField, S: PseudohermitianData) -> np.ndarray:
    _require_three(S)
    D = mc.differentiate(phi, S)
    h = phi.target
    tau = mc.tension_b(phi, S, D)
    dens = -h.inner(D.q, tau, np.conj(tau)).real + h.inner(D.q, D.R, D.R).real
    if S.torsion is not None:
        dens = dens - 4.0 * mc.im_part(S.torsion * h.inner(D.q, D.T1bar[0], D.T1bar[0]))
    return -0.5 * dens


def f1(phi: MapField, S: PseudohermitianData) -> float:
    """Renormalized energy ``F1(phi)``."""
    return float(integrate(f1_density(phi, S), S.spec, S.vol_density).real)


def pairing(phi: MapField, S: PseudohermitianData, a: np.ndarray, b: np.ndarray) -> float:
    """``int h(a, b) theta ^ d theta`` for real sections."""
    q = phi.points(S.spec)
    return float(integrate(phi.target.inner(q, a, b), S.spec, S.vol_density).real)


@dataclass
class CovarianceReport:
    rel_error: float
    grid_spec: GridSpec
    u_description: str
    expected_exponent: int = -2
    absolute: bool = False
    abs_error: float = 0.0


def covariance_check(phi: MapField, cf: ContactCoframe, u, u_description: str = "") -> CovarianceReport:
    """Compare ``P1`` of the rescaled structure with ``e^{-2 f0} P1``, ``f0 = 2u``."""
    S = solve_structure(cf)
    Sh = solve_structure(conformal_rescale(cf, u))
    P = p1(phi, S)
    Ph = p1(phi, Sh)
    f0 = 2.0 * np.broadcast_to(np.real(u), cf.spec.dims)
    diff = Ph - np.exp(-2.0 * f0) * P
    err = l2_norm(diff, cf.spec)
    den = l2_norm(P, cf.spec)
    if den <= 1e-300:
        return CovarianceReport(err, cf.spec, u_description, absolute=True, abs_error=err)
    return CovarianceReport(err / den, cf.spec, u_description, abs_error=err)


def invariance_check(phi: MapField, cf: ContactCoframe, u) -> float:
    """``|F1_hat - F1| / (1 + |F1|)``."""
    F = f1(phi, solve_structure(cf))
    Fh = f1(phi, solve_structure(conformal_rescale(cf, u)))
    return abs(Fh - F) / (1.0 + abs(F))


def retract(phi: MapField, v: np.ndarray, spec: GridSpec) -> MapField:
    """``exp_phi(v)`` applied pointwise, returned as a map with the same winding."""
    q = phi.points(spec)
    qn = phi.target.exp(q, v)
    if isinstance(phi.target, FlatTorus):
        return phi.with_values(phi.values + np.real(v))
    if phi.target.ambient:
        return phi.with_values(qn)
    return phi.with_values(phi.values + (qn - q))


def directional_derivative(phi: MapField, v: np.ndarray, S: PseudohermitianData,
                           eps: float = FD_EPS) -> float:
    """Fourth-order central difference of ``e -> F1(exp_phi(e v))`` at 0."""
    F = {k: f1(retract(phi, k * eps * v, S.spec), S) for k in (-2, -1, 1, 2)}
    return (-F[2] + 8 * F[1] - 8 * F[-1] + F[-2]) / (12 * eps)


def gradient_check(phi: MapField, v: np.ndarray, S: PseudohermitianData,
                   scale: float = GRADIENT_SCALE, eps: float = FD_EPS) -> float:
    """``|d/de F1(exp_phi(e v))|_0 - scale * int <v, P1(phi)>|``."""
    v = np.real(v)
    if not np.any(v):
        return 0.0
    lhs = directional_derivative(phi, v, S, eps)
    rhs = scale * pairing(phi, S, v, p1(phi, S))
    return abs(lhs - rhs)


def _standard_J(q, s):
    m = s.shape[0]
    out = np.empty_like(s)
    for k in range(0, m, 2):
        out[k] = -s[k + 1]
        out[k + 1] = s[k]
    return out


def holomorphic_identity_check(phi: MapField, S: PseudohermitianData) -> float:
    """``max |delta_b T phi - n J (R phi)|`` for maps into an even torus with standard ``J``."""
    h = phi.target
    if not isinstance(h, FlatTorus) or h.dim % 2:
        raise NoComplexStructure("holomorphic identity needs an even-dimensional flat torus")
    D = mc.differentiate(phi, S)
    tau = mc.tension_b(phi, S, D)
    return float(np.max(np.abs(tau - S.n * _standard_J(D.q, D.R))))
