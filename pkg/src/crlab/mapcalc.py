"""Calculus of maps from a pseudohermitian grid manifold into a Riemannian target.

A map is a :class:`MapField`: periodic chart values plus an integer winding
matrix, so that e.g. the projection ``(x, y, t) -> (x, y)`` onto the flat
torus is represented exactly.  Sections of ``phi^* TN`` are plain arrays of
shape ``(m, *dims)`` holding target-frame components (complex allowed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import contract
from .structure import PseudohermitianData
from .target import EmbeddedSphere2, TargetMetric


class FrameMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MapField:
    """Map ``phi: M -> N`` sampled on the grid.

    Attributes:
        target: the target manifold.
        values: periodic part of the chart values, shape ``(m, *dims)``.
            For the sphere these are unit vectors of ``R^3``.
        lift: integer matrix ``A`` of shape ``(m, d)``; the chart value is
            ``A @ coords + values``. ``None`` means no winding.
    """

    target: TargetMetric
    values: np.ndarray
    lift: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape[0] != self.target.dim:
            raise FrameMismatch(
                f"map has {vals.shape[0]} components, target dimension is {self.target.dim}")
        if isinstance(self.target, EmbeddedSphere2):
            dev = np.max(np.abs(np.sum(vals * vals, axis=0) - 1.0))
            if dev > 1e-12:
                raise ValueError(f"sphere map leaves the unit sphere by {dev:.2e}")
        if self.lift is not None:
            object.__setattr__(self, "lift", np.asarray(self.lift, dtype=float))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def points(self, spec) -> np.ndarray:
        """Chart values ``A @ coords + values`` on the grid."""
        if self.lift is None:
            return self.values
        q = self.values.copy()
        for k in range(self.m):
            for j in range(spec.ndim):
                if self.lift[k, j]:
                    q[k] = q[k] + self.lift[k, j] * spec.coord(j)
        return q

    def with_values(self, values) -> "MapField":
        return MapField(self.target, values, self.lift)


@dataclass
class MapDerivatives:
    """First frame derivatives of a map: ``T_a phi``, ``T_abar phi``, ``R phi``."""

    q: np.ndarray
    T1: np.ndarray      # (n, m, *dims)
    T1bar: np.ndarray   # (n, m, *dims)
    R: np.ndarray       # (m, *dims)


def _coordinate_grad(phi: MapField, S: PseudohermitianData) -> np.ndarray:
    """``E_i(q^k)`` including the winding part; shape ``(d, m, *dims)``."""
    G = S.frame.grad(phi.values)
    if phi.lift is not None:
        K = S.frame.coordinate_matrix()  # K[i, j] = E_i(x_j)
        G = G + np.einsum("kj,ij...->ik...", phi.lift, K)
    return G


def _vector_apply(phi, S, q, G, V):
    dq = contract(V, G)
    out = phi.target.to_frame(q, dq)
    return phi.target.project(q, out)


def frame_apply(phi: MapField, V: np.ndarray, S: PseudohermitianData) -> np.ndarray:
    """Section ``V phi`` in target-frame components."""
    q = phi.points(S.spec)
    return _vector_apply(phi, S, q, _coordinate_grad(phi, S), V)


def differentiate(phi: MapField, S: PseudohermitianData) -> MapDerivatives:
    q = phi.points(S.spec)
    G = _coordinate_grad(phi, S)
    T1 = np.stack([_vector_apply(phi, S, q, G, T) for T in S.T1])
    return MapDerivatives(q, T1, np.conj(T1), _vector_apply(phi, S, q, G, S.reeb).real)


def covariant(phi: MapField, S: PseudohermitianData, V: np.ndarray, s: np.ndarray,
              q: np.ndarray, Vphi: np.ndarray) -> np.ndarray:
    """``nabla^{phi*h}_V s`` given ``V phi`` (avoids recomputing it)."""
    out = S.apply(V, s) + phi.target.connection(q, Vphi, s)
    return phi.target.project(q, out)


def pullback_derivative(phi: MapField, V: np.ndarray, s: np.ndarray,
                        S: PseudohermitianData) -> np.ndarray:
    q = phi.points(S.spec)
    return covariant(phi, S, V, s, q, frame_apply(phi, V, S))


def divergence_b(w1, w1bar, phi: MapField, S: PseudohermitianData,
                 D: MapDerivatives | None = None) -> np.ndarray:
    """Horizontal divergence of a ``phi^* TN``-valued one-form.

    ``w1[a] = omega(T_a)`` and ``w1bar[a] = omega(T_abar)`` are stacks of shape
    ``(n, m, *dims)``.  Returns
    ``-sum_a (nabla_{T_a} w(T_abar) + nabla_{T_abar} w(T_a))`` corrected by the
    connection form of the frame, so that the result is tensorial.
    """
    if D is None:
        D = differentiate(phi, S)
    w1, w1bar = np.asarray(w1), np.asarray(w1bar)
    if w1.shape[0] != S.n or w1bar.shape[0] != S.n:
        raise FrameMismatch("one-form must be given on every T_a and T_abar")
    out = 0
    for a in range(S.n):
        out = out - covariant(phi, S, S.T1[a], w1bar[a], D.q, D.T1[a])
        out = out - covariant(phi, S, S.T1bar[a], w1[a], D.q, D.T1bar[a])
    if S.omega is not None:
        out = out - S.omega_on(S.T1[0]) * w1bar[0] + S.omega_on(S.T1bar[0]) * w1[0]
    return out


def tension_b(phi: MapField, S: PseudohermitianData, D: MapDerivatives | None = None) -> np.ndarray:
    """``delta_b T phi``."""
    if D is None:
        D = differentiate(phi, S)
    return divergence_b(D.T1, D.T1bar, phi, S, D)


def reeb_second(phi: MapField, S: PseudohermitianData, D: MapDerivatives | None = None) -> np.ndarray:
    """``nabla_R (R phi)``."""
    if D is None:
        D = differentiate(phi, S)
    return covariant(phi, S, S.reeb, D.R, D.q, D.R)


def delta_nabla(sigma: np.ndarray, phi: MapField, S: PseudohermitianData,
                D: MapDerivatives | None = None) -> np.ndarray:
    """``delta_b nabla sigma`` for a section ``sigma`` along ``phi``."""
    if D is None:
        D = differentiate(phi, S)
    w1 = np.stack([covariant(phi, S, S.T1[a], sigma, D.q, D.T1[a]) for a in range(S.n)])
    w1bar = np.stack([covariant(phi, S, S.T1bar[a], sigma, D.q, D.T1bar[a]) for a in range(S.n)])
    return divergence_b(w1, w1bar, phi, S, D)


def s_b(X: np.ndarray, phi: MapField, S: PseudohermitianData,
        D: MapDerivatives | None = None) -> np.ndarray:
    """``R(X, T_a phi) T_abar phi + R(X, T_abar phi) T_a phi`` summed over ``a``."""
    if D is None:
        D = differentiate(phi, S)
    h = phi.target
    out = 0
    for a in range(S.n):
        out = out + h.curvature(D.q, X, D.T1[a], D.T1bar[a])
        out = out + h.curvature(D.q, X, D.T1bar[a], D.T1[a])
    return h.project(D.q, out) if np.ndim(out) else np.zeros_like(X)


def im_part(Z: np.ndarray) -> np.ndarray:
    """``(Z - conj Z) / 2i`` componentwise."""
    return ((Z - np.conj(Z)) / 2j).real


def inner(phi: MapField, q, a, b):
    return phi.target.inner(q, a, b)
