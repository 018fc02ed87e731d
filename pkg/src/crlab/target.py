"""Riemannian targets: metric, Levi-Civita connection, curvature, exponential map.

Sections of the pulled-back tangent bundle are stored as components in a
target frame ``F_a(q)``.  Flat tori and charts use the coordinate frame, the
Webster target uses its left-invariant orthonormal frame and the round sphere
uses ambient ``R^3`` components of tangent vectors.  Each target provides

* ``to_frame(q, dq)``: frame components of a coordinate velocity,
* ``connection(q, X, s)``: the term ``Gamma^a_bc(q) X^b s^c`` in
  ``nabla_V s = V(s^a) + Gamma^a_bc (V phi)^b s^c``,
* ``inner``, ``curvature`` (both complex-bilinear), ``exp`` and ``project``.

Points ``q`` and sections carry the target index on axis 0 and broadcast over
any trailing grid axes.  The curvature convention is
``R(X, Y) Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``, which on
the unit sphere gives ``R(X, Y) Z = <Y, Z> X - <X, Z> Y``.
"""

from __future__ import annotations

import math

import numpy as np


class StepTooLarge(ValueError):
    pass


def _einsum_gamma(G, X, s):
    return np.einsum("abc...,b...,c...->a...", G, X, s)


class TargetMetric:
    """Base class; subclasses override the geometric primitives."""

    variant = "abstract"
    dim = 0
    flat = False
    ambient = False

    def to_frame(self, q, dq):
        return dq

    def connection(self, q, X, s):
        return 0.0

    def project(self, q, s):
        return s

    def metric(self, q):
        m = self.dim
        shape = (m, m) + np.shape(q)[1:]
        return np.broadcast_to(np.eye(m).reshape((m, m) + (1,) * (len(shape) - 2)), shape)

    def inner(self, q, a, b):
        """Complex-bilinear ``h(a, b)`` in frame components."""
        return np.einsum("ab...,a...,b...->...", self.metric(q), a, b)

    def curvature(self, q, X, Y, Z):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y), np.shape(Z)), dtype=complex)

    def exp(self, q, v):
        raise NotImplementedError


class FlatTorus(TargetMetric):
    """Flat torus ``R^m / (periods Z^m)`` in coordinates."""

    variant = "flat_torus"
    flat = True

    def __init__(self, m: int, periods=None):
        if m < 1:
            raise ValueError("torus dimension must be positive")
        self.dim = m
        self.periods = np.ones(m) if periods is None else np.asarray(periods, dtype=float)

    def exp(self, q, v):
        """``q + v`` reduced modulo the periods."""
        p = self.periods.reshape((-1,) + (1,) * (np.ndim(q) - 1))
        return np.mod(np.asarray(q) + np.real(v), p)


class EmbeddedSphere2(TargetMetric):
    """Unit sphere ``S^2`` in ``R^3``; sections are ambient tangent vectors."""

    variant = "embedded_sphere_2"
    dim = 3
    ambient = True
    guard = math.pi

    def project(self, q, s):
        return s - np.sum(s * q, axis=0) * q

    def curvature(self, q, X, Y, Z):
        return np.sum(Y * Z, axis=0) * X - np.sum(X * Z, axis=0) * Y

    def exp(self, q, v):
        v = np.real(v)
        nv = np.sqrt(np.sum(v * v, axis=0))
        if np.any(nv >= self.guard):
            raise StepTooLarge(f"tangent vector of length {np.max(nv):.3f} exceeds pi")
        safe = np.where(nv > 0, nv, 1.0)
        out = np.cos(nv) * q + np.where(nv > 0, np.sin(nv) / safe, 1.0) * v
        return out / np.sqrt(np.sum(out * out, axis=0))


def _rk4_geodesic(q, v, velocity, accel, n_steps):
    """Integrate ``q' = velocity(q, v)``, ``v' = accel(q, v)`` over ``[0, 1]``."""
    h = 1.0 / n_steps
    for _ in range(n_steps):
        k1q, k1v = velocity(q, v), accel(q, v)
        q2, v2 = q + 0.5 * h * k1q, v + 0.5 * h * k1v
        k2q, k2v = velocity(q2, v2), accel(q2, v2)
        q3, v3 = q + 0.5 * h * k2q, v + 0.5 * h * k2v
        k3q, k3v = velocity(q3, v3), accel(q3, v3)
        q4, v4 = q + h * k3q, v + h * k3v
        k4q, k4v = velocity(q4, v4), accel(q4, v4)
        q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return q


GEODESIC_STEPS = 100  # RK4 step = 1e-2 * |v| in arc length


class Chart(TargetMetric):
    """Target given by a metric in a single global chart.

    Args:
        m: chart dimension.
        metric_fn: ``q -> g_ij(q)`` with shape ``(m, m, *q.shape[1:])``.
        christoffel_fn: optional ``q -> Gamma^k_ij(q)`` of shape
            ``(m, m, m, ...)`` indexed ``[k, i, j]``. When omitted the symbols
            are formed from central differences of ``metric_fn`` with step ``fd_step``.
    """

    variant = "chart"

    def __init__(self, m, metric_fn, christoffel_fn=None, fd_step=1e-4):
        self.dim = m
        self.metric_fn = metric_fn
        self.christoffel_fn = christoffel_fn
        self.fd_step = fd_step
        self._cache = (None, None)

    def metric(self, q):
        return self.metric_fn(q)

    def _metric_derivs(self, q):
        m, h = self.dim, self.fd_step
        dg = []
        for k in range(m):
            e = np.zeros((m,) + (1,) * (np.ndim(q) - 1))
            e[k] = h
            dg.append((self.metric_fn(q + e) - self.metric_fn(q - e)) / (2 * h))
        return np.stack(dg)  # dg[k, i, j] = d_k g_ij

    def christoffel(self, q):
        cached_q, cached = self._cache
        if cached_q is q:
            return cached
        if self.christoffel_fn is not None:
            G = self.christoffel_fn(q)
        else:
            dg = self._metric_derivs(q)
            low = _lower_christoffel(dg)
            ginv = np.moveaxis(np.linalg.inv(np.moveaxis(self.metric_fn(q), (0, 1), (-2, -1))), (-2, -1), (0, 1))
            G = np.einsum("kl...,lij...->kij...", ginv, low)
        self._cache = (q, G)
        return G

    def connection(self, q, X, s):
        return _einsum_gamma(self.christoffel(q), X, s)

    def _christoffel_derivs(self, q):
        m, h = self.dim, self.fd_step
        out = []
        for k in range(m):
            e = np.zeros((m,) + (1,) * (np.ndim(q) - 1))
            e[k] = h
            out.append((self.christoffel(q + e) - self.christoffel(q - e)) / (2 * h))
        return np.stack(out)  # dG[l, a, b, c] = d_l Gamma^a_bc

    def riemann(self, q):
        """``Riem[a, e, i, j]``: component ``a`` of ``R(d_i, d_j) d_e``."""
        q = np.asarray(q, dtype=float)
        G = self.christoffel(q)
        dG = self._christoffel_derivs(q)
        # R^a_{e i j} = d_i G^a_{j e} - d_j G^a_{i e} + G^a_{i m} G^m_{j e} - G^a_{j m} G^m_{i e}
        t1 = np.einsum("iaje...->aeij...", dG)
        t2 = np.einsum("jaie...->aeij...", dG)
        t3 = np.einsum("aim...,mje...->aeij...", G, G)
        t4 = np.einsum("ajm...,mie...->aeij...", G, G)
        return t1 - t2 + t3 - t4

    def curvature(self, q, X, Y, Z):
        return np.einsum("aeij...,i...,j...,e...->a...", self.riemann(q), X, Y, Z)

    def exp(self, q, v):
        q = np.asarray(q, dtype=float)
        v = np.real(v)

        def accel(qq, vv):
            return -np.einsum("kij...,i...,j...->k...", self.christoffel(qq), vv, vv)

        return _rk4_geodesic(q, v, lambda qq, vv: vv, accel, GEODESIC_STEPS)


def _lower_christoffel(dg):
    """``Gamma_{l, ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2`` from ``dg[k, i, j] = d_k g_ij``."""
    a = np.einsum("ijl...->lij...", dg)   # d_i g_jl
    b = np.einsum("jil...->lij...", dg)   # d_j g_il
    c = dg                                 # d_l g_ij
    return 0.5 * (a + b - c)


def heisenberg_metric(q):
    """Coordinate metric of ``(dt - y dx)^2 + dx^2 + dy^2`` at points ``q = (x, y, t)``."""
    y = np.asarray(q, dtype=float)[1]
    one = np.ones_like(y)
    zero = np.zeros_like(y)
    return np.stack([
        np.stack([1 + y * y, zero, -y]),
        np.stack([zero, one, zero]),
        np.stack([-y, zero, one]),
    ])


def heisenberg_christoffel(q):
    """Closed-form ``Gamma^k_ij`` of :func:`heisenberg_metric`, indexed ``[k, i, j]``."""
    y = np.asarray(q, dtype=float)[1]
    z = np.zeros_like(y)
    low = np.zeros((3, 3, 3) + y.shape)
    # Gamma_{l, ij}; only d_y g_xx = 2y and d_y g_xt = -1 are nonzero.
    low[1, 0, 0] = -y
    low[1, 0, 2] = low[1, 2, 0] = 0.5
    low[0, 0, 1] = low[0, 1, 0] = y
    low[0, 2, 1] = low[0, 1, 2] = -0.5
    low[2, 0, 1] = low[2, 1, 0] = -0.5
    ginv = np.stack([
        np.stack([1 + z, z, y]),
        np.stack([z, 1 + z, z]),
        np.stack([y, z, 1 + y * y]),
    ])
    return np.einsum("kl...,lij...->kij...", ginv, low)


class WebsterHeisenberg(TargetMetric):
    """Heisenberg group with ``g = (dt - y dx)^2 + dx^2 + dy^2`` (Webster metric of the flat model).

    Sections use the orthonormal left-invariant frame
    ``F_1 = d/dx + y d/dt``, ``F_2 = d/dy``, ``F_3 = d/dt``, in which the
    Levi-Civita symbols and the curvature tensor are constant.  The point set
    is parameterised by coordinates ``(x, y, t)``.
    """

    variant = "webster_metric"
    dim = 3

    def __init__(self):
        c = np.zeros((3, 3, 3))  # [F_a, F_b] = c[a, b, k] F_k
        c[0, 1, 2], c[1, 0, 2] = -1.0, 1.0
        # Koszul formula in an orthonormal frame.
        low = 0.5 * (c - np.einsum("bca->abc", c) + np.einsum("cab->abc", c))
        self.gamma = np.einsum("abc->cab", low)  # gamma[c, a, b]: F_c part of nabla_{F_a} F_b
        self.structure = c
        G = self.gamma
        riem = (np.einsum("aim,mje->aeij", G, G) - np.einsum("ajm,mie->aeij", G, G)
                - np.einsum("ijk,ake->aeij", c, G))
        self.riem = riem  # riem[a, e, i, j]: F_a part of R(F_i, F_j) F_e
        self.chart = Chart(3, heisenberg_metric, heisenberg_christoffel)

    def metric(self, q):
        return super().metric(q)

    def to_frame(self, q, dq):
        return np.stack([dq[0], dq[1], dq[2] - q[1] * dq[0]])

    def from_frame(self, q, v):
        return np.stack([v[0], v[1], v[2] + q[1] * v[0]])

    def connection(self, q, X, s):
        return np.einsum("abc,b...,c...->a...", self.gamma, X, s)

    def curvature(self, q, X, Y, Z):
        return np.einsum("aeij,i...,j...,e...->a...", self.riem, X, Y, Z)

    def exp(self, q, v):
        q = np.asarray(q, dtype=float)
        v = np.real(v)
        G = self.gamma

        def accel(qq, vv):
            return -np.einsum("abc,b...,c...->a...", G, vv, vv)

        return _rk4_geodesic(q, v, self.from_frame, accel, GEODESIC_STEPS)


def flat_torus(m: int, periods=None) -> FlatTorus:
    return FlatTorus(m, periods)


def embedded_sphere_2() -> EmbeddedSphere2:
    return EmbeddedSphere2()


def chart(m, metric_fn, christoffel_fn=None) -> Chart:
    return Chart(m, metric_fn, christoffel_fn)


def webster_metric(model: str = "heisenberg") -> WebsterHeisenberg:
    if model != "heisenberg":
        raise ValueError("only the Heisenberg Webster metric is built in")
    return WebsterHeisenberg()
