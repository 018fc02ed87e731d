"""Pseudohermitian model structures and their Tanaka-Webster data.

Forms and vector fields are stored by their components in a global frame of
the grid (see :mod:`crlab.grid`).  On the Heisenberg nilmanifold this is the
left-invariant frame ``(X, Y, T)`` so that every left-invariant coefficient is
periodic; the coframe dual to it is ``(dx, dy, dt - y dx)``.

For ``n = 1`` the solver takes a Levi-normalized coframe ``(theta, theta1)``
with ``d theta = i theta1 ^ conj(theta1)`` and returns the Reeb field, the
adapted frame ``(R, T1, T1bar)``, the connection form ``omega`` and torsion
``A`` determined by

    d theta1 = theta1 ^ omega + conj(A) theta ^ conj(theta1),   omega + conj(omega) = 0,

and the Webster curvature read off from ``d omega``.  ``A`` is the torsion
coefficient that enters ``P1`` and ``F1``; with it the obstruction is
conformally covariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Frame,
    GridSpec,
    contract,
    exterior_derivative,
    heisenberg_frame,
    one_form_apply,
    pointwise_solve,
    top_density,
    two_form_apply,
    wedge,
)

STRUCTURE_TOL = 1e-8


class DimensionMismatch(ValueError):
    pass


class StructureResidual(ArithmeticError):
    pass


class NormalizationFailure(ArithmeticError):
    pass


@dataclass(frozen=True)
class ContactCoframe:
    """Contact form ``theta`` and unitary coframe ``theta1[alpha]``.

    ``theta`` has shape ``(d, *dims)`` and ``theta1`` shape ``(n, d, *dims)``,
    both as components in the coframe dual to ``frame``.
    """

    spec: GridSpec
    frame: Frame
    theta: np.ndarray
    theta1: np.ndarray

    @property
    def n(self) -> int:
        return self.theta1.shape[0]

    @property
    def d(self) -> int:
        return self.spec.ndim

    def matrix(self) -> np.ndarray:
        """Rows ``theta, theta^a, conj(theta^a)`` as a ``(d, d, *dims)`` field."""
        rows = [self.theta] + list(self.theta1) + list(np.conj(self.theta1))
        return np.stack([np.broadcast_to(r, (self.d,) + self.spec.dims) for r in rows])

    def levi_residual(self) -> float:
        """``max |d theta - i sum theta^a ^ conj(theta^a)|``."""
        dtheta = exterior_derivative(self.theta, self.frame)
        rhs = sum(1j * wedge(t, np.conj(t), self.spec) for t in self.theta1)
        return float(np.max(np.abs(dtheta - rhs)))


def heisenberg(n: int, spec: GridSpec) -> ContactCoframe:
    """Flat Heisenberg coframe ``theta = dt - sum y_a dx_a``, ``theta^a = (dx_a + i dy_a)/sqrt 2``."""
    if n < 1:
        raise ValueError("n must be positive")
    d = 2 * n + 1
    if spec.ndim != d:
        raise DimensionMismatch(f"heisenberg({n}) needs {d} axes, grid has {spec.ndim}")
    frame = heisenberg_frame(spec)
    theta = np.zeros((d,) + spec.dims, dtype=complex)
    theta[d - 1] = 1.0
    theta1 = np.zeros((n, d) + spec.dims, dtype=complex)
    for a in range(n):
        theta1[a, 2 * a] = 1 / math.sqrt(2)
        theta1[a, 2 * a + 1] = 1j / math.sqrt(2)
    return ContactCoframe(spec, frame, theta, theta1)


def dual_frame(cf: ContactCoframe) -> np.ndarray:
    """Vector fields dual to ``(theta, theta^a, conj theta^a)``; shape ``(d, d, *dims)``.

    ``out[:, 0]`` is the Reeb field, ``out[:, 1:n+1]`` the ``T_a`` and the rest
    their conjugates.
    """
    C = cf.matrix()
    eye = np.broadcast_to(np.eye(cf.d).reshape((cf.d, cf.d) + (1,) * cf.spec.ndim),
                          C.shape).astype(complex)
    return pointwise_solve(C, eye)


def reeb_field(cf: ContactCoframe) -> np.ndarray:
    """Reeb field from ``theta(R) = 1``, ``iota_R d theta = 0``.

    Solved pointwise as ``(Omega + theta theta^T) R = theta`` with
    ``Omega_ij = d theta(E_i, E_j)``; the system is invertible exactly when
    ``theta`` is contact.
    """
    spec = cf.spec
    d = cf.d
    dtheta = exterior_derivative(cf.theta, cf.frame)
    M = np.zeros((d, d) + spec.dims, dtype=complex)
    for p, (i, j) in enumerate(spec.pairs):
        M[i, j] = dtheta[p]
        M[j, i] = -dtheta[p]
    M += cf.theta[:, None] * cf.theta[None, :]
    return pointwise_solve(M, cf.theta.astype(complex))


def reeb_residual(cf: ContactCoframe, R: np.ndarray) -> float:
    dtheta = exterior_derivative(cf.theta, cf.frame)
    res = np.max(np.abs(one_form_apply(cf.theta, R) - 1.0))
    d = cf.d
    for k in range(d):
        E = np.zeros((d,) + (1,) * cf.spec.ndim)
        E[k] = 1.0
        res = max(res, np.max(np.abs(two_form_apply(dtheta, R, E, cf.spec))))
    return float(res)


@dataclass
class PseudohermitianData:
    """Tanaka-Webster data of a pseudohermitian structure.

    Vector fields (``T1[a]``, ``reeb``) and one-forms (``omega``) are frame
    components of shape ``(d, *b)`` with ``b`` broadcastable to the grid.
    ``omega`` and ``torsion`` are ``None`` for the flat higher-dimensional
    model, where they vanish.
    """

    coframe: ContactCoframe
    T1: np.ndarray
    reeb: np.ndarray
    omega: np.ndarray | None
    torsion: np.ndarray | None
    scal_w: np.ndarray | None
    vol_density: np.ndarray
    residuals: dict = field(default_factory=dict)
    flat: bool = False

    @property
    def spec(self) -> GridSpec:
        return self.coframe.spec

    @property
    def frame(self) -> Frame:
        return self.coframe.frame

    @property
    def n(self) -> int:
        return self.coframe.n

    @property
    def T1bar(self) -> np.ndarray:
        return np.conj(self.T1)

    def apply(self, V: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Directional derivative of (a stack of) grid fields along ``V``."""
        return contract(V, self.frame.grad(f))

    def omega_on(self, V: np.ndarray):
        """``omega(V)`` as a grid field, or ``0`` when the connection vanishes."""
        if self.omega is None:
            return 0.0
        return one_form_apply(self.omega, V)


def _flat_data(cf: ContactCoframe) -> PseudohermitianData:
    spec = cf.spec
    n, d = cf.n, cf.d
    b = (1,) * spec.ndim
    T1 = np.zeros((n, d) + b, dtype=complex)
    for a in range(n):
        T1[a, 2 * a] = 1 / math.sqrt(2)
        T1[a, 2 * a + 1] = -1j / math.sqrt(2)
    R = np.zeros((d,) + b)
    R[d - 1] = 1.0
    vol = np.full(b, float(math.factorial(n)))
    return PseudohermitianData(cf, T1, R, None, None, None, vol,
                               residuals={"structure": 0.0, "levi": cf.levi_residual(),
                                          "reeb": 0.0, "unitary": 0.0},
                               flat=True)


def flat_heisenberg(n: int, spec: GridSpec) -> PseudohermitianData:
    """Tanaka-Webster data of the flat Heisenberg model ``H^n`` (closed form)."""
    return _flat_data(heisenberg(n, spec))


def solve_structure(cf: ContactCoframe, tol: float = STRUCTURE_TOL) -> PseudohermitianData:
    """Solve the structure equations of a Levi-normalized ``n = 1`` coframe."""
    if cf.n != 1:
        raise DimensionMismatch("the structure solver handles n = 1 only")
    spec = cf.spec
    th, th1 = cf.theta, cf.theta1[0]
    th1b = np.conj(th1)
    duals = dual_frame(cf)
    # The adapted frame is dual to the coframe; it carries the Reeb field
    # whenever the coframe is Levi-normalized.
    R, T1, T1b = duals[:, 0], duals[:, 1], duals[:, 2]
    R_def = reeb_field(cf)

    dth1 = exterior_derivative(th1, cf.frame)
    a = two_form_apply(dth1, R, T1, spec)
    b = two_form_apply(dth1, R, T1b, spec)
    c = two_form_apply(dth1, T1, T1b, spec)
    omega = -a * th - np.conj(c) * th1 + c * th1b
    A = np.conj(b)

    rebuilt = wedge(th1, omega, spec) + b * wedge(th, th1b, spec)
    struct_res = float(np.max(np.abs(dth1 - rebuilt)))
    if struct_res > tol:
        raise StructureResidual(f"structure equation residual {struct_res:.3e} exceeds {tol:.1e}")

    domega = exterior_derivative(omega, cf.frame)
    W = two_form_apply(domega, T1, T1b, spec)
    dtheta = exterior_derivative(th, cf.frame)
    vol = top_density(th, dtheta, spec).real

    residuals = {
        "structure": struct_res,
        "levi": cf.levi_residual(),
        "reeb": reeb_residual(cf, R),
        "reeb_dual": float(np.max(np.abs(R - R_def))),
        "unitary": float(np.max(np.abs(a + np.conj(a)))),
        "scal_imag": float(np.max(np.abs(W.imag))),
    }
    return PseudohermitianData(cf, T1[None], R.real, omega, A, 2.0 * W.real, vol, residuals)


def levi_tolerance(spec: GridSpec) -> float:
    """Tolerance on the Levi residual of a rescaled coframe.

    Spectral grids resolve the chain rule to roundoff; the fourth-order
    stencil only to ``O(h^4)``, so its tolerance scales with the mesh.
    """
    if spec.scheme == "spectral":
        return STRUCTURE_TOL
    return max(STRUCTURE_TOL, 1e3 * max(spec.spacing) ** 4)


def conformal_rescale(cf: ContactCoframe, u: np.ndarray, tol: float | None = None) -> ContactCoframe:
    """Rescale ``theta -> e^{2u} theta`` and adapt ``theta1`` to stay Levi-normalized.

    ``theta1 -> e^u (theta1 + 2i u_{1bar} theta)`` with ``u_{1bar} = T1bar u``.
    """
    if cf.n != 1:
        raise DimensionMismatch("conformal rescaling is implemented for n = 1")
    u = np.asarray(u)
    if np.iscomplexobj(u):
        if np.max(np.abs(u.imag)) > 0:
            raise ValueError("conformal factor must be real")
        u = u.real
    u = np.broadcast_to(u, cf.spec.dims)
    duals = dual_frame(cf)
    u1b = contract(duals[:, 2], cf.frame.grad(u))
    theta = np.exp(2 * u) * cf.theta
    theta1 = (np.exp(u) * (cf.theta1[0] + 2j * u1b * cf.theta))[None]
    out = ContactCoframe(cf.spec, cf.frame, theta, theta1)
    res = out.levi_residual()
    if tol is None:
        tol = levi_tolerance(cf.spec)
    if res > tol:
        raise NormalizationFailure(f"Levi residual {res:.3e} exceeds {tol:.1e}")
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Built-in model: ``heisenberg`` of dimension ``2n+1`` or its conformal rescaling."""

    kind: str
    grid: GridSpec
    n: int = 1
    u: object = None  # grid array or callable(spec) -> array

    def coframe(self) -> ContactCoframe:
        cf = heisenberg(self.n, self.grid)
        if self.kind == "heisenberg":
            return cf
        if self.kind == "heisenberg_rescaled":
            if self.n != 1:
                raise DimensionMismatch("rescaled models are defined for n = 1")
            u = self.u(self.grid) if callable(self.u) else self.u
            return conformal_rescale(cf, u)
        raise ValueError(f"unknown model kind {self.kind!r}")

    def build(self) -> PseudohermitianData:
        if self.kind == "heisenberg" and self.n > 1:
            return flat_heisenberg(self.n, self.grid)
        return solve_structure(self.coframe())
