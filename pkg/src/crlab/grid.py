"""Periodic grid functions, frame derivatives, exterior calculus and quadrature.

Grid scalars are plain numpy arrays whose trailing axes match ``GridSpec.dims``;
leading axes (if any) index components.  One-forms and vector fields carry
their ``d`` components on axis 0; two-forms store the ``d(d-1)/2`` independent
components on axis 0 in the order of :attr:`GridSpec.pairs`.

Derivatives are taken along a :class:`Frame`, a global frame ``E_0..E_{d-1}``
with constant structure constants ``[E_i, E_j] = c_ij^k E_k``.  The coordinate
frame (``E_i = d/dx_i``) is the default; the Heisenberg frame
``X_a = d/dx_a + y_a d/dt``, ``Y_a = d/dy_a``, ``T = d/dt`` keeps every
left-invariant coefficient periodic on the nilmanifold.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.fft

SCHEMES = ("spectral", "fd4")


class SingularFrame(ValueError):
    """A pointwise linear system is (numerically) singular."""


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CRLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``prod [0, period_i)``."""

    dims: tuple[int, ...]
    periods: tuple[float, ...] | None = None
    scheme: str = "spectral"
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if any(n < 8 for n in dims):
            raise ValueError(f"every grid dimension must be >= 8, got {dims}")
        periods = self.periods
        if periods is None:
            periods = (1.0,) * len(dims)
        periods = tuple(float(p) for p in periods)
        if len(periods) != len(dims) or any(p <= 0 for p in periods):
            raise ValueError("periods must be positive, one per axis")
        object.__setattr__(self, "periods", periods)
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown derivative scheme {self.scheme!r}")
        names = self.names
        if names is None:
            names = default_axis_names(len(dims))
        if len(names) != len(dims):
            raise ValueError("one axis name per dimension")
        object.__setattr__(self, "names", tuple(names))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(p / n for p, n in zip(self.periods, self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.ndim), 2))

    def axis(self, name: str) -> int:
        return self.names.index(name)

    def coord(self, axis: int) -> np.ndarray:
        """Coordinate values along ``axis``, shaped to broadcast over the grid."""
        n = self.dims[axis]
        shape = [1] * self.ndim
        shape[axis] = n
        return (np.arange(n) * self.spacing[axis]).reshape(shape)

    def coords(self) -> dict[str, np.ndarray]:
        return {name: self.coord(i) for i, name in enumerate(self.names)}

    def with_scheme(self, scheme: str) -> "GridSpec":
        return GridSpec(self.dims, self.periods, scheme, self.names)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(n * factor for n in self.dims), self.periods,
                        self.scheme, self.names)

    def zeros(self, *lead, dtype=complex) -> np.ndarray:
        return np.zeros(tuple(lead) + self.dims, dtype=dtype)

    @cached_property
    def _wavenumbers(self) -> tuple[np.ndarray, ...]:
        out = []
        for n, p in zip(self.dims, self.periods):
            k = 2 * np.pi * np.fft.fftfreq(n, d=p / n)
            if n % 2 == 0:
                # Nyquist mode has no odd derivative; dropping it keeps D skew.
                k[n // 2] = 0.0
            out.append(k)
        return tuple(out)

    def wavenumber(self, axis: int) -> np.ndarray:
        """Angular wavenumbers of ``axis`` shaped to broadcast over the grid."""
        shape = [1] * self.ndim
        shape[axis] = self.dims[axis]
        return self._wavenumbers[axis].reshape(shape)


def default_axis_names(d: int) -> tuple[str, ...]:
    if d == 3:
        return ("x", "y", "t")
    if d % 2 == 1 and d > 3:
        n = (d - 1) // 2
        names = []
        for a in range(1, n + 1):
            names += [f"x{a}", f"y{a}"]
        return tuple(names) + ("t",)
    return tuple(f"x{i}" for i in range(d))


def _check_finite(a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite values produced on the grid")
    return a


def derivative(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Coordinate derivative of ``f`` along grid axis ``axis``.

    Leading component axes of ``f`` are carried through untouched.
    """
    if not 0 <= axis < spec.ndim:
        raise IndexError(f"axis {axis} out of range for {spec.ndim}-d grid")
    ax = f.ndim - spec.ndim + axis
    if f.shape[ax] == 1 or not np.any(np.diff(f, axis=ax)):
        # constant along the axis: the derivative is exactly zero
        return np.zeros(np.broadcast_shapes(f.shape[:ax] + (spec.dims[axis],) + f.shape[ax + 1:]),
                        dtype=f.dtype)
    if spec.scheme == "spectral":
        n = spec.dims[axis]
        shape = [1] * f.ndim
        if np.iscomplexobj(f):
            k = spec._wavenumbers[axis]
            shape[ax] = k.size
            fh = scipy.fft.fft(f, axis=ax, workers=_workers())
            fh *= 1j * k.reshape(shape)
            out = scipy.fft.ifft(fh, axis=ax, workers=_workers())
        else:
            k = spec._wavenumbers[axis][: n // 2 + 1]
            shape[ax] = k.size
            fh = scipy.fft.rfft(f, axis=ax, workers=_workers())
            fh *= 1j * k.reshape(shape)
            out = scipy.fft.irfft(fh, n=n, axis=ax, workers=_workers())
    else:
        h = spec.spacing[axis]
        out = (8.0 * (np.roll(f, -1, ax) - np.roll(f, 1, ax))
               - (np.roll(f, -2, ax) - np.roll(f, 2, ax))) / (12.0 * h)
    return _check_finite(out)


def integrate(f: np.ndarray, spec: GridSpec, density=1.0) -> complex:
    """Periodic trapezoidal quadrature of ``f * density`` over the grid."""
    density = np.asarray(density)
    if density.ndim and np.any(density == 0):
        raise ValueError("volume density vanishes somewhere on the grid")
    axes = tuple(range(f.ndim - spec.ndim, f.ndim))
    total = np.sum(f * density, axis=axes) * spec.cell_volume
    if np.ndim(total) == 0:
        return complex(total)
    return total


def l2_norm(f: np.ndarray, spec: GridSpec, density=1.0) -> float:
    """L2 norm over all components, ``sqrt(int |f|^2 density)``."""
    sq = np.abs(f) ** 2
    if f.ndim > spec.ndim:
        sq = sq.reshape((-1,) + spec.dims).sum(axis=0)
    return float(np.sqrt(integrate(sq, spec, density).real))


class Frame:
    """Global frame ``E_i = sum_j K_ij d/dx_j`` with constant structure constants.

    ``coeffs[i]`` lists ``(j, K_ij)`` pairs with ``K_ij`` a scalar or a grid
    array.  ``structure[i, j, k]`` holds ``c_ij^k`` with
    ``[E_i, E_j] = c_ij^k E_k``.
    """

    def __init__(self, spec: GridSpec, coeffs, structure, name="frame"):
        self.spec = spec
        self.coeffs = [list(c) for c in coeffs]
        self.structure = np.asarray(structure, dtype=float)
        self.name = name
        d = spec.ndim
        if len(self.coeffs) != d or self.structure.shape != (d, d, d):
            raise ValueError("frame must have one vector per axis")

    @property
    def holonomic(self) -> bool:
        return not np.any(self.structure)

    def apply(self, i: int, f: np.ndarray) -> np.ndarray:
        """``E_i f``."""
        out = None
        for j, k in self.coeffs[i]:
            term = derivative(f, self.spec, j)
            if not (np.isscalar(k) and k == 1):
                term = term * k
            out = term if out is None else out + term
        return out

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Stack of ``E_i f`` along a new leading axis."""
        partial = {}
        out = []
        for i in range(self.spec.ndim):
            acc = None
            for j, k in self.coeffs[i]:
                if j not in partial:
                    partial[j] = derivative(f, self.spec, j)
                term = partial[j] if (np.isscalar(k) and k == 1) else partial[j] * k
                acc = term if acc is None else acc + term
            out.append(acc)
        return np.stack(out)

    def coordinate_matrix(self) -> np.ndarray:
        """``K_ij = E_i(x_j)`` broadcast to ``(d, d, *dims)``."""
        d = self.spec.ndim
        K = np.zeros((d, d) + self.spec.dims)
        for i, row in enumerate(self.coeffs):
            for j, k in row:
                K[i, j] = k
        return K


def coordinate_frame(spec: GridSpec) -> Frame:
    d = spec.ndim
    return Frame(spec, [[(i, 1)] for i in range(d)], np.zeros((d, d, d)),
                 name="coordinate")


def heisenberg_frame(spec: GridSpec) -> Frame:
    """Left-invariant frame ``(X_1, Y_1, ..., X_n, Y_n, T)`` of the Heisenberg group.

    ``X_a = d/dx_a + y_a d/dt``, ``Y_a = d/dy_a``, ``T = d/dt``; the only
    nonzero brackets are ``[X_a, Y_a] = -T``.
    """
    d = spec.ndim
    if d % 2 == 0:
        raise ValueError("Heisenberg frame needs an odd number of axes")
    n = (d - 1) // 2
    t = d - 1
    coeffs = []
    c = np.zeros((d, d, d))
    for a in range(n):
        xa, ya = 2 * a, 2 * a + 1
        coeffs.append([(xa, 1), (t, spec.coord(ya))])
        coeffs.append([(ya, 1)])
        c[xa, ya, t] = -1.0
        c[ya, xa, t] = 1.0
    coeffs.append([(t, 1)])
    return Frame(spec, coeffs, c, name="heisenberg")


def apply_vector(frame: Frame, V: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Directional derivative ``V f`` for ``V = sum_i V^i E_i``."""
    return contract(V, frame.grad(f))


def contract(V: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``sum_i V^i g_i`` where ``g`` carries extra component axes after axis 0.

    ``V`` has shape ``(d, *b)`` with ``b`` broadcastable to the grid; ``g`` has
    shape ``(d, *lead, *dims)``.
    """
    extra = g.ndim - V.ndim
    Vb = V.reshape(V.shape[:1] + (1,) * extra + V.shape[1:])
    return np.sum(Vb * g, axis=0)


def exterior_derivative(omega: np.ndarray, frame: Frame) -> np.ndarray:
    """``(d omega)_ij = E_i omega_j - E_j omega_i - c_ij^k omega_k`` for ``i < j``."""
    spec = frame.spec
    d = spec.ndim
    if omega.shape[0] != d:
        raise ValueError("one-form must have one component per axis")
    grads = [frame.grad(omega[j]) for j in range(d)]  # grads[j][i] = E_i omega_j
    out = []
    for i, j in spec.pairs:
        comp = grads[j][i] - grads[i][j]
        for k in range(d):
            c = frame.structure[i, j, k]
            if c:
                comp = comp - c * omega[k]
        out.append(comp)
    return np.stack(out)


def wedge(a: np.ndarray, b: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Wedge of two one-forms as a two-form."""
    return np.stack([a[i] * b[j] - a[j] * b[i] for i, j in spec.pairs])


def two_form_apply(F: np.ndarray, V: np.ndarray, W: np.ndarray,
                   spec: GridSpec) -> np.ndarray:
    """Evaluate the two-form ``F`` on the vector fields ``V``, ``W``."""
    out = 0
    for p, (i, j) in enumerate(spec.pairs):
        out = out + F[p] * (V[i] * W[j] - V[j] * W[i])
    return out


def one_form_apply(alpha: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.sum(alpha * V, axis=0)


def top_density(alpha: np.ndarray, F: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Density of ``alpha ^ F`` against ``E^0 ^ E^1 ^ E^2`` (three axes)."""
    if spec.ndim != 3:
        raise ValueError("top_density is defined for three axes")
    F01, F02, F12 = F
    return alpha[0] * F12 - alpha[1] * F02 + alpha[2] * F01


def pointwise_solve(A: np.ndarray, b: np.ndarray, cond_max: float = 1e12) -> np.ndarray:
    """Solve ``A x = b`` independently at every grid point.

    ``A`` has shape ``(k, k, *dims)`` and ``b`` shape ``(k, *dims)`` or
    ``(k, r, *dims)`` for several right-hand sides.
    """
    k = A.shape[0]
    grid_shape = A.shape[2:]
    Am = np.moveaxis(A.reshape(k, k, -1), -1, 0)
    multi = b.ndim == A.ndim
    if multi:
        bm = np.moveaxis(b.reshape(k, b.shape[1], -1), -1, 0)
    else:
        bm = np.moveaxis(b.reshape(k, -1), -1, 0)[..., None]
    cond = np.linalg.cond(Am)
    if not np.all(np.isfinite(cond)) or np.max(cond) > cond_max:
        raise SingularFrame(
            f"pointwise system is singular (max condition number {np.max(cond):.3g})")
    x = np.linalg.solve(Am, bm)
    x = np.moveaxis(x, 0, -1)
    if multi:
        return x.reshape((k, b.shape[1]) + grid_shape)
    return x[:, 0].reshape((k,) + grid_shape)

