"""Exact diagonalization and the spectral quantities built on it.

Everything here works on a :class:`SpectralData` snapshot: Green functions,
eigenfunction correlators (plain, interpolated and summed over windows of
sites), one-particle reduced density matrix elements and heat-kernel
diagonals.  Indices passed to these functions are row positions in the
diagonalized operator; :meth:`SpectralData.locate` maps configuration
ordinals of the parent space to positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sl
import scipy.sparse.linalg as sla
from scipy.optimize import brentq

from .configspace import ConfigSpace, DomainError, Interval
from .operators import (
    DisorderRealization,
    ModelParams,
    SymmetricOperator,
    build_hamiltonian,
    droplet_band,
    restrict,
    sector_indices,
)

DEFAULT_CAP = 15000
DEGENERACY_RTOL = 1e-8
SINGULARITY_FLOOR = 1e-12


class CapacityError(RuntimeError):
    """Raised when a dense eigendecomposition would exceed the configured dimension cap."""


class SingularityError(ArithmeticError):
    """Raised when a real energy sits on (or within the floor of) an eigenvalue."""


class QuadratureError(ArithmeticError):
    """Raised when the singular-limit quadrature does not converge."""


@dataclass(frozen=True)
class EnergyWindow:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise DomainError(f"window [{self.lo}, {self.hi}] is empty")

    def contains(self, E: np.ndarray | float) -> np.ndarray | bool:
        return (E >= self.lo) & (E <= self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    scale: float = 1.0
    window: EnergyWindow | None = None

    @property
    def complete(self) -> bool:
        """False when only the eigenpairs inside ``window`` were computed."""
        return self.window is None

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def require_complete(self) -> None:
        if not self.complete:
            raise DomainError("operation needs the full spectrum, only a window was computed")

    @property
    def rows(self) -> int:
        return self.eigenvectors.shape[0]

    @cached_property
    def _positions(self) -> dict[int, int]:
        return {int(b): i for i, b in enumerate(self.basis)}

    def locate(self, ordinal: int) -> int:
        """Row position of the parent-space configuration ``ordinal``."""
        try:
            return self._positions[int(ordinal)]
        except KeyError:
            raise DomainError(f"configuration ordinal {ordinal} is not in this operator's basis") from None

    @cached_property
    def groups(self) -> np.ndarray:
        """Start positions of the blocks of (numerically) equal eigenvalues, plus ``dim`` at the end."""
        tol = DEGENERACY_RTOL * self.scale
        if len(self.eigenvalues) == 0:
            return np.zeros(1, dtype=np.int64)
        breaks = np.flatnonzero(np.diff(self.eigenvalues) > tol) + 1
        return np.concatenate([[0], breaks, [len(self.eigenvalues)]])

    @cached_property
    def group_energies(self) -> np.ndarray:
        return self.eigenvalues[self.groups[:-1]]

    def groups_in(self, window: EnergyWindow) -> list[tuple[int, int]]:
        if self.window is not None and (window.lo < self.window.lo or window.hi > self.window.hi):
            raise DomainError(f"window {window} exceeds the computed part of the spectrum {self.window}")
        g = self.groups
        keep = np.flatnonzero(window.contains(self.group_energies))
        return [(int(g[k]), int(g[k + 1])) for k in keep]

    def projector_element(self, a: int, b: int, i: int, j: int) -> float:
        """``<delta_i, P_E delta_j>`` for the eigenvalue group occupying positions ``a:b``."""
        V = self.eigenvectors
        return float(V[i, a:b] @ V[j, a:b])


def diagonalize(op: SymmetricOperator, cap: int = DEFAULT_CAP) -> SpectralData:
    """Full dense symmetric eigendecomposition with ascending eigenvalues."""
    if op.dim > cap:
        raise CapacityError(f"dimension {op.dim} exceeds the dense eigensolver cap {cap}")
    evals, evecs = np.linalg.eigh(op.toarray())
    return SpectralData(evals, evecs, op.basis.copy(), 1.0 + op.max_abs())


def diagonalize_window(op: SymmetricOperator, window: EnergyWindow, cap: int = DEFAULT_CAP) -> SpectralData:
    """Eigenpairs with eigenvalue in ``window`` only (LAPACK ``evr`` subset driver)."""
    if op.dim > cap:
        raise CapacityError(f"dimension {op.dim} exceeds the dense eigensolver cap {cap}")
    evals, evecs = sl.eigh(op.toarray(), subset_by_value=(window.lo, window.hi), driver="evr")
    # the driver works on a half-open range; re-filter against the closed window
    keep = window.contains(evals)
    return SpectralData(evals[keep], evecs[:, keep], op.basis.copy(), 1.0 + op.max_abs(), window)


def reconstruction_residual(sd: SpectralData, op: SymmetricOperator) -> tuple[float, float]:
    """``max |H - Q diag(E) Q^T|`` and ``max |Q^T Q - 1|``."""
    Q = sd.eigenvectors
    rec = (Q * sd.eigenvalues) @ Q.T
    return float(np.abs(op.toarray() - rec).max()), float(np.abs(Q.T @ Q - np.eye(sd.dim)).max())


def lowest_eigenvalues(op: SymmetricOperator, k: int, cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` smallest eigenpairs; dense below ``cap``, Lanczos (ARPACK) above it."""
    if op.dim <= cap or k >= op.dim - 1:
        if op.dim > 4 * cap:
            raise CapacityError(f"dimension {op.dim} too large for a dense solve of {k} levels")
        evals, evecs = np.linalg.eigh(op.toarray())
        return evals[:k], evecs[:, :k]
    evals, evecs = sla.eigsh(op.matrix, k=k, which="SA", tol=1e-12)
    order = np.argsort(evals)
    return evals[order], evecs[:, order]


# -- Green functions -----------------------------------------------------------

def green(sd: SpectralData, i: int, j: int, z: complex, floor: float = SINGULARITY_FLOOR) -> complex:
    """``<delta_i, (H - z)^-1 delta_j>`` from the eigendecomposition."""
    sd.require_complete()
    gap = np.abs(sd.eigenvalues - z)
    if np.imag(z) == 0 and gap.min() < floor:
        raise SingularityError(f"energy {z} lies within {floor} of an eigenvalue")
    V = sd.eigenvectors
    val = np.sum(V[i] * V[j] / (sd.eigenvalues - z))
    return complex(val)


def green_matrix(sd: SpectralData, z: complex) -> np.ndarray:
    sd.require_complete()
    V = sd.eigenvectors
    return (V / (sd.eigenvalues - z)) @ V.T


def green_solve(op: SymmetricOperator, i: int, j: int, z: complex) -> complex:
    """Green function by a direct dense linear solve."""
    M = op.toarray().astype(complex) - z * np.eye(op.dim)
    rhs = np.zeros(op.dim, dtype=complex)
    rhs[j] = 1.0
    return complex(np.linalg.solve(M, rhs)[i])


@dataclass(frozen=True, eq=False)
class SectorResolvent:
    """Resolvent of the Hamiltonian restricted to configurations with at least k clusters."""

    k: int
    energy: float
    basis: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    bottom: float

    def entry(self, space: ConfigSpace, x: Sequence[int], y: Sequence[int]) -> float:
        pos = {int(b): i for i, b in enumerate(self.basis)}
        try:
            return float(self.matrix[pos[space.index_of(x)], pos[space.index_of(y)]])
        except KeyError:
            raise DomainError(f"{x} or {y} has fewer than {self.k} clusters") from None


def sector_resolvent(H: SymmetricOperator, space: ConfigSpace, k: int, E: float) -> SectorResolvent:
    """``(Q H Q - E)^-1`` on the at-least-``k``-cluster subspace, at a real energy below its spectrum."""
    idx = sector_indices(space, k, "at_least")
    sub = restrict(H, idx).toarray()
    bottom = float(np.linalg.eigvalsh(sub)[0])
    if E >= bottom:
        raise DomainError(f"energy {E} is not below the restricted spectrum (bottom {bottom:.6g})")
    R = np.linalg.inv(sub - E * np.eye(len(idx)))
    R = 0.5 * (R + R.T)
    return SectorResolvent(k, E, H.basis[idx], R, bottom)


def green_restricted(
    space: ConfigSpace,
    params: ModelParams,
    w: DisorderRealization,
    k: int,
    x: Sequence[int],
    y: Sequence[int],
    E: float,
) -> float:
    H = build_hamiltonian(space, params, w)
    return sector_resolvent(H, space, k, E).entry(space, x, y)


# -- eigenfunction correlators -------------------------------------------------

def eigenfunction_correlator(sd: SpectralData, i: int, j: int, window: EnergyWindow) -> float:
    """Sum over eigenvalues in the window of ``|<delta_i, P_E delta_j>|``."""
    return sum(abs(sd.projector_element(a, b, i, j)) for a, b in sd.groups_in(window))


def window_projector_diag(sd: SpectralData, i: int, window: EnergyWindow) -> float:
    """``<delta_i, P_I delta_i>`` summed eigenvector by eigenvector."""
    inside = window.contains(sd.eigenvalues)
    return float(np.sum(sd.eigenvectors[i, inside] ** 2))


def correlator_matrix(
    sd: SpectralData,
    window: EnergyWindow,
    rows: np.ndarray | None = None,
    cols: np.ndarray | None = None,
) -> np.ndarray:
    """``Q(x, y, I)`` for all positions ``x`` in ``rows`` and ``y`` in ``cols``."""
    V = sd.eigenvectors
    Vr = V if rows is None else V[rows]
    Vc = V if cols is None else V[cols]
    out = np.zeros((Vr.shape[0], Vc.shape[0]))
    singles = []
    for a, b in sd.groups_in(window):
        if b - a == 1:
            singles.append(a)
        else:
            out += np.abs(Vr[:, a:b] @ Vc[:, a:b].T)
    if singles:
        s = np.array(singles)
        out += np.abs(Vr[:, s]) @ np.abs(Vc[:, s]).T
    return out


def interpolated_correlator(sd: SpectralData, i: int, j: int, window: EnergyWindow, s: float) -> float:
    """Sum over eigenvalues in the window of ``|P_E(i,i)|^(1-s) |P_E(i,j)|^s``."""
    if not 0 <= s <= 1:
        raise DomainError(f"interpolation exponent must lie in [0, 1], got {s}")
    total = 0.0
    for a, b in sd.groups_in(window):
        pii = abs(sd.projector_element(a, b, i, i))
        pij = abs(sd.projector_element(a, b, i, j))
        total += pii ** (1 - s) * pij**s
    return total


def window_correlator(sd: SpectralData, space: ConfigSpace, U: Interval, V: Interval, window: EnergyWindow) -> float:
    """Sum of ``|<delta_x, P_E delta_y>|`` over E in the window, x meeting U and y meeting V."""
    rows = np.array([sd.locate(o) for o in space.meeting(U)], dtype=np.int64)
    cols = np.array([sd.locate(o) for o in space.meeting(V)], dtype=np.int64)
    if rows.size == 0 or cols.size == 0:
        return 0.0
    return float(correlator_matrix(sd, window, rows, cols).sum())


# -- singular limit -------------------------------------------------------------

@dataclass(frozen=True)
class SingularLimitProbe:
    s: tuple[float, ...]
    values: tuple[float, ...]
    correlator: float


_GRADING_LEVELS = 40


def _green_zeros(G, a: float, b: float, samples: int = 256) -> list[float]:
    """Sign changes of the real function ``G`` strictly inside ``(a, b)``."""
    t = 0.5 * (1 - np.cos(np.pi * (np.arange(1, samples) / samples)))
    E = a + (b - a) * t
    vals = G(E)
    flips = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    return [brentq(lambda e: float(G(np.array([e]))[0]), E[k], E[k + 1], xtol=1e-15) for k in flips]


def _fractional_integral(sd: SpectralData, i: int, j: int, window: EnergyWindow, s: float, nodes: int) -> float:
    sd.require_complete()
    weights = sd.eigenvectors[i] * sd.eigenvectors[j]
    energies = sd.eigenvalues
    bounds = sd.groups

    def G(E: np.ndarray) -> np.ndarray:
        return (weights[None, :] / (energies[None, :] - E[:, None])).sum(axis=1)

    def G_near(anchor: float, off: np.ndarray, skip: slice | None = None) -> np.ndarray:
        # offsets measured from the anchor so tiny distances survive rounding
        w, gap = weights, energies - anchor
        if skip is not None:
            keep = np.ones(len(w), dtype=bool)
            keep[skip] = False
            w, gap = w[keep], gap[keep]
        return (w[None, :] / (gap[None, :] - off[:, None])).sum(axis=1)

    t, wt = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    p = 1.0 / (1.0 - s)

    # anchors: (energy, group slice or None); poles are eigenvalue groups inside the window
    anchors: list[tuple[float, slice | None]] = [(window.lo, None)]
    last: tuple[float, slice | None] = (window.hi, None)
    for g in range(len(bounds) - 1):
        e = float(energies[bounds[g]])
        group = slice(int(bounds[g]), int(bounds[g + 1]))
        if window.lo < e < window.hi:
            anchors.append((e, group))
        elif e == window.lo:
            anchors[0] = (e, group)
        elif e == window.hi:
            last = (e, group)
    anchors.append(last)
    points = []
    for (a, sa), (b, _) in zip(anchors, anchors[1:]):
        points.append((a, sa))
        points.extend((z, None) for z in _green_zeros(G, a, b))
    points.append(anchors[-1])

    def half(anchor: float, group: slice | None, h: float, sign: int) -> float:
        # geometric panels [h 2^-(m+1), h 2^-m] toward the anchor, then an innermost panel
        total = 0.0
        for m in range(_GRADING_LEVELS):
            u0, u1 = h * 2.0 ** -(m + 1), h * 2.0**-m
            u = u0 + (u1 - u0) * t
            total += (u1 - u0) * float(wt @ np.abs(G_near(anchor, sign * u)) ** s)
        delta = h * 2.0**-_GRADING_LEVELS
        if group is None:
            return total + delta * float(wt @ np.abs(G_near(anchor, sign * delta * t)) ** s)
        # u = delta t^p; the pole factor u^-s cancels against the Jacobian exactly
        w0 = float(weights[group].sum())
        u = delta * t**p
        R = G_near(anchor, sign * u, skip=group)
        return total + delta ** (1 - s) * p * float(wt @ np.abs(w0 - sign * u * R) ** s)

    total = 0.0
    for (a, ga), (b, gb) in zip(points, points[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        total += half(a, ga, mid - a, +1) + half(b, gb, b - mid, -1)
    return total


def singular_limit_probe(
    sd: SpectralData,
    i: int,
    j: int,
    window: EnergyWindow,
    s_grid: Sequence[float],
    nodes: int = 64,
    rtol: float = 1e-6,
) -> SingularLimitProbe:
    """``(1 - s)/2 * integral over the window of |G(i, j; E)|^s dE`` for each s of the grid.

    The window is split at every eigenvalue inside it and at every sign change
    of G.  Each piece is graded geometrically toward its end points; the
    innermost panel at an eigenvalue ``E0`` uses ``E = E0 + u``,
    ``u = delta t^(1/(1-s))``, which cancels the ``|u|^-s`` pole factor exactly.  A second pass with half the nodes must agree
    to ``rtol``, otherwise :class:`QuadratureError` is raised.
    """
    s_grid = tuple(float(s) for s in s_grid)
    if any(not 0 < s < 1 for s in s_grid):
        raise DomainError("fractional exponents must lie in (0, 1)")
    if any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise DomainError("s grid must be increasing")
    values = []
    for s in s_grid:
        fine = _fractional_integral(sd, i, j, window, s, nodes)
        coarse = _fractional_integral(sd, i, j, window, s, nodes // 2)
        if abs(fine - coarse) > rtol * max(abs(fine), 1e-300) and abs(fine - coarse) > 1e-14:
            raise QuadratureError(f"quadrature at s={s} did not converge: {fine} vs {coarse}")
        values.append(float(0.5 * (1 - s) * fine))
    return SingularLimitProbe(s_grid, tuple(values), eigenfunction_correlator(sd, i, j, window))


# -- observables ---------------------------------------------------------------

def hop_pairs(space: ConfigSpace, u: int, v: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordinal pairs ``(x, y)`` with ``a_u^* a_v delta_x = delta_y``."""
    x = space.sites
    if u == v:
        rows = np.flatnonzero((x == v).any(axis=1))
        return rows, rows
    has_v = (x == v).any(axis=1)
    has_u = (x == u).any(axis=1)
    rows = np.flatnonzero(has_v & ~has_u)
    moved = np.where(x[rows] == v, u, x[rows])
    moved.sort(axis=1)
    return rows, space.rank(moved)


def reduced_density_element(space: ConfigSpace, phi: np.ndarray, u: int, v: int) -> float:
    """``<Phi, a_u^* a_v Phi>`` for a real state over the full configuration basis.

    Hard-core boson convention: ``a_u^* a_v delta_x = delta_y`` with ``y = x - {v} + {u}``
    and no sign.  This is the spin matrix element of ``S_u^- S_v^+`` under the
    down-spin dictionary; the modulus is convention independent.
    """
    if phi.shape[0] != space.size:
        raise DomainError("state does not live on the full configuration basis")
    rows, targets = hop_pairs(space, u, v)
    return float(np.sum(phi[targets] * phi[rows]))


def heat_kernel_diag(sd: SpectralData, i: int, t: float) -> float:
    """``<delta_i, exp(-t H) delta_i>``."""
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    sd.require_complete()
    shift = sd.eigenvalues[0]
    return float(math.exp(-t * shift) * np.sum(np.exp(-t * (sd.eigenvalues - shift)) * sd.eigenvectors[i] ** 2))


# -- droplet band ------------------------------------------------------------

@dataclass(frozen=True)
class BandLevels:
    """Lowest band of ``H`` at zero disorder, split into bulk and wall-bound levels."""

    bulk: np.ndarray
    wall: np.ndarray
    wall_weight: np.ndarray
    band: tuple[float, float]

    @property
    def levels(self) -> np.ndarray:
        return np.sort(np.concatenate([self.bulk, self.wall]))


def droplet_band_levels(
    space: ConfigSpace, g: float, margin: int | None = None, wall_threshold: float = 0.9
) -> BandLevels:
    """The ``|Lambda| - n + 1`` lowest levels of ``-A + 2gU``, one per droplet position.

    A level whose eigenvector keeps at least ``wall_threshold`` of its weight on
    configurations within ``margin`` sites of either end of the interval is
    bound to a wall and has no counterpart on the infinite lattice.
    """
    if margin is None:
        margin = max(1, space.width // 8)
    H = build_hamiltonian(space, ModelParams(g, 0.0), DisorderRealization.constant(space.lo, space.hi))
    m = len(space.clustered)
    evals, evecs = lowest_eigenvalues(H, m)
    x = space.sites
    near = np.minimum(x[:, 0] - space.lo, space.hi - x[:, -1]) < margin
    weight = (evecs[near] ** 2).sum(axis=0)
    wall = weight >= wall_threshold
    return BandLevels(evals[~wall], evals[wall], weight, droplet_band(g, space.n))
