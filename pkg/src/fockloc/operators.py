"""Hamiltonian assembly on hard-core configuration spaces.

``H = -A + 2g U + lambda V`` where ``A`` is the adjacency matrix of the
hopping graph (configurations at l1 distance one), ``U`` counts clusters and
``V`` sums the site field over occupied sites.  Off-diagonal parts are stored
sparse and are symmetric by construction: only the move of one particle one
step to the right is generated, and the transpose supplies the reverse hop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .configspace import ConfigSpace, DomainError


@dataclass(frozen=True)
class ModelParams:
    g: float
    lam: float = 0.0

    def __post_init__(self) -> None:
        if not self.g > 1:
            raise DomainError(f"interaction strength g must be > 1, got {self.g}")
        if not self.lam >= 0:
            raise DomainError(f"disorder strength lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """Site field ``omega(alpha)`` for ``alpha = lo .. lo + len(omega) - 1``."""

    omega: np.ndarray
    lo: int = 0
    seed: int = 0
    distribution_id: str = "uniform"
    omega_max: float = 1.0

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 1:
            raise DomainError("site field must be one-dimensional")
        if np.any(omega < 0) or np.any(omega > self.omega_max):
            raise DomainError(f"site field leaves the support [0, {self.omega_max}]")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @property
    def hi(self) -> int:
        return self.lo + len(self.omega) - 1

    def at(self, site: int) -> float:
        return float(self.omega[site - self.lo])

    def covers(self, lo: int, hi: int) -> bool:
        return self.lo <= lo and hi <= self.hi

    def restrict(self, lo: int, hi: int) -> "DisorderRealization":
        if not self.covers(lo, hi):
            raise DomainError(f"field on [{self.lo}, {self.hi}] does not cover [{lo}, {hi}]")
        return DisorderRealization(
            self.omega[lo - self.lo : hi - self.lo + 1].copy(), lo, self.seed, self.distribution_id, self.omega_max
        )

    def replace_sites(self, values: dict[int, float]) -> "DisorderRealization":
        omega = self.omega.copy()
        for site, value in values.items():
            omega[site - self.lo] = value
        return DisorderRealization(omega, self.lo, self.seed, self.distribution_id, self.omega_max)

    @classmethod
    def constant(cls, lo: int, hi: int, value: float = 0.0, omega_max: float = 1.0) -> "DisorderRealization":
        return cls(np.full(hi - lo + 1, float(value)), lo, 0, "constant", max(omega_max, value))


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Real symmetric matrix over (a subset of) a configuration basis.

    ``basis[i]`` is the ordinal, in the parent :class:`ConfigSpace`, of the
    configuration labelling row and column ``i``.
    """

    matrix: sp.csr_matrix = field(repr=False)
    basis: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def max_abs(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def __add__(self, other: "SymmetricOperator") -> "SymmetricOperator":
        _check_same_basis(self, other)
        return SymmetricOperator((self.matrix + other.matrix).tocsr(), self.basis)

    def __sub__(self, other: "SymmetricOperator") -> "SymmetricOperator":
        _check_same_basis(self, other)
        return SymmetricOperator((self.matrix - other.matrix).tocsr(), self.basis)

    def __rmul__(self, c: float) -> "SymmetricOperator":
        return SymmetricOperator((c * self.matrix).tocsr(), self.basis)

    def __neg__(self) -> "SymmetricOperator":
        return SymmetricOperator((-self.matrix).tocsr(), self.basis)

    def __matmul__(self, other: "SymmetricOperator") -> sp.csr_matrix:
        return (self.matrix @ other.matrix).tocsr()


def _check_same_basis(a: SymmetricOperator, b: SymmetricOperator) -> None:
    if a.dim != b.dim or not np.array_equal(a.basis, b.basis):
        raise DomainError("operators act on different bases")


def _full_basis(space: ConfigSpace) -> np.ndarray:
    return np.arange(space.size)


def diagonal_operator(values: np.ndarray, basis: np.ndarray) -> SymmetricOperator:
    return SymmetricOperator(sp.diags(np.asarray(values, dtype=float), format="csr"), basis)


def right_moves(space: ConfigSpace) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(i, j)`` where ``j`` is ``i`` with one particle moved one site to the right.

    Every unordered neighbour pair appears exactly once, with ``i < j``.
    """
    x = space.sites
    src, dst = [], []
    for j in range(space.n):
        nxt = x[:, j + 1] if j + 1 < space.n else np.full(space.size, space.hi + 1)
        ok = x[:, j] + 1 < nxt
        rows = np.flatnonzero(ok)
        moved = x[rows].copy()
        moved[:, j] += 1
        src.append(rows)
        dst.append(space.rank(moved))
    return np.concatenate(src), np.concatenate(dst)


def build_adjacency(space: ConfigSpace) -> SymmetricOperator:
    """``A(x, y) = 1`` iff ``d(x, y) = 1``."""
    i, j = right_moves(space)
    N = space.size
    upper = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(N, N))
    return SymmetricOperator((upper + upper.T).tocsr(), _full_basis(space))


def build_cluster_potential(space: ConfigSpace) -> SymmetricOperator:
    return diagonal_operator(space.clusters, _full_basis(space))


def random_potential_values(space: ConfigSpace, w: DisorderRealization) -> np.ndarray:
    if not w.covers(space.lo, space.hi):
        raise DomainError(f"site field on [{w.lo}, {w.hi}] does not cover [{space.lo}, {space.hi}]")
    return w.omega[space.sites - w.lo].sum(axis=1)


def build_random_potential(space: ConfigSpace, w: DisorderRealization) -> SymmetricOperator:
    return diagonal_operator(random_potential_values(space, w), _full_basis(space))


def build_hamiltonian(space: ConfigSpace, params: ModelParams, w: DisorderRealization) -> SymmetricOperator:
    """``H = -A + 2g U + lambda V``."""
    A = build_adjacency(space).matrix
    diag = 2.0 * params.g * space.clusters + params.lam * random_potential_values(space, w)
    H = (-A + sp.diags(diag)).tocsr()
    return SymmetricOperator(H, _full_basis(space))


def sector_indices(space: ConfigSpace, k: int, mode: Literal["exactly", "at_least"] = "exactly") -> np.ndarray:
    """Ordinals with exactly ``k`` clusters (``P^(k)``) or at least ``k`` (``Q^(k)``)."""
    if not 1 <= k <= space.n:
        raise DomainError(f"cluster number k must lie in [1, {space.n}], got {k}")
    if mode == "exactly":
        return np.flatnonzero(space.clusters == k)
    if mode == "at_least":
        return np.flatnonzero(space.clusters >= k)
    raise DomainError(f"unknown sector mode {mode!r}")


def restrict(op: SymmetricOperator, idx: np.ndarray) -> SymmetricOperator:
    """Principal submatrix on the rows/columns ``idx`` (positions in ``op``'s basis)."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise DomainError("cannot restrict to an empty index set")
    sub = op.matrix[idx][:, idx].tocsr()
    return SymmetricOperator(sub, op.basis[idx])


def ground_state_lower_bound(space: ConfigSpace, params: ModelParams, w: DisorderRealization) -> float:
    """``2(g-1) + min(2(g-1), lambda * min over droplets of V)``."""
    v = random_potential_values(space, w)[space.clustered]
    return 2 * (params.g - 1) + min(2 * (params.g - 1), params.lam * float(v.min()))


# -- occupation algebra ----------------------------------------------------

def occupation_projector(space: ConfigSpace, alpha: int) -> SymmetricOperator:
    """Projection onto configurations containing ``alpha``."""
    occ = (space.sites == alpha).any(axis=1)
    return diagonal_operator(occ.astype(float), _full_basis(space))


def boundary_pair_projector(space: ConfigSpace, alpha: int, beta: int) -> SymmetricOperator:
    """Projection onto configurations containing exactly one of ``alpha``, ``beta``."""
    a = (space.sites == alpha).any(axis=1)
    b = (space.sites == beta).any(axis=1)
    return diagonal_operator((a ^ b).astype(float), _full_basis(space))


def exchange_operator(space: ConfigSpace, alpha: int, beta: int) -> SymmetricOperator:
    """Permutation ``delta_x -> delta_{tau(x)}`` swapping the occupancies of ``alpha`` and ``beta``."""
    x = space.sites
    swapped = np.where(x == alpha, beta, np.where(x == beta, alpha, x))
    swapped.sort(axis=1)
    target = space.rank(swapped)
    N = space.size
    perm = sp.coo_matrix((np.ones(N), (target, np.arange(N))), shape=(N, N))
    return SymmetricOperator(perm.tocsr(), _full_basis(space))


def build_cluster_algebra(
    space: ConfigSpace, alpha: int, beta: int
) -> tuple[SymmetricOperator, SymmetricOperator, SymmetricOperator]:
    if alpha == beta:
        raise DomainError("the two sites must differ")
    for site in (alpha, beta):
        if not space.lo <= site <= space.hi:
            raise DomainError(f"site {site} outside [{space.lo}, {space.hi}]")
    return (
        occupation_projector(space, alpha),
        boundary_pair_projector(space, alpha, beta),
        exchange_operator(space, alpha, beta),
    )


def verify_propA1(space: ConfigSpace) -> tuple[float, float]:
    """Frobenius residuals of the two identities expressing ``2U`` and ``-A``
    through bond projections and bond exchanges."""
    N = space.size
    eye = sp.identity(N, format="csr")
    two_u = 2 * build_cluster_potential(space).matrix
    minus_a = -build_adjacency(space).matrix
    count = occupation_projector(space, space.lo).matrix + occupation_projector(space, space.hi).matrix
    hop = sp.csr_matrix((N, N))
    for alpha in range(space.lo, space.hi):
        _, pi_pair, tau = build_cluster_algebra(space, alpha, alpha + 1)
        count = count + pi_pair.matrix
        hop = hop + eye - pi_pair.matrix - tau.matrix
    r1 = sp.linalg.norm(two_u - count) if N else 0.0
    r2 = sp.linalg.norm(minus_a - hop) if N else 0.0
    return float(r1), float(r2)


def droplet_band(g: float, n: int) -> tuple[float, float]:
    """Band ``2 sqrt(g^2-1) [tanh(rho n / 2), coth(rho n / 2)]`` with ``rho = arccosh(g)``.

    Equivalently ``2 sqrt(g^2-1) [(cosh(rho n) - 1) / sinh(rho n), (cosh(rho n) + 1) / sinh(rho n)]``.
    """
    if not g > 1:
        raise DomainError(f"g must be > 1, got {g}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rho = math.log(g + math.sqrt(g * g - 1))
    scale = 2 * math.sqrt(g * g - 1)
    t = math.tanh(rho * n / 2)
    return scale * t, scale / t


# -- plain-text sparse triplets ------------------------------------------------

def write_triplets(op: SymmetricOperator, path: str | Path) -> None:
    """Write ``dim nnz`` then one ``i j value`` line per stored entry, row-major, 17 significant digits."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{op.dim} {len(order)}"]
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets(path: str | Path) -> sp.csr_matrix:
    rows = Path(path).read_text().split("\n")
    dim, nnz = (int(t) for t in rows[0].split())
    entries = [r.split() for r in rows[1 : 1 + nnz]]
    i = np.array([int(e[0]) for e in entries], dtype=np.int64)
    j = np.array([int(e[1]) for e in entries], dtype=np.int64)
    v = np.array([float(e[2]) for e in entries])
    return sp.coo_matrix((v, (i, j)), shape=(dim, dim)).tocsr()
