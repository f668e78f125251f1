"""The XXZ droplet Hamiltonian in fixed down-spin sectors and its hard-core dictionary.

Chain positions are ``1..N``.  A sector state is the sorted tuple of down-spin
positions; sector bases are ordered lexicographically, which is exactly the
configuration ordering of :mod:`fockloc.configspace` after the shift
``k = alpha - lo + 1``.  Spin matrices have eigenvalues ``+-1/2`` and the
single-site basis is ``(up, down)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .configspace import ConfigSpace, DomainError
from .operators import DisorderRealization, ModelParams, SymmetricOperator, build_hamiltonian
from .spectral import hop_pairs

FULL_CHAIN_CAP = 14

SX = np.array([[0.0, 0.5], [0.5, 0.0]])
SY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
SZ = np.array([[0.5, 0.0], [0.0, -0.5]])
S_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]])  # down -> up
S_MINUS = S_PLUS.T  # up -> down
N_DOWN = np.array([[0.0, 0.0], [0.0, 1.0]])  # 1/2 - S^z


@dataclass(frozen=True, eq=False)
class SpinSectorBasis:
    N: int
    n: int
    states: tuple[tuple[int, ...], ...] = field(repr=False)

    def __post_init__(self) -> None:
        if self.N < 1 or not 0 <= self.n <= self.N:
            raise DomainError(f"need 0 <= n <= N with N >= 1, got N={self.N}, n={self.n}")

    @classmethod
    def build(cls, N: int, n: int) -> "SpinSectorBasis":
        if N < 1 or not 0 <= n <= N:
            raise DomainError(f"need 0 <= n <= N with N >= 1, got N={N}, n={n}")
        return cls(N, n, tuple(itertools.combinations(range(1, N + 1), n)))

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.states)}

    def full_index(self, state: tuple[int, ...]) -> int:
        """Position of the product state in the ``2^N`` basis (site 1 is the most significant bit)."""
        return sum(1 << (self.N - k) for k in state)


@dataclass(frozen=True)
class XxzParams:
    Delta: float
    gamma: float = 0.0
    lam: float = 0.0
    omega: DisorderRealization | None = None

    def __post_init__(self) -> None:
        if not self.Delta > 1:
            raise DomainError(f"anisotropy must exceed 1, got {self.Delta}")
        if self.gamma < 0:
            raise DomainError(f"boundary field must be >= 0, got {self.gamma}")
        if self.lam < 0:
            raise DomainError(f"disorder strength must be >= 0, got {self.lam}")

    def field_at(self, k: int) -> float:
        return 0.0 if self.omega is None else self.omega.at(k)


def build_local_bond(Delta: float) -> np.ndarray:
    """``1/4 - S^z S^z - (S^x S^x + S^y S^y)/Delta`` on ``(uu, ud, du, dd)``; ``Delta = inf`` is the Ising point."""
    if Delta == 0:
        raise DomainError("anisotropy must be nonzero")
    inv = 0.0 if math.isinf(Delta) else 1.0 / Delta
    h = 0.25 * np.eye(4) - np.kron(SZ, SZ) - inv * np.real(np.kron(SX, SX) + np.kron(SY, SY))
    return h


def build_droplet_hamiltonian(basis: SpinSectorBasis, p: XxzParams) -> SymmetricOperator:
    """Sector block of the XXZ chain with boundary fields ``gamma/2 (N_1 + N_N)`` and field ``lam/(2 Delta) omega(k) N_k``."""
    N = basis.N
    hop = -0.5 / p.Delta
    diag = np.empty(basis.size)
    rows, cols = [], []
    for i, st in enumerate(basis.states):
        down = set(st)
        walls = sum((k in down) != (k + 1 in down) for k in range(1, N))
        edge = (1 in down) + (N in down)
        diag[i] = 0.5 * walls + 0.5 * p.gamma * edge + p.lam / (2 * p.Delta) * sum(p.field_at(k) for k in st)
        for k in range(1, N):
            if k in down and k + 1 not in down:
                moved = tuple(sorted(down - {k} | {k + 1}))
                j = basis.index[moved]
                rows += [i, j]
                cols += [j, i]
    M = sp.coo_matrix((np.full(len(rows), hop), (rows, cols)), shape=(basis.size, basis.size)).tocsr()
    M = M + sp.diags(diag)
    return SymmetricOperator(M.tocsr(), np.arange(basis.size))


def _site_op(op: np.ndarray, k: int, N: int) -> sp.csr_matrix:
    return sp.kron(sp.kron(sp.identity(2 ** (k - 1)), sp.csr_matrix(op)), sp.identity(2 ** (N - k))).tocsr()


def build_full_chain(N: int, p: XxzParams) -> sp.csr_matrix:
    """The same Hamiltonian on the whole ``2^N`` space from Kronecker products (validation path)."""
    if N > FULL_CHAIN_CAP:
        raise DomainError(f"full-chain construction limited to N <= {FULL_CHAIN_CAP}")
    h = sp.csr_matrix(build_local_bond(p.Delta))
    H = sp.csr_matrix((2**N, 2**N))
    for k in range(1, N):
        H = H + sp.kron(sp.kron(sp.identity(2 ** (k - 1)), h), sp.identity(2 ** (N - k - 1)))
    H = H + 0.5 * p.gamma * (_site_op(N_DOWN, 1, N) + _site_op(N_DOWN, N, N))
    for k in range(1, N + 1):
        H = H + p.lam / (2 * p.Delta) * p.field_at(k) * _site_op(N_DOWN, k, N)
    return H.tocsr()


def project_sector(full: sp.csr_matrix, basis: SpinSectorBasis) -> np.ndarray:
    idx = np.array([basis.full_index(s) for s in basis.states], dtype=np.int64)
    return full[idx][:, idx].toarray()


def sector_consistency(N: int, n: int, p: XxzParams) -> float:
    """Max-entry gap between the projected full-chain operator and the direct sector build."""
    basis = SpinSectorBasis.build(N, n)
    direct = build_droplet_hamiltonian(basis, p).toarray()
    return float(np.abs(project_sector(build_full_chain(N, p), basis) - direct).max())


def dictionary(space: ConfigSpace, basis: SpinSectorBasis | None = None) -> np.ndarray:
    """``perm[i]`` = spin-sector index of ``e_x`` for the ``i``-th configuration ``x``."""
    if basis is None:
        basis = SpinSectorBasis.build(space.width, space.n)
    if basis.N != space.width or basis.n != space.n:
        raise DomainError(f"sector (N={basis.N}, n={basis.n}) does not match a space of width {space.width}, n={space.n}")
    shifted = space.sites - space.lo + 1
    return np.array([basis.index[tuple(int(k) for k in row)] for row in shifted], dtype=np.int64)


def spin_field(w: DisorderRealization, lo: int) -> DisorderRealization:
    """The lattice field relabelled onto chain positions ``1..N``."""
    return DisorderRealization(w.restrict(lo, w.hi).omega, 1, w.seed, w.distribution_id, w.omega_max)


def equivalence_residual(space: ConfigSpace, g: float, lam: float, w: DisorderRealization) -> float:
    """Max-entry gap between the transported hard-core ``H`` and ``2g H^{++}(Delta=g, gamma=1)``."""
    H = build_hamiltonian(space, ModelParams(g, lam), w).toarray()
    basis = SpinSectorBasis.build(space.width, space.n)
    perm = dictionary(space, basis)
    spin = build_droplet_hamiltonian(basis, XxzParams(g, 1.0, lam, spin_field(w.restrict(space.lo, space.hi), space.lo)))
    S = 2 * g * spin.toarray()
    return float(np.abs(H - S[np.ix_(perm, perm)]).max())


def equivalence_residual_empty(N: int, g: float, lam: float, w: DisorderRealization) -> float:
    """The ``n = 0`` sector: one state, zero on both sides."""
    basis = SpinSectorBasis.build(N, 0)
    spin = build_droplet_hamiltonian(basis, XxzParams(g, 1.0, lam, spin_field(w, w.lo)))
    return float(abs(2 * g * spin.toarray()[0, 0] - 0.0))


def spin_correlation(space: ConfigSpace, phi: np.ndarray, u: int, v: int) -> float:
    """``<U phi, S_u^- S_v^+ U phi>`` evaluated on the full ``2^N`` chain."""
    N = space.width
    if N > FULL_CHAIN_CAP:
        raise DomainError(f"full-chain construction limited to N <= {FULL_CHAIN_CAP}")
    basis = SpinSectorBasis.build(N, space.n)
    perm = dictionary(space, basis)
    psi = np.zeros(2**N)
    full = np.array([basis.full_index(basis.states[k]) for k in perm], dtype=np.int64)
    psi[full] = phi
    ku, kv = u - space.lo + 1, v - space.lo + 1
    op = _site_op(S_MINUS, ku, N) @ _site_op(S_PLUS, kv, N)
    return float(psi @ (op @ psi))


def transport_residual(space: ConfigSpace, phi: np.ndarray, u: int, v: int) -> float:
    """Gap between the hard-core reduced-density element and the dictionary spin element."""
    rows, targets = hop_pairs(space, u, v)
    hard_core = float(np.sum(phi[targets] * phi[rows]))
    return abs(hard_core - spin_correlation(space, phi, u, v))
