"""Checks of the deterministic inequalities and fits of the averaged envelopes.

Deterministic checks return a report carrying both sides of the inequality
and an ``ok`` flag; nothing here raises on a violation, the caller decides
(the CLI maps a failed report to exit code 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .configspace import ConfigSpace, Configuration, DomainError, envelope_matrix
from .disorder_mc import McEstimate, PreconditionError
from .operators import DisorderRealization, ModelParams, SymmetricOperator, build_hamiltonian, sector_indices
from .spectral import EnergyWindow, SpectralData, correlator_matrix, heat_kernel_diag

REL_SLACK = 1e-10


@dataclass(frozen=True)
class CtParams:
    g: float
    mu_T: float
    E: float

    def __post_init__(self) -> None:
        if self.g <= 1 or self.mu_T <= 0 or self.E < 0:
            raise DomainError(f"need g > 1, mu_T > 0, E >= 0; got {self}")
        lhs, rhs = 4 * self.g - self.E, 12 * math.exp(self.mu_T)
        if not lhs > rhs:
            raise PreconditionError(
                f"Combes-Thomas condition 4g - E > 12 e^mu_T fails: 4g - E = {lhs:.10g}, 12 e^mu_T = {rhs:.10g}"
            )


def delta_k(p: CtParams, k: int) -> float:
    """``2k (g - e^mu_T) - E``."""
    return 2 * k * (p.g - math.exp(p.mu_T)) - p.E


def ct_constant(p: CtParams) -> float:
    """``C_T = (2/delta_2) / (1 - 8 e^mu_T / delta_2)``."""
    d2 = delta_k(p, 2)
    return (2.0 / d2) / (1.0 - 8.0 * math.exp(p.mu_T) / d2)


def _inequality_ok(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1 + REL_SLACK) + REL_SLACK


# -- Combes-Thomas ---------------------------------------------------------------

@dataclass(frozen=True)
class CtReport:
    ratio: float
    C_T: float
    pair: tuple[Configuration, Configuration]
    ok: bool


def restricted_resolvent(H: SymmetricOperator, idx: np.ndarray, E: float) -> np.ndarray:
    sub = H.toarray()[np.ix_(idx, idx)]
    R = np.linalg.inv(sub - E * np.eye(len(idx)))
    return 0.5 * (R + R.T)


def ct_verify(space: ConfigSpace, params: ModelParams, w: DisorderRealization, p: CtParams) -> CtReport:
    """``max |G^(2)(x,y;E)| e^{mu_T d(x,y)}`` over non-clustered pairs, against ``C_T``."""
    if space.n < 2:
        raise DomainError("the two-cluster sector needs n >= 2")
    if params.g != p.g:
        raise DomainError(f"model g={params.g} differs from Combes-Thomas g={p.g}")
    idx = sector_indices(space, 2, "at_least")
    H = build_hamiltonian(space, params, w)
    R = restricted_resolvent(H, idx, p.E)
    weighted = np.abs(R) * np.exp(p.mu_T * space.l1_matrix(idx, idx))
    a, b = np.unravel_index(int(np.argmax(weighted)), weighted.shape)
    C_T = ct_constant(p)
    ratio = float(weighted[a, b])
    return CtReport(ratio, C_T, (space.config(int(idx[a])), space.config(int(idx[b]))), _inequality_ok(ratio, C_T))


@dataclass(frozen=True)
class BlockNorm:
    k: int
    j: int
    l: int
    norm: float
    bound: float
    ok: bool


def ct_block_norms(
    space: ConfigSpace, params: ModelParams, w: DisorderRealization, p: CtParams, y: Configuration
) -> list[BlockNorm]:
    """Norms of ``P^(k) M_y R^(l) M_y^-1 P^(j)`` for ``l = min(j, k)``, plus all ``R^(2)`` blocks.

    The ``l = min(j, k)`` blocks are compared with ``2/delta_l`` (``1/delta_l`` on the
    diagonal block of the largest cluster count, where ``R^(l)`` lives on one
    sector only); the ``R^(2)`` blocks are compared with ``C_T``.
    """
    if space.n < 2:
        raise DomainError("the two-cluster sector needs n >= 2")
    H = build_hamiltonian(space, params, w)
    dy = space.l1_matrix(None, np.array([space.index_of(y)]))[:, 0]
    kmax = int(space.clusters.max())
    C_T = ct_constant(p)
    out: list[BlockNorm] = []
    for l in range(2, kmax + 1):
        idx = sector_indices(space, l, "at_least")
        R = restricted_resolvent(H, idx, p.E)
        m = p.mu_T * dy[idx]
        # M R M^-1 entrywise, scaled stably
        B = R * np.exp(m[:, None] - m[None, :])
        kk = space.clusters[idx]
        for k in range(l, kmax + 1):
            for j in range(l, kmax + 1):
                rk, rj = np.flatnonzero(kk == k), np.flatnonzero(kk == j)
                if rk.size == 0 or rj.size == 0:
                    continue
                norm = float(np.linalg.norm(B[np.ix_(rk, rj)], 2))
                if min(k, j) == l:
                    bound = 1.0 / delta_k(p, l) if l == kmax else 2.0 / delta_k(p, l)
                    out.append(BlockNorm(k, j, l, norm, bound, _inequality_ok(norm, bound)))
                if l == 2:
                    out.append(BlockNorm(k, j, 2, norm, C_T, _inequality_ok(norm, C_T)))
    return out


# -- resolvent expansion -----------------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    ok: bool


def resolvent_expansion_check(
    H: SymmetricOperator, Q: np.ndarray, P: np.ndarray, x: int, y: int, E: float
) -> InequalityReport:
    """``|G(x,y)|`` against ``sum_{u in Q, v in P} |G(x,u)| |H(u,v)| |(P(H-E)P)^-1(v,y)|``.

    ``Q, P`` are complementary position sets; ``x`` must lie in ``Q`` and ``y`` in ``P``.
    """
    Q, P = np.asarray(Q), np.asarray(P)
    if len(np.intersect1d(Q, P)) or len(Q) + len(P) != H.dim:
        raise DomainError("Q and P must be complementary")
    if x not in set(Q.tolist()) or y not in set(P.tolist()):
        raise DomainError("need x in ran Q and y in ran P")
    M = H.toarray()
    G = np.linalg.inv(M - E * np.eye(H.dim))
    RP = restricted_resolvent(H, P, E)
    py = int(np.flatnonzero(P == y)[0])
    rhs = float(np.abs(G[x, Q]) @ np.abs(M[np.ix_(Q, P)]) @ np.abs(RP[:, py]))
    lhs = abs(float(G[x, y]))
    return InequalityReport(lhs, rhs, _inequality_ok(lhs, rhs))


# -- correlator inequalities --------------------------------------------------------

def perturbative_correlator_check(
    sd: SpectralData, space: ConfigSpace, g: float, mu_T: float, window: EnergyWindow, x: int, y: int
) -> InequalityReport:
    """``Q(x,y,I) <= 2 C_T(I) e^mu_T sum_{w in C} e^{-mu_T d(x,w)} Q(w,y,I)`` for non-clustered ``x``.

    ``C_T(I)`` is the Combes-Thomas constant at ``sup I`` (it increases with E).
    ``x, y`` are ordinals of ``space``; ``sd`` must hold the spectrum of the
    Hamiltonian on ``space`` inside the window.
    """
    if space.clusters[x] == 1:
        raise DomainError("x must not be clustered")
    if window.lo < 0:
        raise PreconditionError("the window must lie in [0, E(g, mu_T))")
    C_T = ct_constant(CtParams(g, mu_T, window.hi))
    C = space.clustered
    rows = np.array([sd.locate(o) for o in np.r_[x, C]], dtype=np.int64)
    col = np.array([sd.locate(y)], dtype=np.int64)
    Q = correlator_matrix(sd, window, rows, col)[:, 0]
    d = space.l1_matrix(np.array([x]), C)[0]
    lhs = float(Q[0])
    rhs = float(2 * C_T * math.exp(mu_T) * np.sum(np.exp(-mu_T * d) * Q[1:]))
    return InequalityReport(lhs, rhs, _inequality_ok(lhs, rhs))


def heat_kernel_check(sd: SpectralData, i: int, window: EnergyWindow, t: float) -> InequalityReport:
    """``Q(x,x,I) <= e^{t sup I} <delta_x, e^{-tH} delta_x>``."""
    if t <= 0:
        raise DomainError("t must be positive")
    lhs = float(correlator_matrix(sd, window, np.array([i]), np.array([i]))[0, 0])
    rhs = math.exp(t * window.hi) * heat_kernel_diag(sd, i, t)
    return InequalityReport(lhs, rhs, lhs <= rhs * (1 + 1e-9) + 1e-9)


def dynamical_check(
    sd: SpectralData, i: int, j: int, window: EnergyWindow, times: Sequence[float] | None = None
) -> InequalityReport:
    """``max_t |<delta_x, e^{-itH} P_I delta_y>|`` on a time grid against ``Q(x,y,I)``."""
    if times is None:
        times = np.round(np.arange(0, 101) * 0.1, 10)
    groups = sd.groups_in(window)
    if not groups:
        return InequalityReport(0.0, 0.0, True)
    E = np.array([sd.eigenvalues[a] for a, _ in groups])
    c = np.array([sd.projector_element(a, b, i, j) for a, b in groups])
    amp = np.abs(np.exp(-1j * np.outer(times, E)) @ c)
    lhs, rhs = float(amp.max()), float(np.abs(c).sum())
    return InequalityReport(lhs, rhs, lhs <= rhs * (1 + 1e-9) + 1e-9)


# -- combined envelope ----------------------------------------------------------------

@dataclass(frozen=True)
class CombinedFit:
    C: float
    c: float
    mu: float
    violations: int
    points: int


def combined_envelope_check(
    records: Sequence[tuple[ConfigSpace, int, int, McEstimate]],
    s1: float,
    s2: float,
    s3: float,
    sigmas: float = 3.0,
) -> CombinedFit:
    """Fit ``log E[Q] ~ log C - s1 c n - s2 mu dbar + log F_{s3 mu}`` and count envelope violations.

    ``records`` hold ``(space, x, y, estimate)`` with ordinals of ``space``.  With
    ``s3 = 0`` the ``F`` factor is dropped; ``c`` is only fitted when ``s1 > 0`` and
    the records span several particle numbers, ``mu`` only when ``s2 + s3 > 0``.
    A record violates the envelope when its mean exceeds it by more than
    ``sigmas`` standard errors.
    """
    if min(s1, s2, s3) < 0 or abs(s1 + s2 + s3 - 1) > 1e-12:
        raise DomainError(f"weights must be >= 0 and sum to 1, got ({s1}, {s2}, {s3})")
    recs = [r for r in records if r[3].mean > 0]
    if len(recs) < 2:
        return CombinedFit(math.nan, math.nan, math.nan, len(recs), len(recs))
    n = np.array([r[0].n for r in recs], dtype=float)
    dbar = np.array([r[0].dbar_row(r[1])[r[2]] for r in recs], dtype=float)
    logm = np.log([r[3].mean for r in recs])
    sig = np.array([max(r[3].rel_err, 1e-12) if np.isfinite(r[3].rel_err) else 1.0 for r in recs])
    fit_c = s1 > 0 and np.unique(n).size > 1
    fit_mu = s2 + s3 > 0
    F_cache: dict[tuple[int, float], np.ndarray] = {}

    def log_F(mu: float) -> np.ndarray:
        if s3 == 0:
            return np.zeros(len(recs))
        out = np.empty(len(recs))
        for k, (sp, x, y, _) in enumerate(recs):
            key = (id(sp), mu)
            if key not in F_cache:
                F_cache[key] = envelope_matrix(sp, s3 * mu)
            out[k] = math.log(F_cache[key][x, y])
        return out

    def model(theta: np.ndarray) -> np.ndarray:
        logC, c, mu = theta[0], theta[1] if fit_c else 0.0, theta[-1] if fit_mu else 0.0
        return logC - s1 * c * n - s2 * mu * dbar + log_F(mu)

    theta0 = [float(logm.max())] + ([0.5] if fit_c else []) + ([0.5] if fit_mu else [])
    lower = [-np.inf] + ([-np.inf] if fit_c else []) + ([1e-6] if fit_mu else [])
    res = least_squares(lambda th: (model(th) - logm) / sig, theta0, bounds=(lower, np.inf))
    th = res.x
    C = float(math.exp(th[0]))
    c = float(th[1]) if fit_c else 0.0
    mu = float(th[-1]) if fit_mu else 0.0
    env = np.exp(model(th))
    means = np.array([r[3].mean for r in recs])
    se = np.array([r[3].stderr for r in recs])
    violations = int(np.sum(means - sigmas * se > env))
    return CombinedFit(C, c, mu, violations, len(recs))
