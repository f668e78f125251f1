"""Hard-core configuration spaces on a finite interval of the integer lattice.

A configuration of ``n`` hard-core particles is a strictly increasing tuple of
sites.  :class:`ConfigSpace` enumerates all of them in lexicographic order,
records the number of clusters of each, and answers index lookups through the
combinatorial rank of a configuration, so no hash table over the whole space
is needed.

The module also carries the configuration-space geometry used by the decay
estimates: the l1 distance ``d``, the through-the-droplet function ``dbar``,
the metric ``D = min(d, dbar)``, the decay envelope ``F_mu`` and the Euler
product constant ``C_inf(mu)`` that bounds sums of ``exp(-mu d)``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

Configuration = tuple[int, ...]
Interval = tuple[int, int]


class DomainError(ValueError):
    """Raised when arguments fall outside the domain of an operation."""


def cluster_count(x: Sequence[int]) -> int:
    """Number of maximal blocks of consecutive occupied sites in ``x``."""
    if len(x) == 0:
        return 0
    return 1 + sum(1 for a, b in zip(x, x[1:]) if b - a > 1)


def l1_distance(x: Sequence[int], y: Sequence[int]) -> int:
    """Sum of ``|x_j - y_j|`` over the increasing labelings of ``x`` and ``y``."""
    if len(x) != len(y):
        raise DomainError(f"particle numbers differ: {len(x)} != {len(y)}")
    return sum(abs(a - b) for a, b in zip(x, y))


def occupancy_word(x: Sequence[int], lo: int) -> int:
    """Occupancy bit word of ``x``; bit ``alpha - lo`` is set iff site alpha is occupied.

    Python integers are unbounded, so the word is valid for intervals of any length.
    """
    word = 0
    for a in x:
        word |= 1 << (a - lo)
    return word


@dataclass(frozen=True, eq=False)
class ConfigSpace:
    """All configurations of ``n`` hard-core particles on the sites ``lo..hi``.

    Configurations are stored as rows of ``sites`` in lexicographic order; the
    ordinal of a configuration is its row number.  ``clusters[i]`` is the
    number of clusters of configuration ``i``.
    """

    lo: int
    hi: int
    n: int
    sites: np.ndarray = field(repr=False)
    clusters: np.ndarray = field(repr=False)
    _rank_table: np.ndarray = field(repr=False)

    @classmethod
    def interval(cls, lo: int, hi: int, n: int) -> "ConfigSpace":
        width = hi - lo + 1
        if width < 1:
            raise DomainError(f"empty interval [{lo}, {hi}]")
        if n < 1 or n > width:
            raise DomainError(f"need 1 <= n <= {width}, got n={n}")
        rows = list(itertools.combinations(range(lo, hi + 1), n))
        sites = np.array(rows, dtype=np.int64).reshape(len(rows), n)
        gaps = np.diff(sites, axis=1) > 1
        clusters = 1 + gaps.sum(axis=1)
        sites.setflags(write=False)
        clusters.setflags(write=False)
        table = _rank_table(width, n)
        return cls(lo, hi, n, sites, clusters, table)

    # -- basic shape -------------------------------------------------------

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @property
    def size(self) -> int:
        return self.sites.shape[0]

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[Configuration]:
        for row in self.sites:
            yield tuple(int(a) for a in row)

    def config(self, i: int) -> Configuration:
        return tuple(int(a) for a in self.sites[i])

    @property
    def L(self) -> int:
        """Half-width when the interval is the symmetric box ``[-L, L]``."""
        if self.lo != -self.hi:
            raise DomainError(f"interval [{self.lo}, {self.hi}] is not symmetric")
        return self.hi

    def word(self, i: int) -> int:
        return occupancy_word(self.sites[i], self.lo)

    # -- indexing ----------------------------------------------------------

    def rank(self, sites: np.ndarray) -> np.ndarray:
        """Lexicographic ordinals of the configurations in the rows of ``sites``."""
        p = np.asarray(sites, dtype=np.int64) - self.lo
        p = p.reshape(-1, self.n)
        prev = np.concatenate([np.full((p.shape[0], 1), -1), p[:, :-1]], axis=1) + 1
        rows = np.arange(self.n)
        t = self._rank_table
        return (t[rows, p] - t[rows, prev]).sum(axis=1)

    def index_of(self, x: Sequence[int]) -> int:
        x = tuple(int(a) for a in x)
        if len(x) != self.n:
            raise DomainError(f"configuration {x} does not have {self.n} particles")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise DomainError(f"configuration {x} is not strictly increasing")
        if x[0] < self.lo or x[-1] > self.hi:
            raise DomainError(f"configuration {x} leaves [{self.lo}, {self.hi}]")
        return int(self.rank(np.array(x))[0])

    def __contains__(self, x: object) -> bool:
        try:
            self.index_of(x)  # type: ignore[arg-type]
        except (DomainError, TypeError):
            return False
        return True

    # -- cluster sectors ---------------------------------------------------

    @property
    def max_clusters(self) -> int:
        return int(self.clusters.max())

    def sector_sizes(self) -> dict[int, int]:
        """Number of configurations with exactly k clusters, for k = 1..n."""
        counts = np.bincount(self.clusters, minlength=self.n + 1)
        return {k: int(counts[k]) for k in range(1, self.n + 1)}

    @cached_property
    def clustered(self) -> np.ndarray:
        """Ordinals of the fully clustered configurations, ordered by first site."""
        return np.flatnonzero(self.clusters == 1)

    @cached_property
    def droplet_starts(self) -> np.ndarray:
        return self.sites[self.clustered, 0]

    def is_clustered(self, x: Sequence[int]) -> bool:
        return cluster_count(x) == 1

    # -- droplet distances -------------------------------------------------

    @cached_property
    def droplet_distance(self) -> np.ndarray:
        """``d(x, w)`` for every configuration ``x`` (rows) and droplet ``w`` (columns)."""
        offsets = np.arange(self.n)
        starts = self.droplet_starts
        w = starts[:, None] + offsets[None, :]
        return np.abs(self.sites[:, None, :] - w[None, :, :]).sum(axis=2)

    @cached_property
    def _through_droplet(self) -> np.ndarray:
        # h[y, a] = min_b |a - b| + d(droplet_b, y)
        f = self.droplet_distance
        starts = self.droplet_starts
        jump = np.abs(starts[:, None] - starts[None, :])
        return (f[:, None, :] + jump[None, :, :]).min(axis=2)

    def dbar_row(self, i: int) -> np.ndarray:
        """``dbar(x_i, y)`` for all ``y`` in the space."""
        f = self.droplet_distance[i]
        return (f[None, :] + self._through_droplet).min(axis=1)

    def dbar_matrix(self) -> np.ndarray:
        f = self.droplet_distance
        h = self._through_droplet
        out = np.empty((self.size, self.size), dtype=np.int64)
        for i in range(self.size):
            out[i] = (f[i][None, :] + h).min(axis=1)
        return out

    def l1_matrix(self, rows: np.ndarray | None = None, cols: np.ndarray | None = None) -> np.ndarray:
        a = self.sites if rows is None else self.sites[rows]
        b = self.sites if cols is None else self.sites[cols]
        return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)

    def meeting(self, window: Interval) -> np.ndarray:
        """Ordinals of configurations with at least one particle in the site interval."""
        lo, hi = window
        hit = (self.sites >= lo) & (self.sites <= hi)
        return np.flatnonzero(hit.any(axis=1))


def _rank_table(width: int, n: int) -> np.ndarray:
    # t[i, q] = sum_{c < q} C(width - 1 - c, n - 1 - i)
    t = np.zeros((n, width + 1), dtype=np.int64)
    for i in range(n):
        acc = 0
        for q in range(1, width + 1):
            acc += math.comb(width - q, n - 1 - i)
            t[i, q] = acc
    return t


def enumerate_configs(L: int, n: int) -> ConfigSpace:
    """All ``n``-particle configurations on ``[-L, L]`` in lexicographic order."""
    if L < 0:
        raise DomainError(f"half-width must be >= 0, got L={L}")
    if n < 1 or n > 2 * L + 1:
        raise DomainError(f"need 1 <= n <= 2L+1 = {2 * L + 1}, got n={n}")
    return ConfigSpace.interval(-L, L, n)


def sector_size_formula(width: int, n: int, k: int) -> int:
    """``C(n-1, k-1) * C(width-n+1, k)``: configurations with exactly k clusters."""
    return math.comb(n - 1, k - 1) * math.comb(width - n + 1, k)


def dbar(x: Sequence[int], y: Sequence[int], space: ConfigSpace) -> int:
    """Minimum of ``d(x,w) + |w_1 - v_1| + d(v,y)`` over droplets ``w, v`` of ``space``."""
    if len(x) != len(y):
        raise DomainError(f"particle numbers differ: {len(x)} != {len(y)}")
    return int(space.dbar_row(space.index_of(x))[space.index_of(y)])


def dist_D(x: Sequence[int], y: Sequence[int], space: ConfigSpace) -> int:
    """The metric ``min(d(x,y), dbar(x,y))``."""
    return min(l1_distance(x, y), dbar(x, y, space))


def interval_distance(U: Interval, V: Interval) -> int:
    """``min |u - v|`` over sites of the two intervals (0 if they overlap)."""
    if U[1] < V[0]:
        return V[0] - U[1]
    if V[1] < U[0]:
        return U[0] - V[1]
    return 0


# -- summability constants -------------------------------------------------

def c_infinity_tail(mu: float, K: int) -> float:
    """Bound on the relative error of truncating the Euler product after K factors.

    The omitted factor is ``prod_{k>K} (1 - q^k)^-2`` with ``q = exp(-mu)``; since
    ``-log(1 - t) <= t / (1 - t)`` it lies in ``[1, exp(2 q^(K+1) / ((1-q)(1-q^(K+1))))]``.
    """
    q = math.exp(-mu)
    qk = q ** (K + 1)
    return math.expm1(2.0 * qk / ((1.0 - q) * (1.0 - qk)))


def c_infinity(mu: float, K: int | None = None) -> float:
    """``(1 - e^-mu)^-1 * prod_{k=1}^K (1 - e^{-k mu})^-2``.

    With ``K=None`` the truncation starts at 200 factors and grows until the
    tail bound of :func:`c_infinity_tail` puts the absolute error below 1e-12.
    """
    if not mu > 0:
        raise DomainError(f"mu must be > 0, got {mu}")
    if K is None:
        K = 200
        while True:
            value = _c_inf_product(mu, K)
            if value * c_infinity_tail(mu, K) < 1e-12 or K > 10**7:
                return value
            K *= 2
    if K < 1:
        raise DomainError(f"truncation K must be >= 1, got {K}")
    return _c_inf_product(mu, K)


def _c_inf_product(mu: float, K: int) -> float:
    k = np.arange(1, K + 1, dtype=float)
    log_euler = -np.log1p(-np.exp(-k * mu)).sum()
    return math.exp(2.0 * log_euler) / -math.expm1(-mu)


def brute_sum_radius(n: int, mu: float, tol: float = 1e-10) -> int:
    """Smallest radius R whose geometric tail estimate for :func:`brute_sum_B2` is below ``tol``.

    At most ``2^n C(m+n-1, n-1)`` integer vectors have l1 norm ``m``, so the
    discarded tail is bounded by the sum of that count times ``exp(-mu m)`` for ``m > R``.
    """
    def term(m: int) -> float:
        return 2.0**n * math.comb(m + n - 1, n - 1) * math.exp(-mu * m)

    R = 1
    while True:
        tail, m = 0.0, R + 1
        while True:
            t = term(m)
            tail += t
            if t < 1e-3 * tol and m > R + n / mu:
                break
            m += 1
        if tail < tol:
            return R
        R += 1


@dataclass(frozen=True)
class BruteSum:
    value: float
    radius: int


def brute_sum_B2(n: int, mu: float, R: int | None = None) -> BruteSum:
    """Sum of ``exp(-mu d(x, v))`` over all configurations ``v`` of n particles on Z
    within l1 radius R of the droplet ``x = (1, ..., n)``.

    Shifting ``y_k = v_k - k`` turns the hard-core constraint into ``y_1 <= ... <= y_n``
    and ``d(x, v)`` into ``sum |y_k|``; the sum is enumerated directly.
    """
    if not mu > 0:
        raise DomainError(f"mu must be > 0, got {mu}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if R is None:
        R = brute_sum_radius(n, mu)
    weights = np.exp(-mu * np.arange(R + 1))
    # cum[a] = sum_{t=-R}^{a} exp(-mu |t|) for a in [-R, R]
    ts = np.arange(-R, R + 1)
    cum = np.cumsum(np.exp(-mu * np.abs(ts)))

    def last_level(floor: int, budget: int) -> float:
        # sum over y >= floor with |y| <= budget of exp(-mu |y|)
        lo = max(floor, -budget)
        hi = budget
        if lo > hi:
            return 0.0
        total = cum[hi + R]
        if lo + R - 1 >= 0:
            total -= cum[lo + R - 1]
        return float(total)

    def walk(level: int, floor: int, budget: int) -> float:
        if level == n - 1:
            return last_level(floor, budget)
        acc = 0.0
        for y in range(max(floor, -budget), budget + 1):
            acc += weights[abs(y)] * walk(level + 1, y, budget - abs(y))
        return acc

    return BruteSum(float(walk(0, -R, R)), R)


# -- decay envelope --------------------------------------------------------

class EnvelopeCase(enum.Enum):
    BOTH_CLUSTERED = "both_clustered"
    ONE_CLUSTERED = "one_clustered"
    NEITHER_CLUSTERED = "neither_clustered"


@dataclass(frozen=True)
class DecayEnvelope:
    mu: float

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise DomainError(f"decay rate must be > 0, got {self.mu}")

    @staticmethod
    def case(x: Sequence[int], y: Sequence[int]) -> EnvelopeCase:
        cx, cy = cluster_count(x) == 1, cluster_count(y) == 1
        if cx and cy:
            return EnvelopeCase.BOTH_CLUSTERED
        if cx or cy:
            return EnvelopeCase.ONE_CLUSTERED
        return EnvelopeCase.NEITHER_CLUSTERED


def envelope_F(x: Sequence[int], y: Sequence[int], env: DecayEnvelope, space: ConfigSpace) -> float:
    """Evaluate ``F_mu(x, y)`` by its three-case definition, summing over the droplets of ``space``."""
    mu = env.mu
    droplets = [space.config(i) for i in space.clustered]
    case = env.case(x, y)
    if case is EnvelopeCase.BOTH_CLUSTERED:
        return math.exp(-mu * abs(x[0] - y[0]))
    if case is EnvelopeCase.ONE_CLUSTERED:
        if cluster_count(x) == 1:
            x, y = y, x
        return sum(math.exp(-mu * (l1_distance(x, w) + abs(w[0] - y[0]))) for w in droplets)
    return sum(
        math.exp(-mu * (l1_distance(x, w) + abs(w[0] - v[0]) + l1_distance(v, y)))
        for w in droplets
        for v in droplets
    )


def envelope_matrix(space: ConfigSpace, mu: float) -> np.ndarray:
    """``F_mu(x, y)`` for all pairs, as ``E K E^T``.

    ``E[x, w] = exp(-mu d(x, w))`` for non-clustered ``x`` and the indicator of
    ``w = x`` for clustered ``x``; ``K[w, v] = exp(-mu |w_1 - v_1|)``.
    """
    E = np.exp(-mu * space.droplet_distance)
    cl = space.clustered
    E[cl] = 0.0
    E[cl, np.arange(len(cl))] = 1.0
    starts = space.droplet_starts
    K = np.exp(-mu * np.abs(starts[:, None] - starts[None, :]))
    return E @ K @ E.T


def window_sum_bound(n: int, mu: float) -> float:
    """Explicit bound on the window sum of ``F_mu`` assembled from the four-case estimate.

    Clustered pairs contribute ``e^-mu / (1-e^-mu)^2 + (n-1) coth(mu/2)``; the two
    mixed cases ``(n-2 + coth(mu/4)) coth(mu/4) C_inf(mu/2)`` each; non-clustered
    pairs ``(n-2 + coth(mu/4)) coth(mu/4) C_inf(mu/2)^2``.  The result is affine in
    ``n``, hence of the form ``C_mu (n + 1)``.
    """
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    coth2 = 1.0 / math.tanh(mu / 2)
    coth4 = 1.0 / math.tanh(mu / 4)
    q = math.exp(-mu)
    c_half = c_infinity(mu / 2)
    both = q / (1.0 - q) ** 2 + (n - 1) * coth2
    lead = (n - 2) + coth4
    mixed = lead * coth4 * c_half
    neither = lead * coth4 * c_half**2
    return both + 2.0 * mixed + neither


@dataclass(frozen=True)
class WindowSum:
    value: float
    bound: float
    distance: int


def sum_F_over_windows(U: Interval, V: Interval, mu: float, space: ConfigSpace) -> WindowSum:
    """Sum of ``F_mu(x, y)`` over ``x`` meeting ``U`` and ``y`` meeting ``V``."""
    if U[0] > U[1] or V[0] > V[1]:
        raise DomainError(f"windows must be non-empty intervals, got {U}, {V}")
    if not (U[1] < V[0] or V[1] < U[0]):
        raise DomainError(f"windows {U} and {V} overlap; the summability constant depends on the overlap")
    if not mu > 0:
        raise DomainError(f"mu must be > 0, got {mu}")
    F = envelope_matrix(space, mu)
    xs, ys = space.meeting(U), space.meeting(V)
    value = float(F[np.ix_(xs, ys)].sum())
    return WindowSum(value, window_sum_bound(space.n, mu), interval_distance(U, V))
