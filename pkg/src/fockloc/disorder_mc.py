"""Disorder sampling and Monte-Carlo estimates of averaged spectral quantities.

Each realization ``i`` of a plan draws its field from an independent Philox
stream keyed by ``(seed_root, i)``.  Realizations are evaluated independently
(optionally on a thread pool, numpy's LAPACK calls release the GIL) and merged
in index order, so results never depend on scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np

from .configspace import (
    ConfigSpace,
    Configuration,
    DomainError,
    Interval,
    enumerate_configs,
    interval_distance,
)
from .operators import DisorderRealization, ModelParams, SymmetricOperator, build_hamiltonian
from .spectral import (
    EnergyWindow,
    SpectralData,
    correlator_matrix,
    diagonalize_window,
    window_correlator,
)

T = TypeVar("T")

THRESHOLD_SLACK = 1e-9


class PreconditionError(ValueError):
    """A plan violates a hypothesis of the bound it is meant to probe."""


class CertificationError(RuntimeError):
    """A single realization broke a deterministic inequality; averaging is aborted."""


# -- distributions -------------------------------------------------------------

def _uniform(rng: np.random.Generator, size: int, omega_max: float) -> np.ndarray:
    return omega_max * rng.random(size)


def _beta22(rng: np.random.Generator, size: int, omega_max: float) -> np.ndarray:
    # density 6t(1-t) on [0, 1], bounded by 3/2
    return omega_max * rng.beta(2.0, 2.0, size)


DISTRIBUTIONS: dict[str, Callable[[np.random.Generator, int, float], np.ndarray]] = {
    "uniform": _uniform,
    "beta22": _beta22,
}


def realization_seed(seed_root: int, index: int) -> int:
    """64-bit seed of realization ``index``, derived by spawning from ``seed_root``."""
    ss = np.random.SeedSequence(seed_root, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_interval(
    lo: int, hi: int, distribution_id: str = "uniform", seed: int = 0, omega_max: float = 1.0
) -> DisorderRealization:
    try:
        law = DISTRIBUTIONS[distribution_id]
    except KeyError:
        raise DomainError(f"unknown distribution {distribution_id!r}; known: {sorted(DISTRIBUTIONS)}") from None
    rng = np.random.Generator(np.random.Philox(seed))
    omega = law(rng, hi - lo + 1, omega_max)
    return DisorderRealization(omega, lo, seed, distribution_id, omega_max)


def sample_disorder(
    L: int, distribution_id: str = "uniform", seed: int = 0, omega_max: float = 1.0
) -> DisorderRealization:
    """iid field on ``[-L, L]``; the pair ``(seed, distribution_id)`` regenerates it bit for bit."""
    return sample_interval(-L, L, distribution_id, seed, omega_max)


# -- plans and estimates --------------------------------------------------------

PLAN_KEYS = (
    "L", "n", "g", "lambda", "omega_max", "distribution", "realizations",
    "seed_root", "window_lo", "window_hi", "s", "mu", "mu_T",
)


@dataclass(frozen=True)
class McPlan:
    L: int
    n: int
    params: ModelParams
    window: EnergyWindow
    realizations: int = 100
    seed_root: int = 0
    s: float = 0.5
    mu: float = 0.05
    mu_T: float = 0.1
    distribution: str = "uniform"
    omega_max: float = 1.0

    def __post_init__(self) -> None:
        if self.realizations < 1:
            raise DomainError("need at least one realization")
        if not 0 < self.s < 1:
            raise DomainError(f"fractional exponent must lie in (0, 1), got {self.s}")
        if not 0 < self.mu < self.mu_T:
            raise DomainError(f"need 0 < mu < mu_T, got mu={self.mu}, mu_T={self.mu_T}")
        if not 1 <= self.n <= 2 * self.L + 1:
            raise DomainError(f"n={self.n} does not fit on {2 * self.L + 1} sites")
        if self.distribution not in DISTRIBUTIONS:
            raise DomainError(f"unknown distribution {self.distribution!r}")

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "McPlan":
        unknown = set(cfg) - set(PLAN_KEYS)
        if unknown:
            raise DomainError(f"unknown plan keys: {sorted(unknown)}")
        missing = {"L", "n", "g"} - set(cfg)
        if missing:
            raise DomainError(f"missing plan keys: {sorted(missing)}")
        return cls(
            L=int(cfg["L"]),
            n=int(cfg["n"]),
            params=ModelParams(float(cfg["g"]), float(cfg.get("lambda", 0.0))),
            window=EnergyWindow(float(cfg.get("window_lo", 0.0)), float(cfg.get("window_hi", 1.0))),
            realizations=int(cfg.get("realizations", 100)),
            seed_root=int(cfg.get("seed_root", 0)),
            s=float(cfg.get("s", 0.5)),
            mu=float(cfg.get("mu", 0.05)),
            mu_T=float(cfg.get("mu_T", 0.1)),
            distribution=str(cfg.get("distribution", "uniform")),
            omega_max=float(cfg.get("omega_max", 1.0)),
        )

    def to_mapping(self) -> dict[str, Any]:
        return {
            "L": self.L, "n": self.n, "g": self.params.g, "lambda": self.params.lam,
            "omega_max": self.omega_max, "distribution": self.distribution,
            "realizations": self.realizations, "seed_root": self.seed_root,
            "window_lo": self.window.lo, "window_hi": self.window.hi,
            "s": self.s, "mu": self.mu, "mu_T": self.mu_T,
        }

    @property
    def space(self) -> ConfigSpace:
        return enumerate_configs(self.L, self.n)

    def with_lambda(self, lam: float) -> "McPlan":
        return replace(self, params=ModelParams(self.params.g, lam))

    def realization(self, index: int) -> DisorderRealization:
        return sample_disorder(self.L, self.distribution, realization_seed(self.seed_root, index), self.omega_max)


def threshold_energy(g: float, mu_T: float) -> float:
    """``E(g, mu_T) = 4g - 12 e^mu_T``, the top of the admissible energy range."""
    return 4 * g - 12 * math.exp(mu_T)


def check_window(plan: McPlan) -> None:
    E_max = threshold_energy(plan.params.g, plan.mu_T)
    if E_max <= 0:
        raise PreconditionError(f"E(g, mu_T) = 4g - 12 e^mu_T = {E_max:.6g} is not positive")
    if plan.window.lo < 0 or plan.window.hi >= E_max:
        raise PreconditionError(
            f"window [{plan.window.lo}, {plan.window.hi}] is not inside [0, E(g, mu_T)) = [0, {E_max:.6g})"
        )


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    count: int
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.count < 1:
            raise DomainError("estimate needs at least one sample")

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "McEstimate":
        a = np.asarray(list(samples), dtype=float)
        se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else math.inf
        return cls(float(a.mean()), se, len(a), float(a.min()), float(a.max()))

    @property
    def rel_err(self) -> float:
        return self.stderr / self.mean if self.mean > 0 else math.inf


def map_realizations(fn: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """``[fn(0), ..., fn(count - 1)]``, possibly computed concurrently, always in index order."""
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(count)))


def certify_ground_state(sd: SpectralData, g: float, lam: float, seed: int) -> None:
    """Abort when a computed eigenvalue sits below ``2(g - 1)``; needs ``lam * V >= 0``."""
    if lam < 0 or len(sd.eigenvalues) == 0:
        return
    bottom = float(sd.eigenvalues[0])
    if bottom < 2 * (g - 1) - THRESHOLD_SLACK:
        raise CertificationError(
            f"realization seed {seed}: eigenvalue {bottom!r} below the cluster threshold 2(g-1) = {2 * (g - 1)!r}"
        )


def _window_spectrum(plan: McPlan, space: ConfigSpace, w: DisorderRealization) -> SpectralData:
    H = build_hamiltonian(space, plan.params, w)
    sd = diagonalize_window(H, plan.window)
    certify_ground_state(sd, plan.params.g, plan.params.lam, w.seed)
    return sd


# -- log-linear fits -----------------------------------------------------------

@dataclass(frozen=True)
class LogLinearFit:
    """``log m ~ log C - rate * r`` fitted with weights ``1/sigma_log``."""

    C: float
    rate: float
    rate_se: float
    points: int

    def envelope(self, r: np.ndarray | float) -> np.ndarray | float:
        return self.C * np.exp(-self.rate * np.asarray(r, dtype=float))

    @property
    def significant(self) -> bool:
        """Rate positive at 95% confidence (one-sided normal quantile 1.96 on the two-sided interval)."""
        return bool(np.isfinite(self.rate) and self.rate - 1.96 * self.rate_se > 0)


NO_FIT = LogLinearFit(math.nan, math.nan, math.nan, 0)


def fit_log_linear(r: Sequence[float], est: Sequence[McEstimate]) -> LogLinearFit:
    """Weighted fit of ``log mean`` against ``r`` over the points with positive mean."""
    r = np.asarray(r, dtype=float)
    mean = np.array([e.mean for e in est])
    se = np.array([e.stderr for e in est])
    ok = mean > 0
    if ok.sum() < 2 or np.unique(r[ok]).size < 2:
        return replace(NO_FIT, points=int(ok.sum()))
    sig = np.maximum(se[ok] / mean[ok], 1e-12)
    sig = np.where(np.isfinite(sig), sig, 1.0)
    A = np.column_stack([np.ones(ok.sum()), -r[ok]]) / sig[:, None]
    b = np.log(mean[ok]) / sig
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    cov = np.linalg.inv(A.T @ A)
    dof = max(int(ok.sum()) - 2, 1)
    chi2 = float(np.sum((A @ coef - b) ** 2)) / dof
    # inflate by the reduced chi^2 when the model misfits beyond the noise
    rate_se = math.sqrt(cov[1, 1] * max(chi2, 1.0))
    return LogLinearFit(float(math.exp(coef[0])), float(coef[1]), rate_se, int(ok.sum()))


def envelope_violations(r: Sequence[float], est: Sequence[McEstimate], fit: LogLinearFit, sigmas: float = 3.0) -> int:
    """Points whose mean lies above the fitted envelope by more than ``sigmas`` standard errors.

    The test is one-sided on the linear scale: correlator samples are heavy
    tailed (rare resonances), so a log-scale band would misjudge points whose
    mean is carried by a single realization.
    """
    if not np.isfinite(fit.rate):
        return sum(e.mean > 0 for e in est)
    return sum(e.mean - sigmas * e.stderr > fit.envelope(ri) for ri, e in zip(r, est))


# -- correlator decay ------------------------------------------------------------

@dataclass(frozen=True)
class PairEstimate:
    x: Configuration
    y: Configuration
    exponent: float
    estimate: McEstimate


@dataclass(frozen=True)
class DecayReport:
    pairs: tuple[PairEstimate, ...]
    curve: tuple[tuple[float, McEstimate], ...]
    fit: LogLinearFit
    violations: int


def estimate_correlator_decay(
    plan: McPlan,
    pairs: Sequence[tuple[int, int]] | None = None,
    workers: int = 1,
    check: bool = True,
) -> DecayReport:
    """Disorder average of ``Q(x, y, I)`` and a fit of its decay in ``dbar(x, y)``.

    ``pairs`` are ordinal pairs of the plan's space (all clustered pairs by
    default, where ``dbar`` is ``|x_1 - y_1|``).  ``curve`` pools the pairs by
    exponent, realization by realization.
    """
    if check:
        check_window(plan)
    space = plan.space
    if pairs is None:
        C = space.clustered
        pairs = [(int(a), int(b)) for a in C for b in C]
    xs = np.array([p[0] for p in pairs], dtype=np.int64)
    ys = np.array([p[1] for p in pairs], dtype=np.int64)
    expo = np.array([space.dbar_row(int(a))[int(b)] for a, b in pairs], dtype=float)

    def one(i: int) -> np.ndarray:
        sd = _window_spectrum(plan, space, plan.realization(i))
        rows, inv_r = np.unique(xs, return_inverse=True)
        cols, inv_c = np.unique(ys, return_inverse=True)
        M = correlator_matrix(sd, plan.window, rows, cols)
        return M[inv_r, inv_c]

    samples = np.array(map_realizations(one, plan.realizations, workers))
    per_pair = [McEstimate.from_samples(samples[:, k]) for k in range(len(pairs))]
    table = tuple(
        PairEstimate(space.config(int(a)), space.config(int(b)), float(e), est)
        for (a, b), e, est in zip(pairs, expo, per_pair)
    )
    levels = np.unique(expo)
    curve = tuple(
        (float(r), McEstimate.from_samples(samples[:, expo == r].mean(axis=1))) for r in levels
    )
    fit = fit_log_linear([p.exponent for p in table], per_pair)
    return DecayReport(table, curve, fit, envelope_violations([p.exponent for p in table], per_pair, fit))


def diagonal_n_sweep(
    plan: McPlan, ns: Sequence[int], workers: int = 1
) -> tuple[tuple[tuple[int, McEstimate], ...], LogLinearFit]:
    """``E[Q(x, x, I)]`` at the centred droplet for each particle number, same fields for every n."""
    spaces = {n: enumerate_configs(plan.L, n) for n in ns}
    centre = {n: spaces[n].index_of(tuple(range(-(n // 2), n - n // 2))) for n in ns}

    def one(i: int) -> list[float]:
        w = plan.realization(i)
        out = []
        for n in ns:
            sd = _window_spectrum(plan, spaces[n], w)
            k = sd.locate(centre[n])
            out.append(float(np.sum(sd.eigenvectors[k] ** 2)))
        return out

    samples = np.array(map_realizations(one, plan.realizations, workers))
    est = tuple((n, McEstimate.from_samples(samples[:, k])) for k, n in enumerate(ns))
    return est, fit_log_linear(list(ns), [e for _, e in est])


# -- fractional moments ------------------------------------------------------------

def _green_entry(H: np.ndarray, i: int, j: int, E: float) -> float:
    rhs = np.zeros(H.shape[0])
    rhs[j] = 1.0
    return float(np.linalg.solve(H - E * np.eye(H.shape[0]), rhs)[i])


def fractional_moment_probe(
    plan: McPlan,
    x: Configuration,
    y: Configuration,
    E: float = 0.0,
    conditioning: tuple[int, int] | None = None,
    inner: int = 16,
    workers: int = 1,
) -> McEstimate:
    """``E[|G(x, y; E)|^s]`` over the plan's realizations.

    With ``conditioning = (u, v)`` each outer sample is itself the average over
    ``inner`` fresh draws of ``omega(u), omega(v)`` with every other site frozen,
    i.e. a Monte-Carlo estimate of the conditional moment.
    """
    space = plan.space
    i, j = space.index_of(x), space.index_of(y)
    if conditioning is not None:
        u, v = conditioning
        if u not in x or v not in y:
            raise DomainError(f"conditioning sites {conditioning} must satisfy u in x and v in y")
    law = DISTRIBUTIONS[plan.distribution]

    def one(k: int) -> float:
        w = plan.realization(k)
        H = build_hamiltonian(space, plan.params, w)
        if conditioning is None:
            return abs(_green_entry(H.toarray(), i, j, E)) ** plan.s
        rng = np.random.Generator(np.random.Philox(w.seed).jumped())
        u, v = conditioning
        draws = law(rng, 2 * inner, plan.omega_max).reshape(inner, 2)
        vals = []
        for a, b in draws:
            wk = w.replace_sites({u: a, v: b})
            Hk = build_hamiltonian(space, plan.params, wk).toarray()
            vals.append(abs(_green_entry(Hk, i, j, E)) ** plan.s)
        return float(np.mean(vals))

    return McEstimate.from_samples(map_realizations(one, plan.realizations, workers))


def lambda_sweep(
    plan: McPlan, lambdas: Sequence[float], x: Configuration, y: Configuration, E: float = 0.0, workers: int = 1
) -> tuple[tuple[tuple[float, McEstimate], ...], float]:
    """Fractional moments across disorder strengths (common random numbers) and their log-log slope."""
    lams = sorted(float(l) for l in lambdas)
    rows = tuple((l, fractional_moment_probe(plan.with_lambda(l), x, y, E, workers=workers)) for l in lams)
    slope = float(np.polyfit(np.log(lams), np.log([e.mean for _, e in rows]), 1)[0])
    return rows, slope


# -- sup-sums over subvolumes --------------------------------------------------------

@dataclass(frozen=True)
class SupSums:
    S1: McEstimate
    S2: McEstimate
    argmax1: tuple[Interval, Configuration]
    argmax2: tuple[Interval, Configuration]


def sum_S1_S2(plan: McPlan, E: float = 0.0, workers: int = 1) -> SupSums:
    """Monte-Carlo sup-sums of weighted fractional Green moments over subintervals and droplets.

    For each subinterval ``Lambda'`` of ``[-L, L]`` holding ``n`` particles and each
    droplet ``x`` in it, the per-realization sums
    ``sum_{y clustered} e^{s mu |x_1-y_1|} |G(x,y;E)|^s`` and
    ``sum_{y} e^{s mu dbar(x,y)} |G(x,y;E)|^s`` are averaged; the reported value
    is the largest average, with the standard error of that entry.
    """
    n, L, s, mu = plan.n, plan.L, plan.s, plan.mu
    subs = [(a, b) for a in range(-L, L + 1) for b in range(a + n - 1, L + 1)]
    spaces = {ab: ConfigSpace.interval(ab[0], ab[1], n) for ab in subs}
    weights = {}
    for ab, sp in spaces.items():
        C = sp.clustered
        d1 = np.abs(sp.sites[C, 0][:, None] - sp.sites[C, 0][None, :])
        weights[ab] = (C, np.exp(s * mu * d1), np.exp(s * mu * sp.dbar_matrix()[C]))

    def one(k: int) -> tuple[np.ndarray, np.ndarray]:
        w = plan.realization(k)
        out1, out2 = [], []
        for ab in subs:
            sp = spaces[ab]
            C, w1, w2 = weights[ab]
            H = build_hamiltonian(sp, plan.params, w.restrict(*ab)).toarray()
            rhs = np.zeros((sp.size, len(C)))
            rhs[C, np.arange(len(C))] = 1.0
            Gs = np.abs(np.linalg.solve(H - E * np.eye(sp.size), rhs).T) ** s  # rows: clustered x
            out1.append((w1 * Gs[:, C]).sum(axis=1))
            out2.append((w2 * Gs).sum(axis=1))
        return np.concatenate(out1), np.concatenate(out2)

    res = map_realizations(one, plan.realizations, workers)
    a1 = np.array([r[0] for r in res])
    a2 = np.array([r[1] for r in res])
    labels = [(ab, spaces[ab].config(int(c))) for ab in subs for c in spaces[ab].clustered]
    k1 = int(np.argmax(a1.mean(axis=0)))
    k2 = int(np.argmax(a2.mean(axis=0)))
    return SupSums(
        McEstimate.from_samples(a1[:, k1]), McEstimate.from_samples(a2[:, k2]), labels[k1], labels[k2]
    )


# -- window correlators -----------------------------------------------------------

def window_correlator_average(plan: McPlan, U: Interval, V: Interval, workers: int = 1) -> McEstimate:
    """``E[q(U, V, I)]`` for disjoint site intervals ``U, V``."""
    if interval_distance(U, V) == 0:
        raise DomainError(f"windows {U} and {V} overlap")
    space = plan.space

    def one(i: int) -> float:
        return window_correlator(_window_spectrum(plan, space, plan.realization(i)), space, U, V, plan.window)

    return McEstimate.from_samples(map_realizations(one, plan.realizations, workers))


def window_distance_sweep(
    plan: McPlan, U: Interval, Vs: Sequence[Interval], workers: int = 1
) -> tuple[tuple[tuple[int, McEstimate], ...], LogLinearFit]:
    """``E[q(U, V, I)]`` for several target windows, realization by realization on shared spectra."""
    space = plan.space
    for V in Vs:
        if interval_distance(U, V) == 0:
            raise DomainError(f"windows {U} and {V} overlap")
    dists = [interval_distance(U, V) for V in Vs]

    def one(i: int) -> list[float]:
        sd = _window_spectrum(plan, space, plan.realization(i))
        return [window_correlator(sd, space, U, V, plan.window) for V in Vs]

    samples = np.array(map_realizations(one, plan.realizations, workers))
    est = tuple((d, McEstimate.from_samples(samples[:, k])) for k, d in enumerate(dists))
    return est, fit_log_linear(dists, [e for _, e in est])
