"""Command-line runner: plans in, CSV tables and a JSON manifest out.

Exit codes: 0 success, 1 usage or configuration error, 2 a certified
inequality failed for some realization.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .bounds import (
    CtParams,
    ct_constant,
    ct_verify,
    dynamical_check,
    heat_kernel_check,
    perturbative_correlator_check,
    resolvent_expansion_check,
)
from .configspace import DomainError, enumerate_configs
from .disorder_mc import (
    PLAN_KEYS,
    CertificationError,
    McPlan,
    PreconditionError,
    estimate_correlator_decay,
    realization_seed,
)
from .operators import ModelParams, build_hamiltonian, droplet_band, restrict, sector_indices
from .spectral import correlator_matrix, diagonalize
from .xxz import equivalence_residual

OUT_DIR_ENV = "FOCKLOC_OUT_DIR"
SUBCOMMANDS = ("enumerate", "spectrum", "correlator", "mc-run", "ct-verify", "xxz-check", "bounds-report")
XXZ_TOL = 1e-10

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(value: Any) -> str:
    """Cells for CSV: floats at 17 significant digits, tuples as space-joined integers."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(str(int(v)) for v in value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    plan: dict[str, Any]
    seed_root: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    wall_seconds: float = 0.0
    files: dict[str, str] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=float) + "\n")
        return path


# -- plot-ready tables -------------------------------------------------------------

PLOT_SCHEMAS = {
    "decay": ("separation", "mean", "stderr", "count"),
    "lambda_sweep": ("lambda", "mean", "stderr", "count"),
    "band": ("g", "n", "band_lo", "band_hi"),
}


def emit_plot_data(results: Sequence[Any], kind: str, path: str | Path) -> Path:
    """Long-format CSV for plotting.

    ``decay`` and ``lambda_sweep`` take ``(x, McEstimate)`` pairs; ``band`` takes
    ``(g, n)`` pairs and evaluates the droplet band.
    """
    if kind not in PLOT_SCHEMAS:
        raise UsageError(f"unknown plot kind {kind!r}; known: {sorted(PLOT_SCHEMAS)}")
    path = Path(path)
    if kind == "band":
        rows = [(float(g), int(n), *droplet_band(g, n)) for g, n in results]
    else:
        rows = [(float(x), e.mean, e.stderr, e.count) for x, e in results]
        if kind == "lambda_sweep":
            rows.sort(key=lambda r: r[0])
    write_csv(path, PLOT_SCHEMAS[kind], rows)
    return path


# -- configuration --------------------------------------------------------------------

FLAG_KEYS = {
    "L": "L", "n": "n", "g": "g", "lam": "lambda", "omega_max": "omega_max", "mu": "mu",
    "mu_T": "mu_T", "s": "s", "realizations": "realizations", "seed": "seed_root",
    "distribution": "distribution",
}

DEFAULTS: dict[str, Any] = {"L": 3, "n": 2, "g": 4.0}


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError("config must be a flat key-value mapping")
    unknown = sorted(set(data) - set(PLAN_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}; allowed: {list(PLAN_KEYS)}")
    for k, v in data.items():
        if isinstance(v, (dict, list)):
            raise UsageError(f"config key {k!r} must be a scalar")
    return data


def merged_plan(args: argparse.Namespace) -> McPlan:
    cfg = dict(DEFAULTS)
    cfg.update(load_config(args.config))
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr)
        if value is not None:
            cfg[key] = value
    if args.window is not None:
        cfg["window_lo"], cfg["window_hi"] = args.window
    try:
        return McPlan.from_mapping(cfg)
    except (DomainError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fockloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat YAML file with plan keys")
        p.add_argument("--L", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--g", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--omega-max", dest="omega_max", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--mu-T", dest="mu_T", type=float)
        p.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"))
        p.add_argument("--s", type=float)
        p.add_argument("--realizations", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--distribution")
        p.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or ./runs)")
    return parser


# -- subcommands ----------------------------------------------------------------------
# each returns (files written, summary dict, violation flag)

Outcome = tuple[list[Path], dict[str, Any], bool]


def _enumerate(plan: McPlan, out: Path) -> Outcome:
    space = enumerate_configs(plan.L, plan.n)
    sizes = space.sector_sizes()
    print(space.size)
    print(" ".join(f"k={k}:{v}" for k, v in sorted(sizes.items())))
    path = out / "configs.csv"
    write_csv(path, ("ordinal", "configuration", "clusters"),
              ((i, space.config(i), int(space.clusters[i])) for i in range(space.size)))
    return [path], {"size": space.size, "sectors": {str(k): v for k, v in sorted(sizes.items())}}, False


def _spectrum(plan: McPlan, out: Path) -> Outcome:
    space = plan.space
    rows = []
    for i in range(plan.realizations):
        w = plan.realization(i)
        sd = diagonalize(build_hamiltonian(space, plan.params, w))
        rows.extend((w.seed, k, e) for k, e in enumerate(sd.eigenvalues))
    spec = out / "spectrum.csv"
    write_csv(spec, ("seed", "index", "eigenvalue"), rows)
    band = emit_plot_data([(plan.params.g, plan.n)], "band", out / "band_edges.csv")
    return [spec, band], {"levels": len(rows)}, False


def _correlator(plan: McPlan, out: Path) -> Outcome:
    space = plan.space
    C = space.clustered
    rows = []
    for i in range(plan.realizations):
        w = plan.realization(i)
        sd = diagonalize(build_hamiltonian(space, plan.params, w))
        M = correlator_matrix(sd, plan.window, C, C)
        rows.extend((w.seed, int(a), int(b), plan.window.lo, plan.window.hi, M[p, q])
                    for p, a in enumerate(C) for q, b in enumerate(C))
    path = out / "correlators.csv"
    write_csv(path, ("seed", "x_index", "y_index", "window_lo", "window_hi", "value"), rows)
    return [path], {"rows": len(rows)}, False


def _mc_run(plan: McPlan, out: Path) -> Outcome:
    rep = estimate_correlator_decay(plan)
    pairs = out / "pairs.csv"
    write_csv(pairs, ("x", "y", "exponent", "mean", "stderr", "count"),
              ((p.x, p.y, p.exponent, p.estimate.mean, p.estimate.stderr, p.estimate.count) for p in rep.pairs))
    curve = emit_plot_data(rep.curve, "decay", out / "decay_curve.csv")
    summary = {"C": rep.fit.C, "mu_fit": rep.fit.rate, "mu_fit_se": rep.fit.rate_se,
               "significant": rep.fit.significant, "violations": rep.violations}
    return [pairs, curve], summary, False


def _ct_verify(plan: McPlan, out: Path) -> Outcome:
    p = CtParams(plan.params.g, plan.mu_T, plan.window.hi)
    space = plan.space
    rows, bad = [], 0
    for i in range(plan.realizations):
        w = plan.realization(i)
        rep = ct_verify(space, plan.params, w, p)
        bad += not rep.ok
        rows.append((w.seed, plan.params.lam, p.E, rep.ratio, rep.C_T, rep.pair[0], rep.pair[1], rep.ok))
    path = out / "ct_verify.csv"
    write_csv(path, ("seed", "lambda", "energy", "ratio", "C_T", "x", "y", "ok"), rows)
    print(f"C_T = {ct_constant(p):.10f}; worst ratio {max(r[3] for r in rows):.6g}; violations {bad}")
    return [path], {"C_T": ct_constant(p), "violations": bad}, bad > 0


def _xxz_check(plan: McPlan, out: Path) -> Outcome:
    space = plan.space
    rows, bad = [], 0
    for i in range(plan.realizations):
        w = plan.realization(i)
        res = equivalence_residual(space, plan.params.g, plan.params.lam, w)
        ok = res <= XXZ_TOL
        bad += not ok
        rows.append((w.seed, space.width, plan.n, plan.params.g, res, ok))
        print(f"seed {w.seed}: residual {res:.3e}")
    path = out / "xxz_residuals.csv"
    write_csv(path, ("seed", "N", "n", "g", "residual", "ok"), rows)
    return [path], {"violations": bad}, bad > 0


def _bounds_report(plan: McPlan, out: Path) -> Outcome:
    space = plan.space
    g, lam = plan.params.g, plan.params.lam
    rows = []

    def add(seed: int, check: str, lhs: float, rhs: float, ok: bool) -> None:
        rows.append((seed, check, lhs, rhs, ok))

    admissible = 4 * g - plan.window.hi > 12 * np.exp(plan.mu_T) and plan.window.lo >= 0
    for i in range(plan.realizations):
        w = plan.realization(i)
        H = build_hamiltonian(space, plan.params, w)
        sd = diagonalize(H)
        for k in range(1, int(space.clusters.max()) + 1):
            idx = sector_indices(space, k, "at_least")
            bottom = float(np.linalg.eigvalsh(restrict(H, idx).toarray())[0])
            add(w.seed, f"threshold_k{k}", 2 * k * (g - 1), bottom, bottom >= 2 * k * (g - 1) - 1e-9)
        centre = space.size // 2
        for t in (0.5, 1.0, 2.0):
            r = heat_kernel_check(sd, centre, plan.window, t)
            add(w.seed, f"heat_kernel_t{t}", r.lhs, r.rhs, r.ok)
        r = dynamical_check(sd, centre, int(space.clustered[0]), plan.window)
        add(w.seed, "dynamical", r.lhs, r.rhs, r.ok)
        if plan.n >= 2 and admissible:
            ct = ct_verify(space, plan.params, w, CtParams(g, plan.mu_T, plan.window.hi))
            add(w.seed, "combes_thomas", ct.ratio, ct.C_T, ct.ok)
            for x in np.flatnonzero(space.clusters > 1)[:5]:
                r = perturbative_correlator_check(sd, space, g, plan.mu_T, plan.window, int(x), centre)
                add(w.seed, f"perturbative_x{int(x)}", r.lhs, r.rhs, r.ok)
        if plan.n >= 2 and len(space.clustered) < space.size:
            Q = np.flatnonzero(space.clusters > 1)
            P = space.clustered
            r = resolvent_expansion_check(H, Q, P, int(Q[0]), int(P[0]), 0.0)
            add(w.seed, "resolvent_expansion", r.lhs, r.rhs, r.ok)
    path = out / "bounds_report.csv"
    write_csv(path, ("seed", "check", "lhs", "rhs", "ok"), rows)
    bad = sum(not r[4] for r in rows)
    print(f"{len(rows)} checks, {bad} violations")
    return [path], {"checks": len(rows), "violations": bad}, bad > 0


HANDLERS: dict[str, Callable[[McPlan, Path], Outcome]] = {
    "enumerate": _enumerate,
    "spectrum": _spectrum,
    "correlator": _correlator,
    "mc-run": _mc_run,
    "ct-verify": _ct_verify,
    "xxz-check": _xxz_check,
    "bounds-report": _bounds_report,
}


def run(subcommand: str, config_path: str | None = None, overrides: Sequence[str] = ()) -> int:
    """Execute one subcommand; ``overrides`` are extra command-line flags."""
    argv = [subcommand] + (["--config", config_path] if config_path else []) + list(overrides)
    return main(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        plan = merged_plan(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV, "runs")) / args.subcommand
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.subcommand, plan.to_mapping(), plan.seed_root)
    manifest.started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        files, summary, violated = HANDLERS[args.subcommand](plan, out)
    except (PreconditionError, DomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CertificationError as exc:
        print(f"certified inequality violated: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    manifest.wall_seconds = time.perf_counter() - t0
    manifest.finished = datetime.now(timezone.utc).isoformat()
    manifest.files = {f.name: sha256(f) for f in files}
    manifest.summary = summary
    manifest.write(out)
    return EXIT_VIOLATION if violated else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
