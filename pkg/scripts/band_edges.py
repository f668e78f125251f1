"""Droplet band: exact band edges against the lowest levels of the clean Hamiltonian."""

import argparse
from pathlib import Path

from fockloc.cli import emit_plot_data
from fockloc.configspace import enumerate_configs
from fockloc.spectral import droplet_band_levels


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=40)
    ap.add_argument("--ns", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--gs", type=float, nargs="+", default=[1.5, 2.0, 4.0])
    ap.add_argument("--out", type=Path, default=Path("out/band_edges"))
    a = ap.parse_args()

    a.out.mkdir(parents=True, exist_ok=True)
    emit_plot_data([(g, n) for g in a.gs for n in a.ns], "band", a.out / "band_edges.csv")
    for g in a.gs:
        for n in a.ns:
            lv = droplet_band_levels(enumerate_configs(a.L, n), g)
            lo, hi = lv.band
            print(f"g = {g}, n = {n}: band [{lo:.6f}, {hi:.6f}], bulk levels "
                  f"[{lv.bulk.min():.6f}, {lv.bulk.max():.6f}], {len(lv.wall)} wall-bound")


if __name__ == "__main__":
    main()
