"""SGFE expectation and variance of the output on a uniform mu-grid.

Writes ``sweep.csv`` with columns mu1,mu2,E,V (one row per grid point).

    python3 scripts/parameter_sweep.py configs/default.json results/ [n_grid]
"""
import csv
import sys
from pathlib import Path

from stochrb.config import load_config
from stochrb.experiments import build_study, parameter_sweep


def main(config_path, out_dir, n_grid=21):
    st = build_study(load_config(config_path))
    g, E, V = parameter_sweep(st, int(n_grid))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu1", "mu2", "E", "V"])
        for i, m1 in enumerate(g):
            for j, m2 in enumerate(g):
                w.writerow([float(m1), float(m2), repr(float(E[i, j])), repr(float(V[i, j]))])
    print(f"E in [{E.min():.3e}, {E.max():.3e}], V in [{V.min():.3e}, {V.max():.3e}]")


if __name__ == "__main__":
    if len(sys.argv) not in (3, 4):
        sys.exit(__doc__)
    main(*sys.argv[1:])
