"""Pointwise and mean-square convergence tables for an existing artifact.

Writes ``pointwise_<quantity>.csv`` and ``l2_<quantity>.csv`` (R,Error,Bound).

    python3 scripts/convergence_study.py results/default.npz results/
"""
import sys

from stochrb.artifact import load_artifact
from stochrb.experiments import cmd_convergence


def main(artifact_path, out_dir):
    art = load_artifact(artifact_path)
    for mode in ("pointwise", "l2"):
        tables = cmd_convergence(art, mode, out_dir=out_dir)
        for q, rows in tables.items():
            worst = max(err / bnd for _, err, bnd in rows if bnd > 0)
            print(f"{mode:9s} {q:18s} max error/bound = {worst:.3f}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(*sys.argv[1:])
