"""Regenerate the bound curves shipped in ``src/diqkd/data/bound_curves.csv``.

    python scripts/build_curves.py [--workers N] [--out PATH]

Only ``lam >= 1/2`` is computed; the other half follows by symmetry.
"""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

from diqkd.bounds import CurveLibrary, NetConfig, compute_bound_curve

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "diqkd" / "data" / "bound_curves.csv"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--lambdas", type=float, nargs="*", default=list(np.round(np.arange(0.5, 1.0001, 0.05), 2)))
    args = ap.parse_args(argv)
    cfg = NetConfig()
    lib = CurveLibrary(cfg=cfg)
    for lam in args.lambdas:
        t0 = time.time()
        curve = compute_bound_curve(lam, cfg, workers=args.workers)
        lib.add(curve)
        lib.write_csv(args.out)  # checkpoint after every curve
        print(f"lambda={lam:.2f} done in {time.time() - t0:.0f}s", file=sys.stderr, flush=True)


if __name__ == "__main__":
    main()
