"""Cheeger constant of the unit square: estimates and observed convergence rate per variant."""
import argparse
from dataclasses import dataclass

import numpy as np

from convexfem.demos import CHEEGER_EXACT, CHEEGER_VARIANTS, RUNNERS, DemoConfig


@dataclass
class CheegerSweepConfig:
    sizes: tuple = (6, 12, 25)
    variants: tuple = CHEEGER_VARIANTS
    diagonal: str = "crossed"


def main(cfg: CheegerSweepConfig):
    print(f"exact 2 + sqrt(pi) = {CHEEGER_EXACT:.6f}")
    for variant in cfg.variants:
        errs = []
        for n in cfg.sizes:
            res = RUNNERS["cheeger"](DemoConfig("cheeger", n=n, variant=variant, diagonal=cfg.diagonal))
            errs.append(abs(res.objective - CHEEGER_EXACT))
            print(f"{variant:>8} n={n:<4} estimate={res.objective:.6f} status={res.status}")
        if len(cfg.sizes) > 1:
            slope = np.polyfit(np.log(1.0 / np.array(cfg.sizes)), np.log(errs), 1)[0]
            print(f"{variant:>8} observed rate {slope:.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[6, 12, 25])
    ap.add_argument("--variants", nargs="+", default=list(CHEEGER_VARIANTS), choices=CHEEGER_VARIANTS)
    a = ap.parse_args()
    main(CheegerSweepConfig(tuple(a.sizes), tuple(a.variants)))
