"""Upper bound limit load of the simply supported square plate under mesh refinement."""
import argparse
from dataclasses import dataclass

from convexfem.demos import RUNNERS, DemoConfig


@dataclass
class PlateSweepConfig:
    sizes: tuple = (10, 20, 50)
    m: float = 1.0


def main(cfg: PlateSweepConfig):
    for n in cfg.sizes:
        res = RUNNERS["plate"](DemoConfig("plate", n=n, params={"m": cfg.m}))
        print(f"n={n:<4} load factor {res.objective:.4f} m/f  iterations {res.iterations}  {res.status}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 50])
    ap.add_argument("--m", type=float, default=1.0)
    a = ap.parse_args()
    main(PlateSweepConfig(tuple(a.sizes), a.m))
