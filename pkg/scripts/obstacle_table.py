"""Obstacle problem: objective, iterations and timing over a range of meshes."""
import argparse
import time
from dataclasses import dataclass

from convexfem.demos import RUNNERS, DemoConfig


@dataclass
class ObstacleTableConfig:
    sizes: tuple = (10, 25, 50)
    diagonal: str = "crossed"
    tol: float = 1e-8


def main(cfg: ObstacleTableConfig):
    print(f"{'n':>4} {'objective':>12} {'iters':>6} {'contact':>8} {'time [s]':>9}")
    for n in cfg.sizes:
        t0 = time.perf_counter()
        res = RUNNERS["obstacle"](DemoConfig("obstacle", n=n, diagonal=cfg.diagonal, tol=cfg.tol))
        dt = time.perf_counter() - t0
        print(f"{n:>4} {res.objective:>12.6f} {res.iterations:>6} {res.metrics['contact_fraction']:>8.3f} "
              f"{dt:>9.2f}  {res.status}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 25, 50])
    ap.add_argument("--diagonal", default="crossed")
    a = ap.parse_args()
    main(ObstacleTableConfig(tuple(a.sizes), a.diagonal))
