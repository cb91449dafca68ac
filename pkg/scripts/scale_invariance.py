"""Sensitivity of the interior-point solution to a positive rescaling of the cost vector."""
import argparse
from dataclasses import dataclass, replace

import numpy as np

from convexfem.demos import build_obstacle
from convexfem.ipm import IpmSettings, solve
from convexfem.mesh import unit_square_mesh


@dataclass
class SweepConfig:
    n: int = 8
    factors: tuple = (1e-4, 1e-2, 1.0, 1e2, 1e4)


def main(cfg: SweepConfig):
    prob, _, _ = build_obstacle(unit_square_mesh(cfg.n, "crossed"))
    prog = prob.assemble()
    for label, settings in (("normalized (default)", IpmSettings()),
                            ("original units", IpmSettings(cost_norm=None, check_cost_norm=None))):
        ref = solve(prog, settings)
        print(f"{label}: reference status {ref.status}, {ref.iterations} iterations")
        for a in cfg.factors:
            r = solve(replace(prog, c=a * prog.c, obj_offset=a * prog.obj_offset), settings)
            dx = np.max(np.abs(r.x - ref.x))
            print(f"  c x {a:8.0e}: status {r.status:<9} iterations {r.iterations:>3}  max|x - x_ref| = {dx:.1e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    main(SweepConfig(ap.parse_args().n))
