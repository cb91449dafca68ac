"""Lid-driven viscoplastic cavity: horizontal velocity on the vertical midline for several yield stresses."""
import argparse
from dataclasses import dataclass

from convexfem.demos import RUNNERS, DemoConfig


@dataclass
class ProfileConfig:
    n: int = 16
    tau0s: tuple = (0.0, 0.5, 2.0)
    stride: int = 4


def main(cfg: ProfileConfig):
    profiles = {}
    for tau0 in cfg.tau0s:
        res = RUNNERS["viscoplastic"](DemoConfig("viscoplastic", n=cfg.n, params={"tau0": tau0}))
        _, rows = res.tables["viscoplastic_midline"]
        profiles[tau0] = rows
        print(f"tau0={tau0}: {res.status}, Bi={res.metrics['Bi']:.3g}")
    print("     y " + "".join(f"  ux(tau0={t:g})" for t in cfg.tau0s))
    first = profiles[cfg.tau0s[0]]
    for i in range(0, len(first), cfg.stride):
        print(f"{first[i][0]:6.3f} " + "".join(f"{profiles[t][i][1]:>14.5f}" for t in cfg.tau0s))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--tau0", type=float, nargs="+", default=[0.0, 0.5, 2.0])
    a = ap.parse_args()
    main(ProfileConfig(a.n, tuple(a.tau0)))
