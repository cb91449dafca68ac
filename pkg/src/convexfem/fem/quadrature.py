"""Quadrature rules on triangles and segments.

Cell rules store barycentric coordinates ``(npts, 3)``; facet rules store the
position ``t`` in [0, 1] along the facet, from its lower to its higher vertex
index. Weights are fractions of the cell area (or facet length).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_A4, _B4 = 0.44594849091596488632, 0.09157621350977074346
_W4A, _W4B = 0.2233815896780114657, 0.10995174365532186764


@dataclass(frozen=True, eq=False)
class QuadRule:
    domain: str  # "cell" | "facet"
    points: np.ndarray
    weights: np.ndarray
    name: str = ""

    @property
    def num_points(self) -> int:
        return len(self.weights)

    def __eq__(self, other):
        return (isinstance(other, QuadRule) and self.domain == other.domain
                and np.array_equal(self.points, other.points) and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.domain, self.points.tobytes(), self.weights.tobytes()))


def _orbit3(a):
    return [(1 - 2 * a, a, a), (a, 1 - 2 * a, a), (a, a, 1 - 2 * a)]


def _cell_rule(scheme, degree):
    if scheme == "centroid" or (scheme == "gauss" and degree <= 1):
        return [(1 / 3, 1 / 3, 1 / 3)], [1.0]
    if scheme == "vertex":
        return [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)], [1 / 3] * 3
    if scheme == "gauss" and degree == 2:
        return _orbit3(1 / 6), [1 / 3] * 3
    if scheme == "gauss" and degree in (3, 4):
        # 6-point rule exact to degree 4; all weights positive
        return _orbit3(_A4) + _orbit3(_B4), [_W4A] * 3 + [_W4B] * 3
    raise ValueError(f"unsupported cell quadrature {scheme}({degree})")


def _facet_rule(scheme, degree):
    if scheme == "centroid":
        return np.array([0.5]), np.array([1.0])
    if scheme == "vertex":
        return np.array([0.0, 1.0]), np.array([0.5, 0.5])
    if scheme == "gauss" and 0 <= degree <= 4:
        npts = degree // 2 + 1
        x, w = np.polynomial.legendre.leggauss(npts)
        return (x + 1) / 2, w / 2
    raise ValueError(f"unsupported facet quadrature {scheme}({degree})")


def quadrature_rule(scheme: str = "centroid", domain: str = "cell", degree: int | None = None) -> QuadRule:
    """Build a rule: ``centroid``, ``vertex`` or ``gauss`` of polynomial exactness ``degree`` (<= 4).

    ``scheme`` may also be written ``"gauss(2)"``.
    """
    if scheme.startswith("gauss(") and scheme.endswith(")"):
        degree = int(scheme[6:-1])
        scheme = "gauss"
    if scheme == "gauss":
        if degree is None or not 0 <= degree <= 4:
            raise ValueError(f"gauss quadrature degree must be in [0, 4], got {degree}")
    elif scheme not in ("centroid", "vertex"):
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    name = f"gauss({degree})" if scheme == "gauss" else scheme
    if domain == "cell":
        pts, w = _cell_rule(scheme, degree)
        pts = np.array(pts, dtype=float)
    elif domain == "facet":
        pts, w = _facet_rule(scheme, degree)
    else:
        raise ValueError(f"unknown quadrature domain {domain!r}")
    pts = np.asarray(pts, dtype=float)
    w = np.asarray(w, dtype=float)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(domain, pts, w, name)
