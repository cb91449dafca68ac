"""Library of conic representable functions.

For norms and quadratic functions ``k`` multiplies the function value; for
ball indicators ``k`` is the radius.
"""
from __future__ import annotations

import numpy as np

from .conic import ConicRepr, Free, Quad, RQuad


def _check_positive(k, what="k"):
    if not np.isscalar(k) or not k > 0:
        raise ValueError(f"{what} must be a positive scalar, got {k!r}")
    return float(k)


def _indicator(ok):
    return 0.0 if ok else np.inf


def make_l2norm(d: int, k: float = 1.0) -> ConicRepr:
    """``k ||x||_2`` through ``y in Q(d+1)``, ``x - y_bar = 0``, cost ``k y0``."""
    k = _check_positive(k)
    r = ConicRepr(d, name="L2Norm", closed_form=lambda X: k * np.linalg.norm(X))
    y = r.add_var(d + 1, Quad(d + 1))
    r.add_eq_constraint(np.eye(d), {y: -np.eye(d + 1)[1:]}, 0.0, name="x-ybar")
    r.set_linear_term(None, {y: k * np.eye(d + 1)[0]})
    return r


def make_l1norm(d: int, k: float = 1.0) -> ConicRepr:
    """``k sum |x_i|`` with ``0 <= x + y`` and ``x - y <= 0``."""
    k = _check_positive(k)
    r = ConicRepr(d, name="L1Norm", closed_form=lambda X: k * np.abs(X).sum())
    y = r.add_var(d, Free(d))
    r.add_ineq_constraint(np.eye(d), {y: np.eye(d)}, bl=0.0, name="x+y")
    r.add_ineq_constraint(np.eye(d), {y: -np.eye(d)}, bu=0.0, name="x-y")
    r.set_linear_term(None, {y: np.full(d, k)})
    return r


def make_linfnorm(d: int, k: float = 1.0) -> ConicRepr:
    """``k max |x_i|`` with a scalar bound ``-y <= x_i <= y``."""
    k = _check_positive(k)
    r = ConicRepr(d, name="LinfNorm", closed_form=lambda X: k * np.abs(X).max())
    y = r.add_var(1, Free(1))
    ones = np.ones((d, 1))
    r.add_ineq_constraint(np.eye(d), {y: ones}, bl=0.0, name="x+y")
    r.add_ineq_constraint(np.eye(d), {y: -ones}, bu=0.0, name="x-y")
    r.set_linear_term(None, {y: [k]})
    return r


def make_absvalue(k: float = 1.0) -> ConicRepr:
    """``k |x|`` for scalar ``x``."""
    k = _check_positive(k)
    r = ConicRepr(1, name="AbsValue", closed_form=lambda X: k * abs(float(np.ravel(X)[0])))
    y = r.add_var(1, Free(1))
    r.add_ineq_constraint([[1.0]], {y: [[-1.0]]}, bu=0.0, name="x-y")
    r.add_ineq_constraint([[-1.0]], {y: [[-1.0]]}, bu=0.0, name="-x-y")
    r.set_linear_term(None, {y: [k]})
    return r


def make_quadratic(C=None, x0=None, k: float = 1.0, d: int | None = None) -> ConicRepr:
    """``k/2 ||C (x - x0)||^2`` through ``y in Qr(m+2)``, ``y1 = 1``, ``C x - y_bar = C x0``."""
    k = _check_positive(k)
    if C is None:
        if d is None:
            raise ValueError("give the factor C or the input dimension d")
        C = np.eye(d)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m, d = C.shape
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if len(x0) != d:
        raise ValueError(f"shift of length {len(x0)} for factor with {d} columns")
    r = ConicRepr(d, name="Quadratic", closed_form=lambda X: 0.5 * k * np.sum((C @ (np.ravel(X) - x0)) ** 2))
    y = r.add_var(m + 2, RQuad(m + 2))
    e = np.eye(m + 2)
    r.add_eq_constraint(None, {y: e[1:2]}, 1.0, name="y1=1")
    r.add_eq_constraint(C, {y: -e[2:]}, C @ x0, name="Cx-ybar")
    r.set_linear_term(None, {y: k * e[0]})
    return r


def make_l2ball(d: int, k: float = 1.0) -> ConicRepr:
    """Indicator of ``||x||_2 <= k``."""
    k = _check_positive(k, "radius")
    r = ConicRepr(d, name="L2Ball", closed_form=lambda X: _indicator(np.linalg.norm(X) <= k * (1 + 1e-12)))
    y = r.add_var(d + 1, Quad(d + 1))
    r.add_eq_constraint(np.eye(d), {y: -np.eye(d + 1)[1:]}, 0.0, name="x-ybar")
    r.add_eq_constraint(None, {y: np.eye(d + 1)[:1]}, k, name="y0=k")
    return r


def make_l1ball(d: int, k: float = 1.0) -> ConicRepr:
    """Indicator of ``||x||_1 <= k``."""
    k = _check_positive(k, "radius")
    r = ConicRepr(d, name="L1Ball", closed_form=lambda X: _indicator(np.abs(X).sum() <= k * (1 + 1e-12)))
    y = r.add_var(d, Free(d))
    r.add_ineq_constraint(np.eye(d), {y: np.eye(d)}, bl=0.0, name="x+y")
    r.add_ineq_constraint(np.eye(d), {y: -np.eye(d)}, bu=0.0, name="x-y")
    r.add_ineq_constraint(None, {y: np.ones((1, d))}, bu=k, name="sum")
    return r


def make_linfball(d: int, k: float = 1.0) -> ConicRepr:
    """Indicator of ``max |x_i| <= k`` (plain bounds, no auxiliary variable)."""
    k = _check_positive(k, "radius")
    r = ConicRepr(d, name="LinfBall", closed_form=lambda X: _indicator(np.abs(X).max() <= k * (1 + 1e-12)))
    r.add_ineq_constraint(np.eye(d), None, bl=-k, bu=k, name="box")
    return r


def make_pointwise_inequality(d: int, bl, bu) -> ConicRepr:
    """Indicator of ``bl <= x <= bu``."""
    bl = np.broadcast_to(np.asarray(bl, dtype=float), (d,)).copy()
    bu = np.broadcast_to(np.asarray(bu, dtype=float), (d,)).copy()
    if np.any(bl > bu):
        raise ValueError("lower bound above upper bound")
    r = ConicRepr(d, name="Inequality",
                  closed_form=lambda X: _indicator(np.all(np.ravel(X) >= bl - 1e-12) and np.all(np.ravel(X) <= bu + 1e-12)))
    r.add_ineq_constraint(np.eye(d), None, bl=bl, bu=bu, name="bounds")
    return r


def transport_cost(X):
    """``|m|^2 / (2 rho)`` with the convention 0 at (0, 0) and +inf elsewhere off rho > 0."""
    X = np.ravel(X)
    rho, m = X[0], X[1:]
    if rho > 0:
        return float(m @ m) / (2 * rho)
    if rho == 0 and not np.any(m):
        return 0.0
    return np.inf


def make_transport_cost(s: int = 1) -> ConicRepr:
    """Kinetic energy density of (rho, m) with ``s`` space dimensions."""
    if s not in (1, 2):
        raise ValueError("space dimension must be 1 or 2")
    r = ConicRepr(1 + s, name="TransportCost", closed_form=transport_cost)
    y = r.add_var(s + 2, RQuad(s + 2))
    r.add_eq_constraint(np.eye(1 + s), {y: -np.eye(s + 2)[1:]}, 0.0, name="(rho,m)-ybar")
    r.set_linear_term(None, {y: np.eye(s + 2)[0]})
    return r


# plate bending: Cholesky factor of the von Mises curvature metric on (X11, X22, 2 X12)
PLATE_METRIC = np.array([[4.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
# the upper Cholesky factor J = R + sqrt(3) S with integer R, S, so that J'J can be checked exactly
PLATE_FACTOR_PARTS = (np.array([[2, 1, 0], [0, 0, 0], [0, 0, 1]]), np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0]]))
PLATE_FACTOR = PLATE_FACTOR_PARTS[0] + np.sqrt(3.0) * PLATE_FACTOR_PARTS[1]


def plate_dissipation(X, m: float = 1.0) -> float:
    """Curvature dissipation ``2m/sqrt(3) sqrt(M11^2 + M22^2 + M12^2 + M11 M22)``, X = (M11, M22, 2 M12)."""
    m11, m22, m12 = X[0], X[1], X[2] / 2
    return 2 * m / np.sqrt(3) * np.sqrt(m11 ** 2 + m22 ** 2 + m12 ** 2 + m11 * m22)


def make_plate_dissipation(m: float = 1.0) -> ConicRepr:
    """``m/sqrt(3) ||J X||_2`` as an L2 norm of the Cholesky-transformed curvature."""
    m = _check_positive(m, "m")
    r = ConicRepr(3, name="PlateDissipation", closed_form=lambda X: plate_dissipation(np.ravel(X), m))
    y = r.add_var(4, Quad(4))
    r.add_eq_constraint(PLATE_FACTOR, {y: -np.eye(4)[1:]}, 0.0, name="JX-ybar")
    r.set_linear_term(None, {y: m / np.sqrt(3) * np.eye(4)[0]})
    return r


CATALOG = {
    "l2norm": lambda d: make_l2norm(d, 1.3),
    "l1norm": lambda d: make_l1norm(d, 0.7),
    "linfnorm": lambda d: make_linfnorm(d, 2.0),
    "absvalue": lambda d: make_absvalue(1.5),
    "quadratic": lambda d: make_quadratic(np.arange(1.0, 1.0 + d * d).reshape(d, d) / d + np.eye(d),
                                          np.linspace(-0.5, 0.5, d), 0.8),
    "l2ball": lambda d: make_l2ball(d, 1.0),
    "l1ball": lambda d: make_l1ball(d, 1.0),
    "linfball": lambda d: make_linfball(d, 1.0),
    "inequality": lambda d: make_pointwise_inequality(d, -0.5, 0.75),
    "transport": lambda d: make_transport_cost(d - 1),
    "plate": lambda d: make_plate_dissipation(1.0),
}
