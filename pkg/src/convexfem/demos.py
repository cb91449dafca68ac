"""Demo problems built on :class:`~convexfem.problem.BlockProblem`.

Every demo takes a :class:`DemoConfig` and returns a :class:`DemoResult`
holding the solver outcome, fields for VTK output and scalar metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConvexTerm
from .fem import (DiscreteField, QuadratureSpace, div, eval_points, function_space, grad, hessian, interpolate,
                  jump, normal_grad_jump, partial, quadrature_rule, sym_grad, trace, value, vector_space)
from .funclib import (make_absvalue, make_l1ball, make_l1norm, make_l2ball, make_l2norm, make_linfball,
                      make_linfnorm, make_plate_dissipation, make_pointwise_inequality, make_quadratic,
                      make_transport_cost)
from .ipm import IpmSettings
from .io import RasterImage, read_image
from .mesh import rectangle_mesh, unit_square_mesh
from .problem import BlockProblem, DirichletBC


class InvalidConfigError(ValueError):
    pass


# default physical parameters per demo
DEFAULTS = {
    "obstacle": dict(f=-5.0, g0=-0.1, a=0.01, k1=2.0, k2=8.0),
    "cheeger": dict(f=1.0),
    "plate": dict(m=1.0, f=1.0),
    "viscoplastic": dict(mu=1.0, tau0=0.5),
    "inpaint": dict(eta=0.3, size=64, image=""),
    "decompose": dict(alpha=0.002, size=64, image=""),
    "sandpile": dict(alpha=30.0, f=0.0, dt=0.1, steps=5),
    "transport": dict(eps=1e-6, d=0.5, width=0.15, floor=0.0),
}
DEMO_N = {"obstacle": 25, "cheeger": 25, "plate": 50, "viscoplastic": 16, "inpaint": 64, "decompose": 64,
          "sandpile": 24, "transport": 24}
DEMO_DIAGONAL = {"obstacle": "crossed", "cheeger": "crossed", "plate": "crossed", "viscoplastic": "crossed",
                 "inpaint": "right", "decompose": "right", "sandpile": "crossed", "transport": "crossed"}
CHEEGER_VARIANTS = ("cg1", "cg2", "dg0", "dg1", "dual-rt")
NORMS = ("l1", "l2", "linf")


@dataclass
class DemoConfig:
    demo: str
    n: int | None = None
    diagonal: str | None = None
    variant: str | None = None
    norm: str = "l2"
    params: dict = field(default_factory=dict)
    out: str = "results"
    tol: float = 1e-8
    export_program: bool = False
    seed: int = 0
    max_iter: int = 100

    def __post_init__(self):
        if self.demo not in DEFAULTS:
            raise InvalidConfigError(f"unknown demo {self.demo!r}; choose from {', '.join(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.demo])
        if unknown:
            raise InvalidConfigError(f"unknown parameter(s) for {self.demo}: {', '.join(sorted(unknown))}")
        merged = dict(DEFAULTS[self.demo])
        for k, v in self.params.items():
            ref = merged[k]
            try:
                merged[k] = type(ref)(v) if not isinstance(ref, str) else str(v)
            except (TypeError, ValueError):
                raise InvalidConfigError(f"parameter {k}={v!r} is not a {type(ref).__name__}") from None
        self.params = merged
        if self.demo in ("inpaint", "decompose"):
            # for the pixel demos the resolution is the synthetic image size
            if self.n is None:
                self.n = int(merged["size"])
            merged["size"] = self.n
        if self.n is None:
            self.n = DEMO_N[self.demo]
        if self.diagonal is None:
            self.diagonal = DEMO_DIAGONAL[self.demo]
        if self.diagonal not in ("left", "right", "crossed"):
            raise InvalidConfigError(f"unknown diagonal {self.diagonal!r}")
        if self.n < 1:
            raise InvalidConfigError("mesh resolution n must be positive")
        if self.norm not in NORMS:
            raise InvalidConfigError(f"unknown norm {self.norm!r}")
        if self.demo == "cheeger":
            self.variant = self.variant or "cg1"
            if self.variant not in CHEEGER_VARIANTS:
                raise InvalidConfigError(f"unknown cheeger variant {self.variant!r}")
        elif self.variant not in (None, "", "default"):
            raise InvalidConfigError(f"demo {self.demo} has no variants")
        if not self.tol > 0:
            raise InvalidConfigError("tolerance must be positive")
        self._check_physics()

    def _check_physics(self):
        p = self.params
        positive = {"plate": ["m"], "viscoplastic": ["mu"], "decompose": ["alpha"], "sandpile": ["dt"],
                    "transport": ["eps", "width"]}
        for k in positive.get(self.demo, []):
            if not p[k] > 0:
                raise InvalidConfigError(f"{k} must be positive")
        if self.demo == "viscoplastic" and p["tau0"] < 0:
            raise InvalidConfigError("tau0 must be nonnegative")
        if self.demo == "inpaint" and not 0 <= p["eta"] < 1:
            raise InvalidConfigError("corruption fraction eta must lie in [0, 1)")
        if self.demo == "sandpile" and not (0 < p["alpha"] < 90 and p["steps"] >= 1):
            raise InvalidConfigError("sandpile needs 0 < alpha < 90 degrees and at least one step")
        if self.demo == "transport" and not 0 < p["d"] < 1:
            raise InvalidConfigError("transport shift d must lie in (0, 1)")
        if self.demo in ("inpaint", "decompose") and p["size"] < 2:
            raise InvalidConfigError("image size must be at least 2")

    def settings(self, log=None) -> IpmSettings:
        # demo costs carry quadrature weights, so their natural units are kept
        return IpmSettings(feas_tol=self.tol, gap_tol=self.tol, max_iter=self.max_iter,
                           cost_norm=None, check_cost_norm=None, log=log)

    @property
    def variant_label(self) -> str:
        if self.demo == "cheeger":
            return f"{self.variant}-{self.norm}" if self.norm != "l2" else self.variant
        return self.variant or "default"


@dataclass
class DemoResult:
    status: str
    objective: float
    iterations: int
    gap: float
    mesh: object = None
    fields: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows) written as CSV
    images: dict = field(default_factory=dict)  # name -> RasterImage
    programs: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _result(sol, mesh, log, **kw) -> DemoResult:
    res = sol.result
    return DemoResult(sol.status, sol.objective, res.iterations, res.residuals["gap"], mesh, log=log,
                      programs=[sol.program], **kw)


def _mesh(cfg):
    return unit_square_mesh(cfg.n, cfg.diagonal)


# ----------------------------------------------------------------------------- obstacle
def obstacle_gap_function(g0=-0.1, a=0.01, k1=2.0, k2=8.0):
    def g(x):
        X, Y = x[:, 0], x[:, 1]
        return g0 + a * (np.sin(2 * np.pi * k1 * X) * np.cos(2 * np.pi * k1 * Y)
                         * np.sin(2 * np.pi * k2 * X) * np.cos(2 * np.pi * k2 * Y))
    return g


def build_obstacle(mesh, f=-5.0, g0=-0.1, a=0.01, k1=2.0, k2=8.0):
    """Membrane over an obstacle: min int 1/2 |grad u|^2 - f u, u >= g, u = 0 on the boundary."""
    V = function_space(mesh, "CG", 1)
    g = interpolate(V, obstacle_gap_function(g0, a, k1, k2), "obstacle")
    prob = BlockProblem("obstacle")
    u = prob.add_var(V, lx=g, bc=DirichletBC("all", 0.0), name="u")
    prob.add_obj_func(-f * value(u))
    prob.add_convex_term(ConvexTerm(make_quadratic(d=2), grad(u)))
    return prob, u, g


def run_obstacle(cfg: DemoConfig, log=None) -> DemoResult:
    mesh = _mesh(cfg)
    prob, u, g = build_obstacle(mesh, **cfg.params)
    sol = prob.optimize(cfg.settings(log))
    uh = sol[u]
    contact = (uh.values - g.values <= 1e-6).astype(float)
    out = _result(sol, mesh, [], fields={"u": uh, "obstacle": g, "contact": contact})
    out.metrics["contact_fraction"] = float(contact.mean())
    mid = np.linspace(0, 1, 101)
    out.tables["obstacle_midline"] = (["x", "u", "g"], [(x, float(uh([[x, 0.5]])[0]), float(g([[x, 0.5]])[0]))
                                                          for x in mid])
    return out


# ----------------------------------------------------------------------------- cheeger
def _norm_repr(norm, d=2):
    return {"l1": make_l1norm, "l2": make_l2norm, "linf": make_linfnorm}[norm](d)


def _dual_ball(norm, d=2):
    return {"l1": make_linfball, "l2": make_l2ball, "linf": make_l1ball}[norm](d)


def _norm_of_normals(mesh, facets, norm):
    n = mesh.facet_normals[facets]
    p = {"l1": 1, "l2": 2, "linf": np.inf}[norm]
    return np.linalg.norm(n, ord=p, axis=1)


CHEEGER_EXACT = 2 + math.sqrt(math.pi)


def build_cheeger(mesh, variant="cg1", norm="l2", f=1.0):
    """Discrete Cheeger problem on the unit square (f = 1 gives the Cheeger constant)."""
    real = function_space(mesh, "Real", 0)
    if variant == "dual-rt":
        prob = BlockProblem("cheeger-dual", sense="maximize")
        lam, sigma = prob.add_var([real, function_space(mesh, "RT", 1)], name=["lambda", "sigma"])
        prob.add_eq_constraint(function_space(mesh, "DG", 0), f * value(lam) - div(sigma), b=0.0, name="div")
        prob.add_obj_func([1.0, None])
        prob.add_convex_term(ConvexTerm(_dual_ball(norm), value(sigma), "cells", quadrature_rule("vertex", "cell")))
        return prob, sigma
    family, degree = {"cg1": ("CG", 1), "cg2": ("CG", 2), "dg0": ("DG", 0), "dg1": ("DG", 1)}[variant]
    V = function_space(mesh, family, degree)
    prob = BlockProblem("cheeger")
    if family == "CG":
        u = prob.add_var(V, bc=DirichletBC("all", 0.0), name="u")
    else:
        u = prob.add_var(V, name="u")
    prob.add_eq_constraint(real, f * value(u), b=1.0, name="normalization")
    if degree > 0:
        rule = quadrature_rule("vertex" if degree == 2 else "centroid", "cell")
        prob.add_convex_term(ConvexTerm(_norm_repr(norm), grad(u), "cells", rule))
    if family == "DG":
        frule = quadrature_rule("vertex", "facet")
        inner = mesh.interior_facets
        bnd = mesh.boundary_facets
        prob.add_convex_term(ConvexTerm(make_absvalue(), jump(u), "interior_facets", frule,
                                        scale=_norm_of_normals(mesh, inner, norm)))
        prob.add_convex_term(ConvexTerm(make_absvalue(), trace(u), "boundary", frule,
                                        scale=_norm_of_normals(mesh, bnd, norm)))
    return prob, u


def run_cheeger(cfg: DemoConfig, log=None) -> DemoResult:
    mesh = _mesh(cfg)
    prob, main = build_cheeger(mesh, cfg.variant, cfg.norm, cfg.params["f"])
    sol = prob.optimize(cfg.settings(log))
    fields = {main.name: sol[main]}
    if cfg.variant == "dual-rt":
        fields["u"] = sol.multipliers["div"]
    out = _result(sol, mesh, [], fields=fields)
    out.metrics["cheeger_estimate"] = sol.objective
    if cfg.norm == "l2":
        out.metrics["relative_error"] = abs(sol.objective - CHEEGER_EXACT) / CHEEGER_EXACT
    return out


# ----------------------------------------------------------------------------- plate
def build_plate(mesh, m=1.0, f=1.0):
    """Upper bound limit load of a simply supported plate under a uniform load."""
    V = function_space(mesh, "CG", 2)
    prob = BlockProblem("plate")
    u = prob.add_var(V, bc=DirichletBC("all", 0.0), name="u")
    prob.add_eq_constraint(function_space(mesh, "Real", 0), f * value(u), b=1.0, name="work")
    prob.add_convex_term(ConvexTerm(make_plate_dissipation(m), hessian(u), "cells",
                                    quadrature_rule("vertex", "cell")))
    prob.add_convex_term(ConvexTerm(make_l1norm(1, 2 * m / math.sqrt(3)), normal_grad_jump(u), "interior_facets",
                                    quadrature_rule("vertex", "facet")))
    return prob, u


def run_plate(cfg: DemoConfig, log=None) -> DemoResult:
    mesh = _mesh(cfg)
    prob, u = build_plate(mesh, **cfg.params)
    sol = prob.optimize(cfg.settings(log))
    out = _result(sol, mesh, [], fields={"u": sol[u]})
    out.metrics["load_factor"] = sol.objective
    return out


# ----------------------------------------------------------------------------- viscoplastic
def build_viscoplastic(mesh, mu=1.0, tau0=0.5):
    """Lid-driven cavity of a Bingham fluid as a minimum dissipation principle."""
    V = vector_space(mesh, "CG", 2)
    rule = quadrature_rule("gauss", "cell", 2)
    prob = BlockProblem("viscoplastic")
    bcs = [DirichletBC("top", (1.0, 0.0))] + [DirichletBC(r, (0.0, 0.0)) for r in ("left", "right", "bottom")]
    u = prob.add_var(V, bc=bcs, name="u")
    prob.add_eq_constraint(function_space(mesh, "CG", 1), div(u), b=0.0, quad=rule, name="incompressibility")
    visc = ConvexTerm(make_quadratic(d=3, k=2 * mu), sym_grad(u), "cells", rule)
    prob.add_convex_term(visc)
    plast = None
    if tau0 > 0:
        plast = ConvexTerm(make_l2norm(3, math.sqrt(2) * tau0), sym_grad(u), "cells", rule)
        prob.add_convex_term(plast)
    return prob, u, visc, plast


def stress_at_points(prob, sol, visc, plast):
    """Stress (strain-conjugate) at quadrature points, from the duals of the convex-term rows."""
    tau = _term_row_duals(prob, sol, visc, 1)
    if plast is not None:
        tau = tau + _term_row_duals(prob, sol, plast, 0)
    # the multipliers of ``C x - y = ...`` are minus the stress
    return -tau


def _term_row_duals(prob, sol, term, constraint):
    """Row duals of one constraint of an expanded term, per point and divided by the point weight."""
    lay = prob.term_layout(term)
    r = term.repr.constraints[constraint].nrows
    y = sol.result.y[lay.row_starts[constraint]:lay.row_starts[constraint] + lay.npoints * r]
    sign = -1.0 if prob.sense == "maximize" else 1.0
    return sign * y.reshape(lay.npoints, r) / lay.weights.reshape(-1, 1)


def run_viscoplastic(cfg: DemoConfig, log=None) -> DemoResult:
    mesh = _mesh(cfg)
    mu, tau0 = cfg.params["mu"], cfg.params["tau0"]
    prob, u, visc, plast = build_viscoplastic(mesh, mu, tau0)
    sol = prob.optimize(cfg.settings(log))
    uh = sol[u]
    rule = quadrature_rule("gauss", "cell", 2)
    tau = stress_at_points(prob, sol, visc, plast)
    tnorm = np.linalg.norm(tau, axis=1).reshape(mesh.num_cells, rule.num_points)
    strain = eval_points(sym_grad(uh), "cells", rule).const
    snorm = np.linalg.norm(strain, axis=2)
    threshold = math.sqrt(2) * tau0
    fields = {"u": uh, "stress_norm": tnorm.max(axis=1), "strain_norm": snorm.max(axis=1),
              "yielded": (tnorm.max(axis=1) >= threshold - 1e-6).astype(float)}
    out = _result(sol, mesh, [], fields=fields)
    ys = np.linspace(0, 1, 101)
    out.tables["viscoplastic_midline"] = (["y", "ux", "uy"], [(y, *map(float, uh([[0.5, y]])[0])) for y in ys])
    out.metrics.update(Bi=(1 / tau0 if tau0 > 0 else math.inf), yielded_fraction=float(fields["yielded"].mean()))
    return out


# ----------------------------------------------------------------------------- images
def synthetic_image(size=64, channels=3, seed=0) -> RasterImage:
    """Piecewise constant test picture: background, a disc and a bar."""
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, channels))
    base = np.array([40.0, 90.0, 160.0])[:channels]
    img[:] = base
    disc = (x - 0.35) ** 2 + (y - 0.4) ** 2 < 0.2 ** 2
    img[disc] = np.array([220.0, 60.0, 50.0])[:channels]
    bar = (np.abs(x - 0.7) < 0.08) & (y > 0.2) & (y < 0.85)
    img[bar] = np.array([240.0, 220.0, 80.0])[:channels]
    stripes = (y > 0.7) & (x < 0.5)
    img[stripes] += 25 * np.sign(np.sin(2 * np.pi * 8 * x[stripes]))[:, None]
    return RasterImage.from_array(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def _load_image(cfg, channels):
    path = cfg.params["image"]
    img = read_image(path) if path else synthetic_image(cfg.params["size"], channels, cfg.seed)
    if img.channels != channels and channels == 1:
        data = np.rint(img.data.astype(float).mean(axis=2, keepdims=True)).astype(np.uint8)
        img = RasterImage.from_array(data)
    return img


class PixelMesh:
    """Structured two-triangles-per-pixel mesh with the pixel of every cell and CR dof."""

    def __init__(self, width, height, diagonal="right"):
        if diagonal == "crossed":
            raise InvalidConfigError("image demos need a left or right diagonal")
        self.width, self.height = width, height
        h = 1.0 / max(width, height)
        self.mesh = rectangle_mesh(width, height, width * h, height * h, diagonal)
        cen = self.mesh.cell_centroids
        col = np.minimum((cen[:, 0] / h).astype(int), width - 1)
        row = height - 1 - np.minimum((cen[:, 1] / h).astype(int), height - 1)
        self.cell_pixel = row * width + col
        fc = self.mesh.facet_cells
        self.facet_pixels = np.where(fc >= 0, self.cell_pixel[np.maximum(fc, 0)], -1)
        # the diagonal of a pixel is the facet whose two cells share that pixel
        inner = (fc[:, 1] >= 0) & (self.facet_pixels[:, 0] == self.facet_pixels[:, 1])
        self.pixel_facet = np.empty(width * height, dtype=np.int64)
        self.pixel_facet[self.facet_pixels[inner, 0]] = np.flatnonzero(inner)

    def dof_values(self, pixels):
        """CR dof values: mean of the adjacent pixels."""
        p = self.facet_pixels
        a = pixels[p[:, 0]]
        b = np.where(p[:, 1] >= 0, pixels[np.maximum(p[:, 1], 0)], a)
        return (a + b) / 2

    def dof_mask(self, pixel_mask):
        """True on dofs whose every adjacent pixel is in ``pixel_mask``."""
        p = self.facet_pixels
        return pixel_mask[p[:, 0]] & np.where(p[:, 1] >= 0, pixel_mask[np.maximum(p[:, 1], 0)], True)

    def pixels_from_dofs(self, values):
        return values[self.pixel_facet]


def _to_image(channels_values, width, height):
    arr = np.stack(channels_values, axis=1).reshape(height, width, -1)
    return RasterImage.from_array(np.clip(np.rint(arr), 0, 255).astype(np.uint8))


def run_inpaint(cfg: DemoConfig, log=None) -> DemoResult:
    img = _load_image(cfg, 3)
    pm = PixelMesh(img.width, img.height, cfg.diagonal)
    rng = np.random.default_rng(cfg.seed)
    npx = img.width * img.height
    corrupted = rng.random(npx) < cfg.params["eta"]
    V = function_space(pm.mesh, "CR", 1)
    pinned = pm.dof_mask(~corrupted)
    prob = BlockProblem("inpaint")
    blocks = []
    for c in range(img.channels):
        pix = img.data[:, :, c].reshape(-1).astype(float)
        target = pm.dof_values(pix)
        lo = np.where(pinned, target, 0.0)
        hi = np.where(pinned, target, 255.0)
        u = prob.add_var(V, lx=lo, ux=hi, name=f"channel{c}")
        prob.add_convex_term(ConvexTerm(make_l2norm(2), grad(u)))
        blocks.append(u)
    sol = prob.optimize(cfg.settings(log))
    chans = [pm.pixels_from_dofs(sol[u].values) for u in blocks]
    restored = _to_image(chans, img.width, img.height)
    damaged = img.data.reshape(npx, -1).copy()
    damaged[corrupted] = 0
    out = _result(sol, pm.mesh, [], fields={f"u{c}": sol[u] for c, u in enumerate(blocks)})
    out.images = {"original": img, "corrupted": RasterImage.from_array(damaged.reshape(img.data.shape)),
                  "restored": restored}
    diff = restored.data.astype(float) - img.data.astype(float)
    out.metrics.update(corrupted_fraction=float(corrupted.mean()), rmse=float(np.sqrt(np.mean(diff ** 2))),
                       pinned_dofs=int(pinned.sum()))
    return out


def run_decompose(cfg: DemoConfig, log=None) -> DemoResult:
    img = _load_image(cfg, 1)
    pm = PixelMesh(img.width, img.height, cfg.diagonal)
    pix = img.data[:, :, 0].reshape(-1).astype(float) / 255.0
    V = function_space(pm.mesh, "CR", 1)
    y = DiscreteField(V, pm.dof_values(pix), "y")
    rule = quadrature_rule("gauss", "cell", 2)
    prob = BlockProblem("decompose")
    u, g = prob.add_var([V, function_space(pm.mesh, "RT", 1)], name=["u", "g"])
    prob.add_eq_constraint(V, value(u) + div(g) - value(y), b=0.0, quad=rule, name="decomposition")
    prob.add_convex_term(ConvexTerm(make_l2norm(2), grad(u)))
    prob.add_convex_term(ConvexTerm(make_l2ball(2, cfg.params["alpha"]), value(g), "cells",
                                    quadrature_rule("vertex", "cell")))
    sol = prob.optimize(cfg.settings(log))
    cart = pm.pixels_from_dofs(sol[u].values)
    texture = pix - cart
    out = _result(sol, pm.mesh, [], fields={"u": sol[u], "g": sol[g], "y": y})
    out.images = {"original": img, "cartoon": _to_image([255 * cart], img.width, img.height),
                  "texture": _to_image([255 * (0.5 + texture)], img.width, img.height)}
    out.metrics.update(texture_rms=float(np.sqrt(np.mean(texture ** 2))))
    return out


# ----------------------------------------------------------------------------- sandpile
def run_sandpile(cfg: DemoConfig, log=None) -> DemoResult:
    p = cfg.params
    mesh = _mesh(cfg)
    slope = math.tan(math.radians(p["alpha"]))
    V = function_space(mesh, "CG", 1)

    def pyramid(x):
        return 2 * slope * np.minimum.reduce([x[:, 0], 1 - x[:, 0], x[:, 1], 1 - x[:, 1]])
    h_prev = interpolate(V, pyramid, "h0")
    gfield = DiscreteField(V, p["dt"] * p["f"] + h_prev.values, "g")
    prob = BlockProblem("sandpile")
    h = prob.add_var(V, bc=DirichletBC("all", 0.0), name="h")
    fit = ConvexTerm(make_quadratic(d=1), value(h) - value(gfield), "cells", quadrature_rule("gauss", "cell", 2))
    prob.add_convex_term(fit)
    prob.add_convex_term(ConvexTerm(make_l2ball(2, slope), grad(h)))
    lumped = _mass_vector(V)
    rows = [(0, float(lumped @ h_prev.values), float(_max_slope(h_prev)), 0.0, "initial", 0)]
    status, objective, iters, gap = "optimal", 0.0, 0, 0.0
    sol = None
    for step in range(1, int(p["steps"]) + 1):
        gfield.values[:] = p["dt"] * p["f"] + h_prev.values
        prob.rebind_term(fit)
        sol = prob.optimize(cfg.settings(log))
        iters += sol.result.iterations
        objective = sol.objective
        gap = max(gap, sol.result.residuals["gap"])
        h_prev = DiscreteField(V, sol[h].values.copy(), "h")
        rows.append((step, float(lumped @ h_prev.values), float(_max_slope(h_prev)), float(sol.objective),
                     sol.status, sol.result.iterations))
        if sol.status != "optimal":
            status = sol.status
            break
    out = DemoResult(status, objective, iters, gap, mesh, fields={"h": h_prev, "h0": interpolate(V, pyramid)},
                     programs=[sol.program] if sol is not None else [])
    out.tables["sandpile_steps"] = (["step", "volume", "max_slope", "objective", "status", "iterations"], rows)
    out.metrics.update(tan_alpha=slope, final_volume=rows[-1][1], max_slope=max(r[2] for r in rows[1:]))
    return out


def _mass_vector(V):
    """``int phi_i`` for every basis function (exact for CG1 with the centroid rule)."""
    from .fem import assemble_linear_form
    tmp = BlockProblem("mass")
    h = tmp.add_var(V)
    vecs, _ = assemble_linear_form(value(h))
    return vecs[h]


def _max_slope(field_):
    mesh = field_.space.mesh
    g = field_.eval_cells("grad", np.arange(mesh.num_cells), np.full((1, 3), 1 / 3))[:, 0]
    return np.linalg.norm(g, axis=1).max()


# ----------------------------------------------------------------------------- transport
def transport_bump(center, width, floor=0.0):
    """Smooth compactly supported density of unit mass (plus an optional floor)."""
    def rho(x):
        s = np.clip(np.abs(np.asarray(x) - center) / width, 0, 1)
        return np.where(s < 1, np.cos(np.pi * s / 2) ** 4, 0.0) / (0.75 * width) + floor
    return rho


def build_transport(mesh, rho0, rho1, eps=1e-6):
    """Dynamic transport on (x, t) in the unit square with conservation relaxed to a band of width eps."""
    V = vector_space(mesh, "CG", 2)
    rule = quadrature_rule("gauss", "cell", 2)

    def bottom(x):
        return np.column_stack([rho0(x[:, 0]), np.zeros(len(x))])

    def top(x):
        return np.column_stack([rho1(x[:, 0]), np.zeros(len(x))])
    bcs = [DirichletBC("left", 0.0, 1), DirichletBC("right", 0.0, 1),
           DirichletBC("bottom", bottom, 0), DirichletBC("top", top, 0)]
    prob = BlockProblem("transport")
    u = prob.add_var(V, bc=bcs, name="rho_m")
    prob.add_convex_term(ConvexTerm(make_transport_cost(1), value(u), "cells", rule))
    residual = partial(u, 1)[0] + partial(u, 0)[1]
    prob.add_convex_term(ConvexTerm(make_pointwise_inequality(1, -eps, eps), residual, "cells", rule))
    return prob, u


def run_transport(cfg: DemoConfig, log=None) -> DemoResult:
    p = cfg.params
    mesh = _mesh(cfg)
    c0 = 0.5 - p["d"] / 2
    rho0 = transport_bump(c0, p["width"], p["floor"])
    rho1 = transport_bump(c0 + p["d"], p["width"], p["floor"])
    prob, u = build_transport(mesh, rho0, rho1, p["eps"])
    sol = prob.optimize(cfg.settings(log))
    uh = sol[u]
    levels = np.arange(cfg.n + 1) / cfg.n
    masses = _exact_line_masses(uh, cfg.n)
    out = _result(sol, mesh, [], fields={"rho_m": uh})
    total = masses[0]
    out.metrics.update(mass=float(total), mass_drift=float(np.max(np.abs(masses - total))),
                       analytic_cost=0.5 * p["d"] ** 2 * float(total))
    out.tables["transport_mass"] = (["t", "mass"], list(zip(levels.tolist(), masses.tolist())))
    return out


def _exact_line_masses(uh, n):
    """Exact ``int rho dx`` on the mesh lines ``t = j/n`` (rho is quadratic along each facet)."""
    mesh = uh.space.mesh
    fv = mesh.vertex_coords[mesh.facets]
    horiz = np.abs(fv[:, 0, 1] - fv[:, 1, 1]) < 1e-12
    out = np.zeros(n + 1)
    t = np.array([0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
    for f in np.flatnonzero(horiz):
        a, b = fv[f]
        pts = a[None] + t[:, None] * (b - a)[None]
        vals = uh(pts)[:, 0]
        j = int(round(a[1] * n))
        out[j] += 0.5 * np.sum(vals) * abs(b[0] - a[0])
    return out


RUNNERS = {"obstacle": run_obstacle, "cheeger": run_cheeger, "plate": run_plate, "viscoplastic": run_viscoplastic,
           "inpaint": run_inpaint, "decompose": run_decompose, "sandpile": run_sandpile, "transport": run_transport}
