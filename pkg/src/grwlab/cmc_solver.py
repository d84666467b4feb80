"""Newton-Krylov solver for the prescribed mean curvature equation H(u) = c.

Unknowns live on the fiber grid. Two modes are offered:

``fixed-c``
    Newton on u alone. On a closed fiber the equation is obstructed for
    generic c, so failure to converge can be a legitimate answer.
``slice-anchored``
    Newton on the pair (u, c) with the extra equation mean(u) = anchor_t.
    This removes the kernel of constants that appears when (log f)'' = 0.

Every accepted iterate satisfies max |Du| / f(u) <= lambda_cap.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, splu
from scipy.special import sph_harm_y

from .errors import ConstraintBreach, PreconditionError, SpacelikeViolation
from .fiber import FiberGrid
from .graph_geometry import GeometryFields, GraphFunction, geometry
from .fiber_coloring import jacobian_coloring
from .warping import WarpingFunction

MODES = ("fixed-c", "slice-anchored")
STATUSES = ("converged", "max-iters", "constraint-breach", "diverged")
PRECONDITIONERS = ("compact-lu", "diagonal")
QUADRATIC_REGIME = 1e-3


@dataclass(frozen=True)
class LineSearch:
    shrink: float = 0.5
    min_step: float = 2.0 ** -12
    armijo: float = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    lambda_cap: float = 0.9
    residual_tol: float | None = None  # None: 1e-10 * max(1, |c|)
    max_newton_iters: int = 50
    max_linear_iters: int = 200
    damping: LineSearch = field(default_factory=LineSearch)
    mode: str = "fixed-c"
    flow_pretol: float = 1e-3
    flow_max_iters: int = 100
    seed: int = 0
    anchor_t: float | None = None  # None: mean of the initial guess
    divergence_window: int = 5
    preconditioner: str = "compact-lu"  # or "diagonal"

    def __post_init__(self):
        if not 0.0 < self.lambda_cap < 1.0:
            raise ValueError(f"lambda_cap must lie in (0, 1), got {self.lambda_cap}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.max_newton_iters < 0 or self.max_linear_iters < 1 or self.flow_max_iters < 0:
            raise ValueError("iteration limits must be non-negative (linear: positive)")

    def tolerance(self, c: float) -> float:
        return self.residual_tol if self.residual_tol is not None else 1e-10 * max(1.0, abs(c))

    def as_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    u: GraphFunction
    c: float
    residual_norm: float
    iterations: int
    constraint_margin: float
    sup_cosh_phi: float
    umbilicity_defect: float
    slice_distance: float
    history: list
    status: str
    mode: str = "fixed-c"
    flow_iterations: int = 0
    certificate: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary(self) -> dict:
        return {"status": self.status, "mode": self.mode, "c": self.c,
                "residual_norm": self.residual_norm, "iterations": self.iterations,
                "flow_iterations": self.flow_iterations,
                "constraint_margin": self.constraint_margin, "sup_cosh_phi": self.sup_cosh_phi,
                "umbilicity_defect": self.umbilicity_defect,
                "slice_distance": self.slice_distance, "certificate": self.certificate}


# -- residual ----------------------------------------------------------------

def _fields(f, grid, values) -> GeometryFields:
    return GeometryFields(f, GraphFunction(grid, values))


def residual(f: WarpingFunction, u: GraphFunction, c: float):
    """Pointwise H(u) - c."""
    geo = geometry(f, u)
    geo.require_spacelike()
    return geo.H - c


def _margin(f, grid, values) -> float:
    try:
        return _fields(f, grid, values).margin
    except Exception:
        return math.inf


def _H(f, grid, values):
    geo = _fields(f, grid, values)
    if not geo.margin < 1.0:
        raise SpacelikeViolation("iterate left the spacelike class", geo.worst_node, geo.margin)
    return geo.H


def slice_distance(grid: FiberGrid, values) -> float:
    """max |u - mean(u)| with the fiber-weighted mean."""
    return float(np.max(np.abs(values - grid.mean(values))))


# -- problem wrapper ----------------------------------------------------------

class _Problem:
    """Residual map on the flat unknown vector (u, or (u, c) when anchored)."""

    def __init__(self, f, grid, c, anchored, anchor_t):
        self.f, self.grid = f, grid
        self.c0 = float(c)
        self.anchored = anchored
        self.anchor_t = anchor_t
        self.N = int(np.prod(grid.shape))
        self.wnorm = grid.weights.ravel() / grid.area

    def split(self, x):
        u = x[: self.N].reshape(self.grid.shape)
        c = x[self.N] if self.anchored else self.c0
        return u, float(c)

    def pack(self, u, c):
        flat = u.ravel()
        return np.concatenate([flat, [c]]) if self.anchored else flat.copy()

    def F(self, x):
        u, c = self.split(x)
        r = (_H(self.f, self.grid, u) - c).ravel()
        if self.anchored:
            r = np.concatenate([r, [self.wnorm @ u.ravel() - self.anchor_t]])
        return r

    def margin(self, x):
        return _margin(self.f, self.grid, self.split(x)[0])

    def jacobian(self, x, Fx):
        u, c = self.split(x)
        Hx = Fx[: self.N] + c
        unorm = float(np.linalg.norm(u.ravel()))
        N = self.N

        def matvec(v):
            v = np.asarray(v).ravel()
            vu = v[:N]
            vn = float(np.linalg.norm(vu))
            if vn == 0.0:
                Ju = np.zeros(N)
            else:
                eps = math.sqrt(np.finfo(float).eps) * (1.0 + unorm) / vn
                Hp = _H(self.f, self.grid, u + eps * vu.reshape(u.shape)).ravel()
                Ju = (Hp - Hx) / eps
            if not self.anchored:
                return Ju
            return np.concatenate([Ju - v[N], [self.wnorm @ vu]])

        size = N + 1 if self.anchored else N
        return LinearOperator((size, size), matvec=matvec, dtype=float)

    def compact_operator(self, x):
        """Frozen-coefficient linearization of H on compact stencils.

        L v = (1/sqrt g) d_i(sqrt g a^ij d_j v) + ((log f)'' at u) v with
        a^ij = (g^ij + Du^i Du^j / W^2) / (n f W). It shares the compact
        principal stencil of H, so its LU factorization is a close
        preconditioner for the matrix-free Jacobian.
        """
        u, _ = self.split(x)
        grid = self.grid
        geo = _fields(self.f, grid, u)
        Du, W = geo.Du, geo.W
        a = (grid.inv_metric + Du[:, None] * Du[None, :] / (W * W)) / (geo.n * geo.fu * W)
        b = geo.ddfu / geo.fu - (geo.dfu / geo.fu) ** 2
        if grid.topology == "sphere":
            th = grid.coords[0][:, None]
            ht = grid.spacing[0]
            s_node = np.sin(th) * np.ones(grid.shape)
            s_plus, s_minus = np.sin(th + ht / 2), np.sin(th - ht / 2)
        else:
            s_node = s_plus = s_minus = 1.0

        def apply(v):
            out = b * v
            for k in range(2):
                vp, vm = grid._neighbors(v, k)
                ap, am = grid._neighbors(a[k, k], k)
                sp, sm = (s_plus, s_minus) if k == 0 else (s_node, s_node)
                cp = sp * 0.5 * (a[k, k] + ap)
                cm = sm * 0.5 * (a[k, k] + am)
                out = out + (cp * (vp - v) - cm * (v - vm)) / (grid.spacing[k] ** 2 * s_node)
            return out + 2.0 * a[0, 1] * grid.partial(grid.partial(v, 1), 0)

        col = jacobian_coloring(grid)
        probes = np.stack([apply((col.colors == k).reshape(grid.shape).astype(float)).ravel()
                           for k in range(col.n_colors)])
        vals = probes[col.colors[col.cols], col.rows]
        return sparse.csc_matrix((vals, (col.rows, col.cols)), shape=(self.N, self.N))

    def lu_preconditioner(self, x):
        """Approximate inverse of the (bordered) Jacobian from an LU of the compact operator.

        The operator is shifted by a tiny multiple of the identity so that a
        constant kernel (when (log f)'' = 0) does not break the factorization;
        in anchored mode the border (c column, mean row) is eliminated by a
        Schur complement instead of being factored, which would fill in.
        """
        L = self.compact_operator(x)
        diag = np.abs(L.diagonal())
        shift = 1e-8 * float(diag.max())
        lu = splu((L - shift * sparse.identity(self.N, format="csc")).tocsc())
        N = self.N
        if not self.anchored:
            return LinearOperator((N, N), matvec=lambda v: lu.solve(np.ravel(v)), dtype=float)
        z1 = lu.solve(np.ones(N))
        wz1 = float(self.wnorm @ z1)

        def matvec(v):
            v = np.ravel(v)
            z = lu.solve(v[:N])
            y = (v[N] - self.wnorm @ z) / wz1
            return np.concatenate([z + y * z1, [y]])

        return LinearOperator((N + 1, N + 1), matvec=matvec, dtype=float)

    def preconditioner(self, x):
        """Inverse of the diagonal of the linearized operator (frozen coefficients)."""
        u, _ = self.split(x)
        geo = _fields(self.f, self.grid, u)
        a = 1.0 / (geo.n * geo.fu * geo.W)
        g = self.grid.inv_metric
        lap_diag = -sum(2.0 * g[k, k] / self.grid.spacing[k] ** 2 for k in range(2))
        loglpp = geo.ddfu / geo.fu - (geo.dfu / geo.fu) ** 2
        d = (a * lap_diag + loglpp).ravel()
        d = np.where(np.abs(d) < 1e-12, -1.0, d)
        if self.anchored:
            d = np.concatenate([d, [-1.0]])
        inv = 1.0 / d
        return LinearOperator((inv.size, inv.size), matvec=lambda v: inv * np.ravel(v), dtype=float)


# -- relaxation ----------------------------------------------------------------

def flow_step_limit(geo: GeometryFields) -> float:
    """Explicit-stability bound for u_s = H(u) - c.

    The principal coefficients of H are bounded by g^kk cosh^2(phi) / (n f W);
    on the compact three-point stencil the symbol is at most 4 a^kk / h_k^2.
    """
    g = geo.grid.inv_metric
    spread = sum(4.0 * g[k, k] / geo.grid.spacing[k] ** 2 for k in range(2))
    a = geo.cosh_phi ** 2 / (geo.n * geo.fu * geo.W)
    return float(1.0 / np.max(a * spread))


def relax_flow(f: WarpingFunction, u0: GraphFunction, c: float, cfg: SolverConfig | None = None,
               anchor_t: float | None = None):
    """Pseudo-time relaxation used to bring a guess near the solution.

    The fluctuation u - mean(u) follows the parabolic flow u_s = H - mean(H).
    The mean level is pinned at ``anchor_t`` in slice-anchored mode. In
    fixed-c mode it moves by a damped scalar Newton step (c - mean H) / (log f)''
    evaluated at the mean, which sends a slice with H < c upward when f'/f
    increases. Returns ``(graph, iterations, residual_history)``.
    """
    cfg = cfg or SolverConfig()
    grid = u0.grid
    u = np.array(u0.values)
    anchored = cfg.mode == "slice-anchored"
    if anchored:
        t_anchor = grid.mean(u) if anchor_t is None else float(anchor_t)
        shift = t_anchor - grid.mean(u)
        if abs(shift) > 1e-14 * (1.0 + abs(t_anchor)):  # leave round-off alone
            u += shift
    geo = _fields(f, grid, u)
    if geo.margin > cfg.lambda_cap:
        raise ConstraintBreach(f"initial margin {geo.margin:.4g} exceeds lambda_cap {cfg.lambda_cap}")
    H = geo.H

    def res_norm(H):
        return float(np.max(np.abs(H - (grid.mean(H) if anchored else c))))

    r = res_norm(H)
    history = [r]
    it = 0
    stall = 0
    while it < cfg.flow_max_iters and r >= cfg.flow_pretol:
        ds = 0.9 * flow_step_limit(geo)
        Hbar = grid.mean(H)
        step = ds * (H - Hbar)
        if not anchored:
            m = grid.mean(u)
            _, dfm, ddfm = f.derivatives(m)
            fm = f(m)
            lpp = ddfm / fm - (dfm / fm) ** 2
            if abs(lpp) > 1e-8:
                shift = (c - Hbar) / lpp
                step = step + float(np.clip(shift, -0.1, 0.1))
        accepted = False
        for _ in range(8):
            trial = u + step
            tg = _fields(f, grid, trial)
            if tg.margin <= cfg.lambda_cap:
                Ht = tg.H
                rt = res_norm(Ht)
                if rt <= r * (1 + 1e-12):
                    accepted = True
                    break
            step = 0.5 * step
        it += 1
        if not accepted:
            if tg.margin > cfg.lambda_cap:
                raise ConstraintBreach("relaxation step cannot keep the gradient constraint")
            break
        stall = stall + 1 if rt > 0.999 * r else 0
        u, geo, H, r = trial, tg, Ht, rt
        history.append(r)
        if stall >= 20:
            break
    return GraphFunction(grid, u), it, history


# -- Newton ------------------------------------------------------------------

def quadratic_certificate(residuals, tol) -> dict:
    """C = max r_{k+1} / r_k^2 over consecutive pairs with r_k < 1e-3.

    Pairs where r_{k+1} is already at the tolerance floor are kept: they
    only make C smaller. ``vacuous`` marks runs with no such pair.
    """
    pairs = [(a, b) for a, b in zip(residuals[:-1], residuals[1:]) if 0 < a < QUADRATIC_REGIME]
    if not pairs:
        return {"constant": None, "pairs": 0, "vacuous": True}
    ratios = [b / (a * a) for a, b in pairs]
    return {"constant": float(max(ratios)), "pairs": len(pairs), "vacuous": False,
            "last_three": [float(r) for r in residuals[-3:]]}


def solve_newton(f: WarpingFunction, u0: GraphFunction, c: float,
                 cfg: SolverConfig | None = None) -> SolveResult:
    """Damped Newton-Krylov solve of H(u) = c (see module docstring for modes)."""
    cfg = cfg or SolverConfig()
    grid = u0.grid
    anchored = cfg.mode == "slice-anchored"
    geo0 = geometry(f, u0)
    if geo0.margin > cfg.lambda_cap:
        raise PreconditionError(
            f"initial margin {geo0.margin:.6g} exceeds lambda_cap {cfg.lambda_cap}")
    anchor_t = grid.mean(u0.values) if cfg.anchor_t is None else float(cfg.anchor_t)

    flow_iters = 0
    start = u0
    if cfg.flow_max_iters > 0:
        c_guess = grid.mean(geo0.H) if anchored else c
        r0 = float(np.max(np.abs(geo0.H - c_guess)))
        if r0 >= cfg.flow_pretol:
            start, flow_iters, _ = relax_flow(f, u0, c, cfg, anchor_t if anchored else None)

    c_init = grid.mean(geometry(f, start).H) if anchored else c
    prob = _Problem(f, grid, c_init if anchored else c, anchored, anchor_t)
    x = prob.pack(np.array(start.values), c_init)
    Fx = prob.F(x)
    rn = float(np.max(np.abs(Fx)))
    margin = prob.margin(x)
    history = [{"iteration": 0, "residual": rn, "margin": margin, "step": 0.0,
                "linear_iters": 0, "c": prob.split(x)[1]}]
    ls = cfg.damping
    status = "max-iters"
    growth = 0
    k = 0
    while True:
        tol = cfg.tolerance(prob.split(x)[1])
        if rn <= tol:
            status = "converged"
            break
        if k >= cfg.max_newton_iters:
            break
        k += 1
        J = prob.jacobian(x, Fx)
        if cfg.preconditioner == "compact-lu":
            M = prob.lu_preconditioner(x)
        else:
            M = prob.preconditioner(x)
        lin = {"n": 0}

        def count(_):
            lin["n"] += 1

        eta = min(0.1, max(rn, 0.1 * cfg.tolerance(prob.split(x)[1]) / rn))
        d, _ = gmres(J, -Fx, rtol=eta, atol=0.0, restart=cfg.max_linear_iters,
                     maxiter=1, M=M, callback=count,
                     callback_type="pr_norm")
        step = 1.0
        best = None
        breached = False
        while step >= ls.min_step:
            trial = x + step * d
            tm = prob.margin(trial)
            if tm > cfg.lambda_cap:
                breached = True
                step *= ls.shrink
                continue
            Ft = prob.F(trial)
            rt = float(np.max(np.abs(Ft)))
            if best is None or rt < best[2]:
                best = (trial, Ft, rt, tm, step)
            if rt <= (1.0 - ls.armijo * step) * rn:
                break
            step *= ls.shrink
        if best is None:
            status = "constraint-breach" if breached else "diverged"
            break
        x, Fx, r_new, margin, step = best
        growth = growth + 1 if r_new > rn else 0
        rn = r_new
        history.append({"iteration": k, "residual": rn, "margin": margin, "step": step,
                        "linear_iters": lin["n"], "c": prob.split(x)[1]})
        if growth >= cfg.divergence_window:
            status = "diverged"
            break

    u, c_final = prob.split(x)
    graph = GraphFunction(grid, u)
    geo = geometry(f, graph)
    achieved = c_final if anchored else float(grid.mean(geo.H))
    cert = quadratic_certificate([h["residual"] for h in history], cfg.tolerance(c_final))
    return SolveResult(
        u=graph, c=float(achieved), residual_norm=rn, iterations=k,
        constraint_margin=geo.margin, sup_cosh_phi=float(geo.cosh_phi.max()),
        umbilicity_defect=geo.umbilicity_defect(), slice_distance=slice_distance(grid, u),
        history=history, status=status, mode=cfg.mode, flow_iterations=flow_iters,
        certificate=cert)


# -- perturbations -------------------------------------------------------------

def band_limited_field(grid: FiberGrid, seed: int, modes: int = 4, l_min: int = 1,
                       even_only: bool = False):
    """Smooth random field with max |value| = 1.

    Torus: Fourier modes with |k_x|, |k_y| <= ``modes`` (not both zero).
    Sphere: real spherical harmonics of degree l_min..modes; ``even_only``
    keeps even degrees, which are invariant under the antipodal map.
    Coefficients are standard normal divided by (1 + |k|^2).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = np.zeros(grid.shape)
    if grid.topology == "torus":
        x, y = grid.mesh()
        lx, ly = grid.size["length"]
        for kx in range(0, modes + 1):
            for ky in range(-modes, modes + 1):
                if kx == 0 and ky <= 0:
                    continue
                a, b = rng.standard_normal(2) / (1.0 + kx * kx + ky * ky)
                arg = 2 * np.pi * (kx * x / lx + ky * y / ly)
                out += a * np.cos(arg) + b * np.sin(arg)
    else:
        th, ph = grid.mesh()
        for l in range(max(1, l_min), modes + 1):
            if even_only and l % 2:
                continue
            for m in range(0, l + 1):
                Y = sph_harm_y(l, m, th, ph)
                a, b = rng.standard_normal(2) / (1.0 + l * (l + 1))
                out += a * Y.real + (b * Y.imag if m else 0.0)
    return out / np.max(np.abs(out))


def perturbed_slice(f: WarpingFunction, grid: FiberGrid, t0: float, seed: int,
                    target_margin: float = 0.45, modes: int = 4, l_min: int = 1,
                    even_only: bool = False, amplitude: float | None = None) -> GraphFunction:
    """t0 + A * (band-limited field), with A chosen so the margin equals ``target_margin``."""
    p = band_limited_field(grid, seed, modes, l_min, even_only)
    if amplitude is None:
        def gap(A):
            return _margin(f, grid, t0 + A * p) - target_margin

        hi = 1e-3
        while gap(hi) < 0:
            hi *= 2.0
            if hi > 1e3:
                raise PreconditionError("could not reach the target margin")
        amplitude = brentq(gap, 0.0, hi, xtol=1e-12) * (1 - 1e-9)
    return GraphFunction(grid, t0 + amplitude * p)


def slice_curvature(f: WarpingFunction, t0: float) -> float:
    """Mean curvature f'(t0) / f(t0) of the slice t = t0."""
    _, df, _ = f.derivatives(t0)
    return float(df / f(t0))


def with_mode(cfg: SolverConfig, mode: str, **kw) -> SolverConfig:
    return replace(cfg, mode=mode, **kw)
