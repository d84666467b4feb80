"""Ambient curvature of I x_f F and the energy conditions built on it.

The fiber is homogeneous, so Ric^F(X, Y) = ricci_const * g_F(X, Y) and the
direction loops in the null/timelike conditions collapse to constants; the
functions still take explicit vectors so the contract stays general.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasePointError, DomainError
from .fiber import FiberGrid
from .warping import WarpingFunction, einstein_residuals

DEFAULT_T_SAMPLES = 512
# Slack for floating-point cancellation in f f'' - f'^2 when classifying NCC.
VERDICT_TOL = 1e-12


@dataclass(frozen=True)
class Spacetime:
    warping: WarpingFunction
    fiber: FiberGrid
    n: int | None = None

    def __post_init__(self):
        n = self.fiber.dim if self.n is None else int(self.n)
        if n != self.fiber.dim:
            raise ValueError(f"n = {n} must equal the fiber dimension {self.fiber.dim}")
        object.__setattr__(self, "n", n)

    def default_range(self, half_width: float = 2.0):
        f = self.warping
        return f.domain.window(f.ref_point, half_width)


@dataclass(frozen=True)
class AmbientVector:
    """X = t_component d_t + fiber_component, based at (t, fiber node)."""

    t_component: float
    fiber_component: tuple
    base_point: tuple  # (t, (i, j))

    @property
    def t(self) -> float:
        return float(self.base_point[0])

    @property
    def node(self) -> tuple:
        return tuple(self.base_point[1])


def _common_base(st: Spacetime, X: AmbientVector, Y: AmbientVector):
    if X.t != Y.t or X.node != Y.node:
        raise BasePointError(f"base points differ: {X.base_point} vs {Y.base_point}")
    if not st.warping.domain.contains(X.t):
        raise DomainError(f"base time {X.t} outside warping domain")
    return X.t, st.fiber.metric[(slice(None), slice(None)) + X.node]


def _as_arrays(X: AmbientVector):
    return float(X.t_component), np.asarray(X.fiber_component, dtype=float)


# -- vectorized kernels ------------------------------------------------------
# gF: (2, 2, ...) fiber metric; Xt: (...); XF: (2, ...)

def _gF(gF, XF, YF):
    return np.einsum("i...,ij...,j...->...", XF, gF, YF)


def ambient_metric_values(st, t, gF, Xt, XF, Yt, YF):
    f = st.warping(t)
    return -Xt * Yt + f * f * _gF(gF, XF, YF)


def ricci_values(st, t, gF, Xt, XF, Yt, YF):
    """Ric^F(X^F, Y^F) + (f''/f + (n-1) f'^2/f^2) g(X^F, Y^F) - n (f''/f) g(X, d_t) g(Y, d_t)."""
    n = st.n
    f, df, ddf = st.warping.derivatives(t)
    gf = _gF(gF, XF, YF)
    bar_gF = f * f * gf
    return (st.fiber.ricci_const * gf + (ddf / f + (n - 1) * df * df / (f * f)) * bar_gF
            - n * (ddf / f) * Xt * Yt)


def scalar_values(st, t):
    n = st.n
    f, df, ddf = st.warping.derivatives(t)
    return st.fiber.scalar_const / (f * f) + 2 * n * ddf / f + n * (n - 1) * df * df / (f * f)


# -- public operations -------------------------------------------------------

def metric_ambient(st: Spacetime, X: AmbientVector, Y: AmbientVector) -> float:
    t, gF = _common_base(st, X, Y)
    Xt, XF = _as_arrays(X)
    Yt, YF = _as_arrays(Y)
    return float(ambient_metric_values(st, t, gF, Xt, XF, Yt, YF))


def ricci_ambient(st: Spacetime, X: AmbientVector, Y: AmbientVector) -> float:
    t, gF = _common_base(st, X, Y)
    Xt, XF = _as_arrays(X)
    Yt, YF = _as_arrays(Y)
    return float(ricci_values(st, t, gF, Xt, XF, Yt, YF))


def scalar_ambient(st: Spacetime, t):
    """S^F/f^2 + 2n f''/f + n(n-1) f'^2/f^2."""
    out = scalar_values(st, np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _t_grid(st, t_range, samples):
    a, b = st.default_range() if t_range is None else t_range
    ts = np.linspace(a, b, samples)
    st.warping.derivatives(ts)
    return ts


@dataclass(frozen=True)
class NCCReport:
    margin: float
    argmin_t: float
    verdict: bool
    strict_verdict: bool
    strict: bool = False

    @property
    def holds(self) -> bool:
        return self.strict_verdict if self.strict else self.verdict

    def as_dict(self):
        return {"margin": self.margin, "argmin_t": self.argmin_t,
                "verdict": self.verdict, "strict_verdict": self.strict_verdict}


def ncc_profile(st: Spacetime, t):
    """Ric^F - (n-1) f^2 (log f)'' at each t."""
    return st.fiber.ricci_const - (st.n - 1) * st.warping.f2_log_second(t)


def ncc_margin(st: Spacetime, t_range=None, strict: bool = False,
               samples: int = DEFAULT_T_SAMPLES) -> NCCReport:
    """Minimum over sampled t of Ric^F - (n-1) f^2 (log f)''."""
    ts = _t_grid(st, t_range, samples)
    prof = ncc_profile(st, ts)
    k = int(np.argmin(prof))
    m = float(prof[k])
    return NCCReport(m, float(ts[k]), m >= -VERDICT_TOL, m > VERDICT_TOL, strict)


@dataclass(frozen=True)
class TCCReport:
    holds: bool
    max_fpp: float
    argmax_t: float

    def as_dict(self):
        return {"verdict": self.holds, "max_fpp": self.max_fpp, "argmax_t": self.argmax_t}


def tcc_hint(st: Spacetime, t_range=None, samples: int = DEFAULT_T_SAMPLES) -> TCCReport:
    """Necessary condition f'' <= 0 for the timelike convergence condition."""
    ts = _t_grid(st, t_range, samples)
    fpp = st.warping.derivatives(ts)[2]
    k = int(np.argmax(fpp))
    return TCCReport(bool(fpp[k] <= VERDICT_TOL), float(fpp[k]), float(ts[k]))


def random_unit_fiber(st: Spacetime, nodes, rng):
    """Fiber vectors with g_F(e, e) = 1, direction uniform on the metric circle."""
    gF = st.fiber.metric[(slice(None), slice(None)) + tuple(nodes)]
    ang = rng.uniform(0.0, 2 * np.pi, size=len(nodes[0]))
    v = np.stack([np.cos(ang), np.sin(ang)])
    L = np.linalg.cholesky(np.moveaxis(gF, (0, 1), (-2, -1)))
    e = np.linalg.solve(np.swapaxes(L, -1, -2), np.moveaxis(v, 0, -1)[..., None])[..., 0]
    return np.moveaxis(e, -1, 0), gF


def _random_base(st, t_range, samples, rng):
    a, b = st.default_range() if t_range is None else t_range
    ts = rng.uniform(a, b, size=samples)
    nodes = tuple(rng.integers(0, s, size=samples) for s in st.fiber.shape)
    return ts, nodes


def null_ricci_min(st: Spacetime, t_range=None, samples: int = 1000, seed: int = 0):
    """min Ric(X, X) over random null X = d_t + e / f(t); returns (min, t at min)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ts, nodes = _random_base(st, t_range, samples, rng)
    e, gF = random_unit_fiber(st, nodes, rng)
    f = st.warping(ts)
    Xt = np.ones(samples)
    XF = e / f
    ric = ricci_values(st, ts, gF, Xt, XF, Xt, XF)
    k = int(np.argmin(ric))
    return float(ric[k]), float(ts[k])


@dataclass(frozen=True)
class WECReport:
    margin: float
    argmin_t: float
    agreement: float
    sufficient: bool
    sufficient_value: float

    def as_dict(self):
        return {"margin": self.margin, "argmin_t": self.argmin_t, "verdict": self.margin >= -1e-9,
                "agreement": self.agreement, "sufficient_condition": self.sufficient,
                "sufficient_value": self.sufficient_value}


def einstein_tensor_direct(st, t, gF, Zt, ZF):
    """G(Z, Z) from the closed form in terms of fiber data."""
    n = st.n
    f, df, _ = st.warping.derivatives(t)
    f2logpp = st.warping.f2_log_second(t)
    gzz = ambient_metric_values(st, t, gF, Zt, ZF, Zt, ZF)
    gf = _gF(gF, ZF, ZF)
    return (st.fiber.ricci_const * gf - (n - 1) * f2logpp * gf
            - st.fiber.scalar_const / (2 * f * f) * gzz
            - 0.5 * n * (n - 1) * df * df / (f * f) * gzz)


def einstein_tensor_assembled(st, t, gF, Zt, ZF):
    """G(Z, Z) = Ric(Z, Z) - S g(Z, Z) / 2 from the Ricci and scalar kernels."""
    gzz = ambient_metric_values(st, t, gF, Zt, ZF, Zt, ZF)
    return ricci_values(st, t, gF, Zt, ZF, Zt, ZF) - 0.5 * scalar_values(st, t) * gzz


def wec_margin(st: Spacetime, t_range=None, samples: int = 1000, seed: int = 0,
               max_rapidity: float = 3.0) -> WECReport:
    """Minimum of G(Z, Z) over random unit timelike Z across ``t_range``."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ts, nodes = _random_base(st, t_range, samples, rng)
    e, gF = random_unit_fiber(st, nodes, rng)
    beta = rng.uniform(0.0, max_rapidity, size=samples)
    f = st.warping(ts)
    Zt = np.cosh(beta)
    ZF = np.sinh(beta) * e / f
    direct = einstein_tensor_direct(st, ts, gF, Zt, ZF)
    assembled = einstein_tensor_assembled(st, ts, gF, Zt, ZF)
    k = int(np.argmin(direct))
    tg = _t_grid(st, t_range, DEFAULT_T_SAMPLES)
    inf_df2 = float(np.min(st.warping.derivatives(tg)[1] ** 2))
    suff = st.fiber.scalar_const + st.n * (st.n - 1) * inf_df2
    return WECReport(float(direct[k]), float(ts[k]),
                     float(np.max(np.abs(direct - assembled))), suff >= 0, suff)


def einstein_check(st: Spacetime, t_range=None, samples: int = 100):
    """Einstein residuals with c = Ric^F and c_bar inferred as n f''/f at the reference point.

    Returns (c_bar, r1, r2).
    """
    f = st.warping
    _, _, ddf = f.derivatives(f.ref_point)
    c_bar = float(st.n * ddf / f(f.ref_point))
    ts = _t_grid(st, t_range, samples)
    r1, r2 = einstein_residuals(f, st.n, c_bar, st.fiber.ricci_const, ts)
    return c_bar, r1, r2
