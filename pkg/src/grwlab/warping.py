"""Warping functions f > 0 on an open interval, their antiderivative G, and
the six Einstein families.

Every closed-form family carries exact first and second derivatives, so
``(log f)'' = (f f'' - f'^2) / f^2`` is available without differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    ConstraintError,
    DomainError,
    IntegrationError,
    InvalidFamilyError,
    InvalidWarpingError,
)

FAMILIES = (
    "constant",
    "exponential",
    "cosh-type",
    "affine",
    "trigonometric",
    "custom-analytic",
)

# Einstein row constraints are checked to this relative tolerance.
CONSTRAINT_RTOL = 1e-12
# Tolerances for adaptive quadrature of G in the custom family.
QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10

_POSITIVITY_SAMPLES = 2001
_CHECK_HALF_WIDTH = 20.0


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); either end may be infinite."""

    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise ValueError(f"interval needs lo < hi, got ({self.lo}, {self.hi})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        return (t > self.lo) & (t < self.hi)

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def window(self, center: float, half_width: float, inset: float = 1e-2):
        """A closed sub-interval [a, b] strictly inside, around ``center``.

        Finite ends are pulled in by ``inset`` times the window length.
        """
        a = max(self.lo, center - half_width)
        b = min(self.hi, center + half_width)
        pad = inset * (b - a)
        if a == self.lo:
            a += pad
        if b == self.hi:
            b -= pad
        return a, b

    def sample(self, count: int, center: float = 0.0, half_width: float = 2.0):
        a, b = self.window(center, half_width)
        return np.linspace(a, b, count)


@dataclass(frozen=True)
class EinsteinFamily:
    """One row of the Einstein classification, with the parameters it was built from.

    ``pinned`` lists the indices of raw warping coefficients fixed by the row
    constraints; the remaining coefficients are free symmetries of the row.
    """

    case_id: int
    n: int
    c_bar: float
    c: float
    params: Mapping[str, float]
    pinned: tuple = ()


@dataclass(frozen=True, eq=False)
class WarpingFunction:
    """Positive warping function f on ``domain``.

    ``params`` by family:

    - constant: (a,) with f = a
    - exponential: (a, b) with f = a e^{bt}
    - cosh-type: (a, b, d) with f = a e^{bt} + d e^{-bt}
    - affine: (m, a) with f = m t + a
    - trigonometric: (a1, a2, b) with f = a1 cos(bt) + a2 sin(bt)
    - custom-analytic: () with ``callbacks = (f, f', f'')``
    """

    family: str
    params: tuple = ()
    domain: Interval = field(default_factory=Interval)
    ref_point: float | None = None
    callbacks: tuple[Callable, Callable, Callable] | None = None
    einstein: EinsteinFamily | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidWarpingError(f"unknown warping family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        expected = {"constant": 1, "exponential": 2, "cosh-type": 3, "affine": 2,
                    "trigonometric": 3, "custom-analytic": 0}[self.family]
        if len(self.params) != expected:
            raise InvalidWarpingError(
                f"family {self.family!r} takes {expected} parameters, got {len(self.params)}")
        if self.family == "custom-analytic":
            if self.callbacks is None or len(self.callbacks) != 3:
                raise InvalidWarpingError("custom-analytic family needs (f, df, ddf) callbacks")
        ref = self.ref_point
        if ref is None:
            ref = _default_ref_point(self.domain)
        ref = float(ref)
        if not self.domain.contains(ref):
            raise DomainError(f"ref_point {ref} outside {self.domain}")
        object.__setattr__(self, "ref_point", ref)
        self._check_positive()
        if self.family == "custom-analytic":
            self._check_callbacks()

    # -- evaluation -----------------------------------------------------

    def _raw(self, t):
        p = self.params
        fam = self.family
        with np.errstate(over="ignore"):
            if fam == "constant":
                a, = p
                f = np.full_like(t, a)
                return f, np.zeros_like(t), np.zeros_like(t)
            if fam == "exponential":
                a, b = p
                e = a * np.exp(b * t)
                return e, b * e, b * b * e
            if fam == "cosh-type":
                a, b, d = p
                ep = a * np.exp(b * t)
                em = d * np.exp(-b * t)
                return ep + em, b * (ep - em), b * b * (ep + em)
            if fam == "affine":
                m, a = p
                return m * t + a, np.full_like(t, m), np.zeros_like(t)
            if fam == "trigonometric":
                a1, a2, b = p
                c, s = np.cos(b * t), np.sin(b * t)
                f = a1 * c + a2 * s
                return f, b * (a2 * c - a1 * s), -b * b * f
        fn, dfn, ddfn = self.callbacks
        return (np.asarray(fn(t), dtype=float) + 0 * t,
                np.asarray(dfn(t), dtype=float) + 0 * t,
                np.asarray(ddfn(t), dtype=float) + 0 * t)

    def _check_domain(self, t):
        inside = self.domain.contains(t)
        if not np.all(inside):
            bad = np.asarray(t)[~inside].ravel()[0]
            raise DomainError(f"t = {bad} outside warping domain {self.domain}")

    def derivatives(self, t):
        """Return (f, f', f'') at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        f, df, ddf = self._raw(t)
        if not np.all(f > 0):
            bad = t[~(f > 0)].ravel()[0] if t.ndim else float(t)
            raise InvalidWarpingError(f"warping function not positive at t = {bad}")
        return f, df, ddf

    def eval(self, t):
        """Return (f, f', f'', (log f)'') at ``t``."""
        f, df, ddf = self.derivatives(t)
        return f, df, ddf, (ddf * f - df * df) / (f * f)

    def __call__(self, t):
        return self.derivatives(t)[0]

    def f2_log_second(self, t):
        """f^2 (log f)'' = f f'' - f'^2, formed without dividing by f."""
        f, df, ddf = self.derivatives(t)
        return f * ddf - df * df

    def G(self, t):
        """Antiderivative of f normalized by G(ref_point) = 0."""
        return primitive_G(self, t)

    def with_params(self, params, domain=None):
        """Same family with different raw coefficients and no Einstein tag."""
        return WarpingFunction(self.family, tuple(params), domain or self.domain,
                               self.ref_point, self.callbacks)

    # -- validation -----------------------------------------------------

    def _check_positive(self):
        a, b = self.domain.window(self.ref_point, _CHECK_HALF_WIDTH, inset=1e-9)
        t = np.linspace(a, b, _POSITIVITY_SAMPLES)
        f = self._raw(t)[0]
        if not np.all(f > 0):
            raise InvalidWarpingError(
                f"{self.family} warping with params {self.params} is not positive "
                f"at t = {t[~(f > 0)][0]:.6g}")

    def _check_callbacks(self):
        a, b = self.domain.window(self.ref_point, 1.0, inset=0.05)
        ts = np.linspace(a, b, 11)
        h1, h2 = 1e-5, 1e-4
        f, df, ddf = self._raw(ts)
        fd1 = (self._raw(ts + h1)[0] - self._raw(ts - h1)[0]) / (2 * h1)
        fd2 = (self._raw(ts + h2)[0] - 2 * f + self._raw(ts - h2)[0]) / (h2 * h2)
        scale = 1.0 + np.abs(f) + np.abs(df) + np.abs(ddf)
        if np.any(np.abs(fd1 - df) > 1e-6 * scale):
            raise InvalidWarpingError("custom warping: f' callback disagrees with finite differences")
        if np.any(np.abs(fd2 - ddf) > 1e-4 * scale):
            raise InvalidWarpingError("custom warping: f'' callback disagrees with finite differences")


def _default_ref_point(domain: Interval) -> float:
    if domain.bounded:
        return 0.5 * (domain.lo + domain.hi)
    if domain.contains(0.0):
        return 0.0
    return domain.lo + 1.0 if math.isfinite(domain.lo) else domain.hi - 1.0


def evaluate(f: WarpingFunction, t):
    """(f, f', f'', (log f)'') at ``t``."""
    return f.eval(t)


def primitive_G(f: WarpingFunction, t):
    """G with G' = f and G(f.ref_point) = 0.

    Closed form for the analytic families; adaptive quadrature from the
    reference point for ``custom-analytic``.
    """
    t = np.asarray(t, dtype=float)
    f.derivatives(t)  # domain and positivity check
    t0 = f.ref_point
    p = f.params
    fam = f.family
    if fam == "constant":
        return p[0] * (t - t0)
    if fam == "exponential":
        a, b = p
        if b == 0.0:
            return a * (t - t0)
        return a * np.exp(b * t0) * np.expm1(b * (t - t0)) / b
    if fam == "cosh-type":
        a, b, d = p
        if b == 0.0:
            return (a + d) * (t - t0)
        return (a * np.exp(b * t0) * np.expm1(b * (t - t0))
                + d * np.exp(-b * t0) * np.expm1(-b * (t - t0)) * -1.0) / b
    if fam == "affine":
        m, a = p
        return 0.5 * m * (t - t0) * (t + t0) + a * (t - t0)
    if fam == "trigonometric":
        a1, a2, b = p
        if b == 0.0:
            return a1 * (t - t0)
        return (a1 * (np.sin(b * t) - np.sin(b * t0))
                - a2 * (np.cos(b * t) - np.cos(b * t0))) / b
    return _quad_G(f, t)


def _quad_G(f: WarpingFunction, t):
    fn = f.callbacks[0]
    out = np.empty(t.shape)
    for idx, ti in np.ndenumerate(t):
        val, err = integrate.quad(lambda s: float(fn(s)), f.ref_point, float(ti),
                                  epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        if err > max(QUAD_EPSABS, QUAD_EPSREL * abs(val)) * 10:
            raise IntegrationError(
                f"quadrature of f from {f.ref_point} to {float(ti)} reached only {err:.3g}",
                achieved=err)
        out[idx] = val
    return out if t.ndim else float(out)


# -- Einstein families ---------------------------------------------------

_SIGNS = {
    1: (1, 1), 2: (1, 0), 3: (1, -1),
    4: (0, 0), 5: (0, -1), 6: (-1, -1),
}


def _sign(x, tol=1e-14):
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


def _require_close(name, value, target, case_id):
    scale = max(abs(target), abs(value), 1e-300)
    resid = abs(value - target)
    if resid > CONSTRAINT_RTOL * scale:
        raise ConstraintError(
            f"case {case_id}: {name} = {value!r} violates row constraint "
            f"(expected {target!r}, residual {resid:.3g})", residual=resid)


def _require_unit_sign(eps, case_id):
    if eps not in (1.0, -1.0):
        raise ConstraintError(f"case {case_id}: eps must be +1 or -1, got {eps}",
                              residual=min(abs(eps - 1), abs(eps + 1)))


def positivity_interval(family: str, params: Sequence[float]) -> Interval:
    """Largest open interval (containing the branch nearest 0) on which f > 0."""
    p = [float(x) for x in params]
    if family == "cosh-type":
        a, b, d = p
        if a >= 0 and d >= 0 and a + d > 0:
            return Interval()
        if a <= 0 and d <= 0:
            raise InvalidWarpingError(f"cosh-type warping {p} is nowhere positive")
        root = math.log(-d / a) / (2 * b)
        return Interval(root, math.inf) if a > 0 else Interval(-math.inf, root)
    if family == "affine":
        m, a = p
        if m == 0:
            if a <= 0:
                raise InvalidWarpingError(f"constant affine warping {a} not positive")
            return Interval()
        root = -a / m
        return Interval(root, math.inf) if m > 0 else Interval(-math.inf, root)
    if family == "trigonometric":
        a1, a2, b = p
        if a1 == 0 and a2 == 0:
            raise InvalidWarpingError("trigonometric warping with zero amplitude")
        delta = math.atan2(a2, a1)
        return Interval((delta - math.pi / 2) / b, (delta + math.pi / 2) / b)
    return Interval()


def make_einstein_family(case_id: int, n: int, c_bar: float, c: float,
                         params: Mapping[str, float], domain: Interval | None = None,
                         ref_point: float | None = None) -> WarpingFunction:
    """Warping function of Einstein row ``case_id`` (1..6).

    ``params`` holds the free row parameters (``a``, ``eps``, ``a1``, ``a2``);
    derived ones (``b``, ``d``, ``m``) may be passed and are then checked
    against the row formulas. The domain is the positivity interval of f,
    intersected with ``domain`` when given.
    """
    if case_id not in _SIGNS:
        raise InvalidFamilyError(f"Einstein case must be 1..6, got {case_id}")
    if int(n) != n or n < 2:
        raise InvalidFamilyError(f"fiber dimension n must be an integer >= 2, got {n}")
    n = int(n)
    c_bar, c = float(c_bar), float(c)
    want = _SIGNS[case_id]
    got = (_sign(c_bar), _sign(c))
    if got != want:
        names = {1: "> 0", 0: "= 0", -1: "< 0"}
        raise InvalidFamilyError(
            f"case {case_id} needs c_bar {names[want[0]]} and c {names[want[1]]}; "
            f"got c_bar = {c_bar}, c = {c}")
    params = {k: float(v) for k, v in params.items()}

    def get(name, default=None):
        if name in params:
            return params[name]
        if default is None:
            raise ConstraintError(f"case {case_id}: missing parameter {name!r}")
        return default

    if case_id in (1, 3):
        a = get("a")
        if case_id == 1 and not a > 0:
            raise ConstraintError(f"case 1 needs a > 0, got {a}", residual=abs(a))
        if case_id == 3 and a == 0:
            raise ConstraintError("case 3 needs a != 0", residual=0.0)
        b = math.sqrt(c_bar / n)
        d = c * n / (4 * a * c_bar * (n - 1))
        if "b" in params:
            _require_close("b", params["b"], b, case_id)
        if "d" in params:
            _require_close("d", params["d"], d, case_id)
        family, raw, pinned = "cosh-type", (a, b, d), (1, 2)
    elif case_id == 2:
        a = get("a")
        if not a > 0:
            raise ConstraintError(f"case 2 needs a > 0, got {a}", residual=abs(a))
        eps = get("eps", 1.0)
        _require_unit_sign(eps, case_id)
        b = math.sqrt(c_bar / n)
        if "b" in params:
            _require_close("b", params["b"], b, case_id)
        family, raw, pinned = "exponential", (a, eps * b), (1,)
    elif case_id == 4:
        a = get("a")
        if not a > 0:
            raise ConstraintError(f"case 4 needs a > 0, got {a}", residual=abs(a))
        family, raw, pinned = "constant", (a,), ()
    elif case_id == 5:
        eps = get("eps", 1.0)
        _require_unit_sign(eps, case_id)
        a = get("a")
        m = eps * math.sqrt(-c / (n - 1))
        if "m" in params:
            _require_close("m", params["m"], m, case_id)
        family, raw, pinned = "affine", (m, a), (0,)
    else:
        a1, a2 = get("a1"), get("a2", 0.0)
        b = math.sqrt(-c_bar / n)
        if "b" in params:
            _require_close("b", params["b"], b, case_id)
        _require_close("a1^2 + a2^2", a1 * a1 + a2 * a2, c * n / (c_bar * (n - 1)), case_id)
        family, raw = "trigonometric", (a1, a2, b)
        pinned = tuple(i for i, v in ((0, a1), (1, a2)) if v != 0.0) + (2,)

    dom = positivity_interval(family, raw)
    if domain is not None:
        dom = dom.intersect(domain)
    meta = EinsteinFamily(case_id, n, c_bar, c, dict(params), pinned)
    return WarpingFunction(family, raw, dom, ref_point, einstein=meta)


def einstein_residuals(f: WarpingFunction, n: int, c_bar: float, c: float, t_samples):
    """Max defects of f''/f = c_bar/n and c_bar(n-1)/n = (c + (n-1) f'^2)/f^2."""
    fv, df, ddf = f.derivatives(np.asarray(t_samples, dtype=float))
    r1 = np.max(np.abs(ddf / fv - c_bar / n))
    r2 = np.max(np.abs(c_bar * (n - 1) / n - (c + (n - 1) * df * df) / (fv * fv)))
    return float(r1), float(r2)


def standard_einstein_row(case_id: int, n: int) -> dict:
    """Representative (c_bar, c, params) for each row, used by the table command.

    Row 1 with these values is de Sitter's f = cosh t; row 6 is f = cos t.
    """
    rows = {
        1: (float(n), float(n - 1), {"a": 0.5}),
        2: (float(n), 0.0, {"a": 1.0, "eps": 1.0}),
        3: (float(n), -float(n - 1), {"a": 1.0}),
        4: (0.0, 0.0, {"a": 3.0}),
        5: (0.0, -float(n - 1), {"eps": 1.0, "a": 2.0}),
        6: (-float(n), -float(n - 1), {"a1": 1.0, "a2": 0.0}),
    }
    c_bar, c, params = rows[case_id]
    return {"case_id": case_id, "n": n, "c_bar": c_bar, "c": c, "params": params}


def cosh_warping(domain: Interval | None = None) -> WarpingFunction:
    """f(t) = cosh t, the de Sitter warping."""
    return WarpingFunction("cosh-type", (0.5, 1.0, 0.5), domain or Interval())


def exp_warping(domain: Interval | None = None) -> WarpingFunction:
    """f(t) = e^t, the steady-state warping."""
    return WarpingFunction("exponential", (1.0, 1.0), domain or Interval())


def static_warping(a: float = 1.0) -> WarpingFunction:
    return WarpingFunction("constant", (a,))
