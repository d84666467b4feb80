"""Extrinsic and intrinsic geometry of a spacelike graph t = u(p) over the fiber.

Conventions: N is the unit normal with the same time orientation as d/dt
(so g(N, d/dt) = -cosh(phi) <= -1), A = -(ambient derivative of N) is the
shape operator, and H = -tr(A)/n. With these choices the slice t = t0 has
A = -(f'/f)(t0) Id and H = f'(t0)/f(t0).

Ambient vectors are stored as a time component plus a fiber vector field of
contravariant grid components.
"""

from __future__ import annotations

import hashlib
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConditioningWarning, DimensionError, SpacelikeViolation
from .fiber import FiberGrid
from .warping import WarpingFunction

CONDITIONING_MARGIN = 0.999


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """Node values of u: F -> I on a fiber grid."""

    grid: FiberGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DimensionError(f"graph values shape {vals.shape} != grid shape {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def slice(cls, grid: FiberGrid, t0: float) -> "GraphFunction":
        return cls(grid, np.full(grid.shape, float(t0)))

    @property
    def range(self):
        return float(self.values.min()), float(self.values.max())

    def digest(self) -> str:
        return hashlib.sha1(self.values.tobytes()).hexdigest()


class GeometryFields:
    """Lazily evaluated geometric fields of the graph of ``graph`` in I x_f F."""

    def __init__(self, f: WarpingFunction, graph: GraphFunction):
        self.f = f
        self.graph = graph
        self.grid = graph.grid
        self.n = graph.grid.dim
        u = graph.values
        self.u = u
        self.fu, self.dfu, self.ddfu = f.derivatives(u)

    # -- first-order data -----------------------------------------------

    @cached_property
    def du(self):
        """Coordinate differential (d_0 u, d_1 u)."""
        return self.grid.differential(self.u)

    @cached_property
    def Du(self):
        return self.grid.raise_index(self.du)

    @cached_property
    def norm2_Du(self):
        return np.einsum("i...,i...->...", self.du, self.Du)

    @cached_property
    def ratio(self):
        """|Du| / f(u) at each node."""
        return np.sqrt(np.maximum(self.norm2_Du, 0.0)) / self.fu

    @cached_property
    def margin(self) -> float:
        return float(self.ratio.max())

    @property
    def worst_node(self):
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.ratio), self.ratio.shape))

    def require_spacelike(self):
        if not self.margin < 1.0:
            raise SpacelikeViolation(
                f"graph is not spacelike: |Du|/f(u) = {self.margin:.6g} at node {self.worst_node}",
                node=self.worst_node, margin=self.margin)
        if self.margin > CONDITIONING_MARGIN:
            warnings.warn(f"graph near the light cone: max |Du|/f(u) = {self.margin:.6g}",
                          ConditioningWarning, stacklevel=3)

    @cached_property
    def W(self):
        """sqrt(f(u)^2 - |Du|^2)."""
        self.require_spacelike()
        return np.sqrt(self.fu * self.fu - self.norm2_Du)

    @cached_property
    def cosh_phi(self):
        return self.fu / self.W

    @cached_property
    def sinh2_phi(self):
        """|Du|^2 / (f^2 - |Du|^2), the squared hyperbolic sine of the angle."""
        return self.norm2_Du / (self.W * self.W)

    @cached_property
    def normal(self):
        """(N^t, N^F) with N = (f^2 d_t + Du) / (f W)."""
        fw = self.fu * self.W
        return self.fu * self.fu / fw, self.Du / fw

    @cached_property
    def gKN(self):
        """g(K, N) with K = f d_t."""
        return -self.fu * self.normal[0]

    @cached_property
    def induced_metric(self):
        """(g_u)_ij = -d_i u d_j u + f(u)^2 (g_F)_ij."""
        du = self.du
        g = self.fu ** 2 * self.grid.metric - du[:, None] * du[None, :]
        return g

    @cached_property
    def induced_inverse(self):
        g = np.moveaxis(self.induced_metric, (0, 1), (-2, -1))
        return np.moveaxis(np.linalg.inv(g), (-2, -1), (0, 1))

    @cached_property
    def density_ratio(self):
        """sqrt(det g_u / det g_F), a scalar field."""
        g = self.induced_metric
        det_u = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        gf = self.grid.metric
        det_f = gf[0, 0] * gf[1, 1] - gf[0, 1] * gf[1, 0]
        return np.sqrt(det_u / det_f)

    # -- mean curvature -------------------------------------------------

    @cached_property
    def H(self):
        """Mean curvature from the divergence form of the graph operator.

        The flux Du / (n f W) is evaluated on cell faces (normal derivative
        by a one-step difference, tangential one averaged from the two
        nodes), which keeps the principal part on a compact stencil.
        """
        n, fu, W = self.n, self.fu, self.W
        grid, u = self.grid, self.u
        div = np.zeros_like(u)
        for k in range(2):
            up, _ = grid._neighbors(u, k)
            tang = grid.partial(u, 1 - k)
            tang_up, _ = grid._neighbors(tang, k)
            g00, g11, rho = grid.face_metric(k)
            gk, gt = (g00, g11) if k == 0 else (g11, g00)
            d = (up - u) / grid.spacing[k]
            t = 0.5 * (tang + tang_up)
            ff = self.f(0.5 * (u + up))
            w2 = np.where(rho > 0, ff * ff - gk * d * d - gt * t * t, ff * ff)
            if np.any(w2 <= 0):
                raise SpacelikeViolation("graph is not spacelike on a cell face",
                                         node=None, margin=self.margin)
            div += grid.face_divergence(rho * gk * d / (n * ff * np.sqrt(w2)), k)
        return div + self.dfu / (n * W) * (n + self.norm2_Du / (fu * fu))

    # -- shape operator -------------------------------------------------

    @cached_property
    def ambient_christoffel(self):
        """Christoffel symbols of -dt^2 + f^2 g_F at t = u; index 0 is time."""
        fu, dfu = self.fu, self.dfu
        shape = self.grid.shape
        gam = np.zeros((3, 3, 3) + shape)
        gam[0, 1:, 1:] = fu * dfu * self.grid.metric
        hub = dfu / fu
        for k in range(2):
            gam[1 + k, 0, 1 + k] = hub
            gam[1 + k, 1 + k, 0] = hub
        gam[1:, 1:, 1:] = self.grid.christoffel
        return gam

    @cached_property
    def tangent_frame(self):
        """Ambient components of E_i = d_i u d_t + d_i, shape (2, 3) + grid."""
        E = np.zeros((2, 3) + self.grid.shape)
        E[:, 0] = self.du
        E[0, 1] = 1.0
        E[1, 2] = 1.0
        return E

    def ambient_inner(self, X, Y):
        """g(X, Y) for ambient component arrays with leading axis of length 3."""
        return -X[0] * Y[0] + self.fu ** 2 * self.grid.inner(X[1:], Y[1:])

    @cached_property
    def second_fundamental_form(self):
        """II_ij = g(N, D_{E_i} E_j) where D is the ambient connection."""
        E = self.tangent_frame
        gam = self.ambient_christoffel
        cov = np.einsum("abc...,ib...,jc...->ija...", gam, E, E)
        cov[:, :, 0] += self.grid.hessian_partials(self.u)
        Nt, NF = self.normal
        N = np.concatenate([Nt[None], NF])
        return np.stack([np.stack([self.ambient_inner(N, cov[i, j]) for j in range(2)])
                         for i in range(2)])

    @cached_property
    def shape_operator(self):
        """A^k_i = (g_u)^{kj} II_ji, shape (2, 2) + grid."""
        return np.einsum("kj...,ji...->ki...", self.induced_inverse, self.second_fundamental_form)

    @cached_property
    def trA2(self):
        A = self.shape_operator
        return np.einsum("ki...,ik...->...", A, A)

    @cached_property
    def H_from_A(self):
        A = self.shape_operator
        return -(A[0, 0] + A[1, 1]) / self.n

    @cached_property
    def symmetry_defect(self) -> float:
        II = self.second_fundamental_form
        return float(np.max(np.abs(II[0, 1] - II[1, 0])))

    @cached_property
    def connection_residual(self) -> float:
        """max |D_{E_i} K - f'(u) E_i| over the tangent frame, K = f d_t."""
        E = self.tangent_frame
        gam = self.ambient_christoffel
        out = 0.0
        for i in range(2):
            nabla = self.fu * gam[:, :, 0]
            nabla = np.einsum("ab...,b...->a...", nabla, E[i])
            nabla[0] += self.dfu * E[i, 0]
            out = max(out, float(np.max(np.abs(nabla - self.dfu * E[i]))))
        return out

    # -- summaries ------------------------------------------------------

    def umbilicity_defect(self) -> float:
        return umbilicity_defect(self)

    def summary(self) -> dict:
        fields = {"u": self.u, "H": self.H, "cosh_phi": self.cosh_phi, "trA2": self.trA2}
        return {name: {"min": float(v.min()), "max": float(v.max()),
                       "mean": float(self.grid.mean(v))} for name, v in fields.items()}


_CACHE: OrderedDict = OrderedDict()
_CACHE_LOCK = threading.Lock()
_CACHE_SIZE = 16


def geometry(f: WarpingFunction, graph: GraphFunction) -> GeometryFields:
    """Cached :class:`GeometryFields` keyed by (f, grid, content hash of u)."""
    key = (id(f), id(graph.grid), graph.digest())
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
        if hit is not None and hit.f is f and hit.grid is graph.grid:
            _CACHE.move_to_end(key)
            return hit
    fields = GeometryFields(f, graph)
    with _CACHE_LOCK:
        _CACHE[key] = fields
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return fields


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def check_spacelike(f: WarpingFunction, graph: GraphFunction) -> float:
    """max |Du| / f(u); the graph is spacelike iff this is below 1."""
    return geometry(f, graph).margin


def hyperbolic_angle(f, graph):
    """cosh(phi) = f(u) / sqrt(f(u)^2 - |Du|^2)."""
    return geometry(f, graph).cosh_phi


def mean_curvature(f, graph):
    return geometry(f, graph).H


def induced_metric(f, graph):
    geo = geometry(f, graph)
    geo.require_spacelike()
    return geo.induced_metric


def normal(f, graph):
    """Future-pointing unit normal as (time component, fiber vector field)."""
    return geometry(f, graph).normal


def shape_operator(f, graph):
    """(A, tr A^2) with A as a (2, 2) + grid array of mixed components."""
    geo = geometry(f, graph)
    return geo.shape_operator, geo.trA2


def umbilicity_defect(fields: GeometryFields) -> float:
    """max over nodes of tr(A^2) - (tr A)^2 / n; zero iff totally umbilical."""
    A = fields.shape_operator
    tr = A[0, 0] + A[1, 1]
    return float(np.max(fields.trA2 - tr * tr / fields.n))
