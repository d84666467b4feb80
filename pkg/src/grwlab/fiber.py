"""Structured grids on the supported two-dimensional fibers and their
second-order finite-difference calculus.

Two topologies are supported:

* ``torus``: flat periodic square grid, identity metric.
* ``sphere``: latitude-longitude grid of a round sphere. Nodes sit half a
  step away from the poles; a value "across the pole" is the value at the
  same colatitude shifted by pi in longitude.

Scalar fields are arrays of ``grid.shape``. Vector fields are arrays of
shape ``(2,) + grid.shape`` holding contravariant components in grid
coordinates (x, y) on the torus and (theta, phi) on the sphere.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError


class FiberGrid:
    """Discretized homogeneous Riemannian fiber (dimension 2).

    Use :meth:`torus` or :meth:`sphere` to construct. Curvature data are
    stored constants; ``ricci_const`` is the Ricci curvature in the
    normalized sense Ric(v, v) / g(v, v).
    """

    dim = 2

    def __init__(self, topology, shape, spacing, coords, metric, christoffel,
                 weights, ricci_const, scalar_const, sect_lower_bound,
                 is_compact, universal_cover_parabolic, size):
        self.topology = topology
        self.shape = tuple(int(s) for s in shape)
        self.spacing = tuple(float(h) for h in spacing)
        self.coords = coords
        self.metric = metric
        self.inv_metric = np.linalg.inv(np.moveaxis(metric, (0, 1), (-2, -1)))
        self.inv_metric = np.moveaxis(self.inv_metric, (-2, -1), (0, 1))
        self.sqrt_det = np.sqrt(metric[0, 0] * metric[1, 1] - metric[0, 1] * metric[1, 0])
        self.christoffel = christoffel
        self.weights = weights
        self.ricci_const = float(ricci_const)
        self.scalar_const = float(scalar_const)
        self.sect_lower_bound = float(sect_lower_bound)
        self.is_compact = bool(is_compact)
        self.universal_cover_parabolic = bool(universal_cover_parabolic)
        self.size = size
        for arr in (metric, christoffel, weights):
            arr.setflags(write=False)

    def __repr__(self):
        return f"FiberGrid({self.topology!r}, shape={self.shape}, size={self.size})"

    # -- constructors ----------------------------------------------------

    @classmethod
    def torus(cls, n=64, length=1.0):
        """Flat torus of side ``length`` with ``n`` nodes per axis."""
        nx, ny = (n, n) if np.isscalar(n) else n
        lx, ly = (length, length) if np.isscalar(length) else length
        if min(nx, ny) < 4:
            raise DimensionError("torus grid needs at least 4 nodes per axis")
        hx, hy = lx / nx, ly / ny
        x = np.arange(nx) * hx
        y = np.arange(ny) * hy
        shape = (nx, ny)
        metric = np.zeros((2, 2) + shape)
        metric[0, 0] = metric[1, 1] = 1.0
        gamma = np.zeros((2, 2, 2) + shape)
        weights = np.full(shape, hx * hy)
        return cls("torus", shape, (hx, hy), (x, y), metric, gamma, weights,
                   ricci_const=0.0, scalar_const=0.0, sect_lower_bound=0.0,
                   is_compact=True, universal_cover_parabolic=True,
                   size={"length": (float(lx), float(ly))})

    @classmethod
    def sphere(cls, n_theta=32, n_phi=None, radius=1.0):
        """Round sphere of ``radius`` on an (n_theta, n_phi) colatitude-longitude grid."""
        n_phi = 2 * n_theta if n_phi is None else n_phi
        if n_phi % 2:
            raise DimensionError("sphere grid needs an even number of longitudes")
        if n_theta < 4:
            raise DimensionError("sphere grid needs at least 4 colatitudes")
        ht, hp = math.pi / n_theta, 2 * math.pi / n_phi
        theta = (np.arange(n_theta) + 0.5) * ht
        phi = np.arange(n_phi) * hp
        shape = (n_theta, n_phi)
        st = np.sin(theta)[:, None] * np.ones(shape)
        ct = np.cos(theta)[:, None] * np.ones(shape)
        r2 = radius * radius
        metric = np.zeros((2, 2) + shape)
        metric[0, 0] = r2
        metric[1, 1] = r2 * st * st
        gamma = np.zeros((2, 2, 2) + shape)
        gamma[0, 1, 1] = -st * ct
        gamma[1, 0, 1] = gamma[1, 1, 0] = ct / st
        # exact cell areas r^2 (cos theta_- - cos theta_+) dphi
        weights = r2 * 2.0 * st * math.sin(ht / 2) * hp
        k = 1.0 / r2
        return cls("sphere", shape, (ht, hp), (theta, phi), metric, gamma, weights,
                   ricci_const=k, scalar_const=2 * k, sect_lower_bound=k,
                   is_compact=True, universal_cover_parabolic=False,
                   size={"radius": float(radius)})

    # -- geometry helpers ------------------------------------------------

    @property
    def h(self) -> float:
        """Largest grid spacing in metric units (used for h^2 tolerances)."""
        if self.topology == "torus":
            return max(self.spacing)
        return self.size["radius"] * max(self.spacing)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def mesh(self):
        return np.meshgrid(*self.coords, indexing="ij")

    def cartesian(self):
        """Embedding coordinates (x, y, z) of sphere nodes."""
        if self.topology != "sphere":
            raise DimensionError("cartesian() is only defined for the sphere")
        th, ph = self.mesh()
        r = self.size["radius"]
        return r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)

    def check_scalar(self, phi):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != self.shape:
            raise DimensionError(f"scalar field shape {phi.shape} != grid shape {self.shape}")
        return phi

    def check_vector(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape != (2,) + self.shape:
            raise DimensionError(f"vector field shape {X.shape} != {(2,) + self.shape}")
        return X

    # -- stencils --------------------------------------------------------

    def _across_pole(self, row):
        return np.roll(row, self.shape[1] // 2, axis=-1)

    def _neighbors(self, phi, axis):
        """Values at node +1 and node -1 along ``axis`` (last two dims are the grid)."""
        ax = phi.ndim - 2 + axis
        if self.topology == "torus" or axis == 1:
            return np.roll(phi, -1, axis=ax), np.roll(phi, 1, axis=ax)
        north = self._across_pole(phi[..., :1, :])
        south = self._across_pole(phi[..., -1:, :])
        plus = np.concatenate([phi[..., 1:, :], south], axis=ax)
        minus = np.concatenate([north, phi[..., :-1, :]], axis=ax)
        return plus, minus

    def partial(self, phi, axis):
        """Centered first difference of a scalar field along ``axis``."""
        plus, minus = self._neighbors(phi, axis)
        return (plus - minus) / (2.0 * self.spacing[axis])

    def partial2(self, phi, axis):
        """Compact centered second difference of a scalar field along ``axis``."""
        plus, minus = self._neighbors(phi, axis)
        return (plus - 2.0 * phi + minus) / self.spacing[axis] ** 2

    def differential(self, phi):
        """Coordinate partials (d_0 phi, d_1 phi) stacked as a covector field."""
        return np.stack([self.partial(phi, 0), self.partial(phi, 1)])

    def hessian_partials(self, phi):
        """Plain second partials d_i d_j phi as a (2, 2) + shape array."""
        d01 = self.partial(self.partial(phi, 1), 0)
        out = np.empty((2, 2) + np.shape(phi))
        out[0, 0] = self.partial2(phi, 0)
        out[1, 1] = self.partial2(phi, 1)
        out[0, 1] = out[1, 0] = d01
        return out

    def raise_index(self, w):
        return np.einsum("ij...,j...->i...", self.inv_metric, w)

    def lower_index(self, X):
        return np.einsum("ij...,j...->i...", self.metric, X)

    def inner(self, X, Y):
        return np.einsum("i...,ij...,j...->...", X, self.metric, Y)

    def grad(self, phi):
        phi = self.check_scalar(phi)
        return self.raise_index(self.differential(phi))

    def div(self, X):
        """(1/sqrt g) d_i(sqrt g X^i).

        On the sphere the theta flux is taken at cell faces as the average of
        the two adjacent nodes, and the polar faces carry zero flux.
        """
        X = self.check_vector(X)
        if self.topology == "torus":
            return self.partial(X[0], 0) + self.partial(X[1], 1)
        ht = self.spacing[0]
        theta = self.coords[0]
        faces = np.concatenate([[0.0], np.sin(theta[:-1] + 0.5 * ht), [0.0]])
        flux = np.zeros((self.shape[0] + 1, self.shape[1]))
        flux[1:-1] = faces[1:-1, None] * 0.5 * (X[0, :-1] + X[0, 1:])
        div_theta = (flux[1:] - flux[:-1]) / (ht * np.sin(theta)[:, None])
        return div_theta + self.partial(X[1], 1)

    def face_metric(self, axis):
        """(g^00, g^11, sqrt g) on the faces between each node and its +1 neighbor along ``axis``.

        Polar faces get sqrt g = 0 (their g^11 is set to 1, it never matters).
        """
        if self.topology == "torus":
            one = np.ones(self.shape)
            return one, one, one
        r2 = self.size["radius"] ** 2
        th = self.coords[0][:, None] * np.ones(self.shape)
        if axis == 0:
            th = th + 0.5 * self.spacing[0]
            th[-1] = math.pi
        s = np.sin(th)
        pole = np.abs(s) < 1e-12
        s = np.where(pole, 0.0, s)
        g11 = np.where(pole, 1.0, 1.0 / (r2 * np.where(pole, 1.0, s) ** 2))
        return np.full(self.shape, 1.0 / r2), g11, r2 * s

    def face_divergence(self, flux, axis):
        """Contribution (1/sqrt g) (sqrt g F_+ - sqrt g F_-) / h of face fluxes along ``axis``.

        ``flux`` holds sqrt g times the flux on the +1 face of each node; the
        -1 face is the previous node's +1 face (on the sphere the south polar
        face, which is zero, stands in for the north one).
        """
        return (flux - np.roll(flux, 1, axis=axis)) / (self.spacing[axis] * self.sqrt_det)

    def integrate(self, phi):
        phi = self.check_scalar(phi)
        return float(np.sum(phi * self.weights))

    def mean(self, phi):
        return self.integrate(phi) / self.area


def grad_F(grid: FiberGrid, phi):
    """Fiber gradient (Du)^i = g^{ij} d_j phi."""
    return grid.grad(phi)


def div_F(grid: FiberGrid, X):
    return grid.div(X)


def norm2_F(grid: FiberGrid, X):
    """Pointwise g_F(X, X)."""
    return grid.inner(grid.check_vector(X), X)


def integrate(grid: FiberGrid, phi):
    """Quadrature of a scalar field against the fiber area element."""
    return grid.integrate(phi)
