"""Rectangular domain, boundary decomposition, and the sine Galerkin basis.

The grid is a tensor product of uniform 1-D grids including the endpoints.
Derivatives use the summation-by-parts pair (centered differences inside,
one-sided first-order closures at the two boundary rows) whose norm is the
trapezoid rule; with that pairing the discrete divergence theorem

    sum W f dx(g) + sum W g dx(f) = boundary trapezoid of f g n

holds exactly for arbitrary grid functions, which the mass/energy ledgers
rely on.  Velocity basis fields are tensor sine modes per component, exactly
zero on the boundary and orthonormal under the grid quadrature.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .errors import ConfigurationError, DomainError
from .expressions import ScalarField, VectorField


def sbp_diff(f, h, axis):
    """SBP-21 first derivative along ``axis`` of a 2-D array."""
    out = np.empty_like(f)
    if axis == 0:
        out[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2.0 * h)
        out[0, :] = (f[1, :] - f[0, :]) / h
        out[-1, :] = (f[-1, :] - f[-2, :]) / h
    else:
        out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * h)
        out[:, 0] = (f[:, 1] - f[:, 0]) / h
        out[:, -1] = (f[:, -1] - f[:, -2]) / h
    return out


def _sbp_matrix_1d(m, h):
    d = sparse.lil_matrix((m, m))
    for i in range(1, m - 1):
        d[i, i - 1] = -0.5 / h
        d[i, i + 1] = 0.5 / h
    d[0, 0], d[0, 1] = -1.0 / h, 1.0 / h
    d[m - 1, m - 2], d[m - 1, m - 1] = -1.0 / h, 1.0 / h
    return d.tocsr()


def _trapezoid_weights(m, h):
    w = np.full(m, h)
    w[0] = w[-1] = h / 2.0
    return w


@dataclass
class Edge:
    name: str
    normal: np.ndarray
    index: tuple
    weights: np.ndarray  # transverse trapezoid weights
    x1: np.ndarray
    x2: np.ndarray


class Domain:
    """Axis-aligned rectangle [0, L1] x [0, L2] with an (m1, m2) node grid."""

    def __init__(self, lengths=(1.0, 1.0), shape=33):
        if isinstance(shape, int):
            shape = (shape, shape)
        m1, m2 = shape
        L1, L2 = lengths
        if L1 <= 0 or L2 <= 0:
            raise DomainError("domain extents must be positive")
        if m1 < 4 or m2 < 4:
            raise DomainError("grid resolution must be at least 4 per axis")
        self.lengths = (float(L1), float(L2))
        self.shape = (int(m1), int(m2))
        self.x1 = np.linspace(0.0, L1, m1)
        self.x2 = np.linspace(0.0, L2, m2)
        self.h1 = self.x1[1] - self.x1[0]
        self.h2 = self.x2[1] - self.x2[0]
        self.X1, self.X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        self.w1 = _trapezoid_weights(m1, self.h1)
        self.w2 = _trapezoid_weights(m2, self.h2)
        self.W = np.outer(self.w1, self.w2)
        self.edges = [
            Edge("left", np.array([-1.0, 0.0]), (0, slice(None)), self.w2,
                 np.zeros(m2), self.x2),
            Edge("right", np.array([1.0, 0.0]), (m1 - 1, slice(None)), self.w2,
                 np.full(m2, L1), self.x2),
            Edge("bottom", np.array([0.0, -1.0]), (slice(None), 0), self.w1,
                 self.x1, np.zeros(m1)),
            Edge("top", np.array([0.0, 1.0]), (slice(None), m2 - 1), self.w1,
                 self.x1, np.full(m1, L2)),
        ]
        self._sparse = None

    # quadrature -----------------------------------------------------------
    def integrate(self, values):
        return float(np.sum(self.W * values))

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    # derivatives ----------------------------------------------------------
    def dx1(self, f):
        return sbp_diff(f, self.h1, 0)

    def dx2(self, f):
        return sbp_diff(f, self.h2, 1)

    def gradient(self, f):
        return np.stack([self.dx1(f), self.dx2(f)], axis=-1)

    # sparse operators for the implicit density solve -----------------------
    def sparse_operators(self):
        """(W, Dx, Dy, L) flattened to csr; L = Dx^T W Dx + Dy^T W Dy."""
        if self._sparse is None:
            m1, m2 = self.shape
            d1 = _sbp_matrix_1d(m1, self.h1)
            d2 = _sbp_matrix_1d(m2, self.h2)
            dx = sparse.kron(d1, sparse.identity(m2, format="csr"), format="csr")
            dy = sparse.kron(sparse.identity(m1, format="csr"), d2, format="csr")
            wd = sparse.diags(self.W.ravel())
            lap = (dx.T @ wd @ dx + dy.T @ wd @ dy).tocsr()
            self._sparse = (wd, dx, dy, lap)
        return self._sparse


class BoundaryData:
    """Boundary velocity extension and inflow density, sampled to the grid."""

    def __init__(self, domain, u_b, rho_b, deadband=1e-12):
        self.domain = domain
        self.u_b = u_b if isinstance(u_b, VectorField) else VectorField(u_b)
        self.rho_b = rho_b if isinstance(rho_b, ScalarField) else ScalarField(rho_b)
        if self.u_b.time_dependent or self.rho_b.time_dependent:
            raise ConfigurationError("boundary data must be time-independent")
        self.deadband = float(deadband)
        X1, X2 = domain.X1, domain.X2
        self.ub = self.u_b(0.0, X1, X2)  # (m1, m2, 2)
        self.grad_ub = self.u_b.gradient(0.0, X1, X2)
        self.div_ub = self.u_b.divergence(0.0, X1, X2)
        self.grad_half_ub2 = self.u_b.half_square_gradient()(0.0, X1, X2)
        self.rho_b_grid = self.rho_b(0.0, X1, X2)
        if not np.all(np.isfinite(self.ub)) or not np.all(np.isfinite(self.grad_ub)):
            raise ConfigurationError("boundary velocity must be C^1 on the closure")
        bmask = domain.boundary_mask()
        if np.any(self.rho_b_grid[bmask] <= 0):
            raise ConfigurationError("inflow density must be positive")
        # per-edge normal fluxes and the assembled diagonal boundary operators
        self.edge_ubn = {}
        self.flux_full = np.zeros(domain.shape)
        self.flux_negative = np.zeros(domain.shape)
        for edge in domain.edges:
            vals = self.ub[edge.index]  # (len, 2)
            ubn = vals @ edge.normal
            ubn = np.where(np.abs(ubn) <= self.deadband, 0.0, ubn)
            self.edge_ubn[edge.name] = ubn
            self.flux_full[edge.index] += edge.weights * ubn
            self.flux_negative[edge.index] += edge.weights * np.minimum(ubn, 0.0)

    def edge_labels(self, edge):
        """-1 inflow, +1 outflow, 0 wall, per node of the edge."""
        ubn = self.edge_ubn[edge.name]
        return np.sign(ubn).astype(int)

    def boundary_integral(self, values, where="all"):
        """Trapezoid integral of values * (u_B . n) over the selected part."""
        total = 0.0
        for edge in self.domain.edges:
            ubn = self.edge_ubn[edge.name]
            if where == "in":
                ubn = np.minimum(ubn, 0.0)
            elif where == "out":
                ubn = np.maximum(ubn, 0.0)
            total += float(np.sum(edge.weights * ubn * values[edge.index]))
        return total

    def max_boundary_speed(self):
        return float(np.max(np.linalg.norm(self.ub, axis=-1)))

    def inflow_density_bounds(self):
        """(min, max) of rho_B over inflow nodes; None when no inflow exists."""
        vals = []
        for edge in self.domain.edges:
            mask = self.edge_ubn[edge.name] < 0
            if np.any(mask):
                vals.append(self.rho_b_grid[edge.index][mask])
        if not vals:
            return None
        allv = np.concatenate(vals)
        return float(allv.min()), float(allv.max())


@dataclass
class BoundaryPartition:
    """Per-edge inflow/outflow/wall labels plus gathered node coordinates."""

    labels: dict
    inflow_nodes: list
    outflow_nodes: list
    wall_nodes: list


def decompose_boundary(domain, data):
    """Label every boundary quadrature node by the sign of u_B . n."""
    labels = {}
    gathered = {-1: [], 1: [], 0: []}
    for edge in domain.edges:
        lab = data.edge_labels(edge)
        labels[edge.name] = lab
        for k in range(lab.size):
            gathered[int(lab[k])].append((edge.name, k, edge.x1[k], edge.x2[k]))
    return BoundaryPartition(
        labels=labels,
        inflow_nodes=gathered[-1],
        outflow_nodes=gathered[1],
        wall_nodes=gathered[0],
    )


def available_modes(domain):
    """Largest per-axis mode index the grid can carry without aliasing."""
    m = min(domain.shape)
    return (m - 1) // 2


class SineBasis:
    """Orthonormal tensor sine modes per velocity component.

    Ordering is by increasing total mode number k1 + k2, then (k1, k2)
    lexicographically, then component index; deterministic by construction.
    """

    def __init__(self, domain, n):
        if n < 0:
            raise ConfigurationError("basis size must be nonnegative")
        self.domain = domain
        self.n = int(n)
        kmax = available_modes(domain)
        pairs = []
        k_total = 2
        while 2 * len(pairs) < n:
            new = [
                (k1, k_total - k1)
                for k1 in range(1, k_total)
                if 1 <= k_total - k1 <= kmax and k1 <= kmax
            ]
            if not new and k_total > 2 * kmax:
                raise ConfigurationError(
                    f"basis size {n} exceeds the modes available at resolution "
                    f"{domain.shape} (max per-axis mode {kmax})"
                )
            pairs.extend(sorted(new))
            k_total += 1
        self.modes = []
        for k1, k2 in pairs:
            for comp in (0, 1):
                self.modes.append((k1, k2, comp))
        self.modes = self.modes[:n]

        m1, m2 = domain.shape
        L1, L2 = domain.lengths
        norm = 2.0 / np.sqrt(L1 * L2)
        self.values = np.zeros((n, m1, m2, 2))
        self.grads = np.zeros((n, m1, m2, 2, 2))
        self.divs = np.zeros((n, m1, m2))
        for i, (k1, k2, comp) in enumerate(self.modes):
            s1 = np.sin(k1 * np.pi * domain.x1 / L1)
            s2 = np.sin(k2 * np.pi * domain.x2 / L2)
            s1[0] = s1[-1] = 0.0  # exact boundary zeros
            s2[0] = s2[-1] = 0.0
            c1 = (k1 * np.pi / L1) * np.cos(k1 * np.pi * domain.x1 / L1)
            c2 = (k2 * np.pi / L2) * np.cos(k2 * np.pi * domain.x2 / L2)
            phi = norm * np.outer(s1, s2)
            self.values[i, :, :, comp] = phi
            self.grads[i, :, :, comp, 0] = norm * np.outer(c1, s2)
            self.grads[i, :, :, comp, 1] = norm * np.outer(s1, c2)
            self.divs[i] = self.grads[i, :, :, comp, comp]

    def velocity(self, coeffs):
        """Assemble sum_i c_i w_i as an (m1, m2, 2) array."""
        if self.n == 0:
            return np.zeros(self.domain.shape + (2,))
        return np.einsum("n,nxya->xya", coeffs, self.values)

    def velocity_gradient(self, coeffs):
        if self.n == 0:
            return np.zeros(self.domain.shape + (2, 2))
        return np.einsum("n,nxyab->xyab", coeffs, self.grads)

    def divergence(self, coeffs):
        if self.n == 0:
            return np.zeros(self.domain.shape)
        return np.einsum("n,nxy->xy", coeffs, self.divs)

    def project(self, field):
        """L2 projection coefficients of an (m1, m2, 2) field."""
        return np.einsum("xy,nxya,xya->n", self.domain.W, self.values, field)

    def gram(self):
        return np.einsum(
            "xy,nxya,mxya->nm", self.domain.W, self.values, self.values
        )

    def boundary_trace_max(self):
        mask = self.domain.boundary_mask()
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.values[:, mask, :])))


def build_basis(domain, n):
    return SineBasis(domain, n)


def project(basis, field):
    return basis.project(field)
