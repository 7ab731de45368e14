"""Convex viscous potentials, their conjugates, and coercivity machinery.

Potentials act on symmetric d x d matrices (d = 2 or 3) and may carry a
mollification radius ``delta``; mollification convolves the potential with a
normalized radial bump in matrix space and subtracts the constant that keeps
the mollified potential zero at the origin.  All evaluators accept stacked
arrays of shape (..., d, d).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConjugateDomainError, DomainError, StructureError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def trace(mats):
    return np.einsum("...ii", mats)


def deviator(mats):
    """Traceless part D - tr(D)/d * I."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    out = mats.copy()
    tr = trace(mats) / d
    for i in range(d):
        out[..., i, i] -= tr
    return out


def frobenius(mats):
    return np.sqrt(np.einsum("...ij,...ij", mats, mats))


def inner(a, b):
    return np.einsum("...ij,...ij", a, b)


def check_symmetric(mats, tol=1e-12):
    mats = np.asarray(mats, dtype=float)
    skew = mats - np.swapaxes(mats, -1, -2)
    if np.max(np.abs(skew)) > tol * max(1.0, float(np.max(np.abs(mats)))):
        raise DomainError("matrix argument must be symmetric")
    return mats


def random_symmetric(rng, d, scale=1.0, size=None):
    shape = ((size,) if isinstance(size, int) else tuple(size or ())) + (d, d)
    a = rng.standard_normal(shape)
    return scale * (a + np.swapaxes(a, -1, -2)) / 2.0


def _sym_basis(d):
    """Orthonormal (Frobenius) basis of symmetric d x d matrices."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d))
            e[i, j] = e[j, i] = 1.0 / math.sqrt(2.0)
            basis.append(e)
    return np.array(basis)


class MatrixMollifier:
    """Tensor-product Gauss quadrature of the standard bump on matrix space.

    The kernel is exp(-1/(1 - |Z/delta|^2)) on |Z| < delta, normalized to
    unit mass by the quadrature itself, so the mollified potential is exactly
    convex, even, and vanishes at the origin.
    """

    def __init__(self, d, delta, points_per_dim=7):
        if delta <= 0:
            raise DomainError("mollification radius must be positive")
        self.d = d
        self.delta = float(delta)
        basis = _sym_basis(d)
        k = basis.shape[0]
        nodes, weights = np.polynomial.legendre.leggauss(points_per_dim)
        nodes = nodes * delta
        weights = weights * delta
        grids = np.meshgrid(*([nodes] * k), indexing="ij")
        ys = np.stack([g.ravel() for g in grids], axis=-1)  # (Q, k)
        wq = np.prod(
            np.stack(np.meshgrid(*([weights] * k), indexing="ij"), axis=-1).reshape(
                -1, k
            ),
            axis=-1,
        )
        r2 = np.sum(ys**2, axis=-1) / delta**2
        keep = r2 < 1.0 - 1e-12
        ys, wq, r2 = ys[keep], wq[keep], r2[keep]
        kernel = np.exp(-1.0 / (1.0 - r2))
        w = wq * kernel
        self.weights = w / w.sum()
        self.nodes = np.einsum("qk,kij->qij", ys, basis)  # (Q, d, d)

    def value(self, base_value, mats):
        mats = np.asarray(mats, dtype=float)
        shifted = mats[..., None, :, :] - self.nodes
        vals = base_value(shifted)  # (..., Q)
        const = float(np.dot(self.weights, base_value(self.nodes)))
        return np.einsum("...q,q->...", vals, self.weights) - const

    def gradient(self, base_gradient, mats):
        mats = np.asarray(mats, dtype=float)
        shifted = mats[..., None, :, :] - self.nodes
        grads = base_gradient(shifted)  # (..., Q, d, d)
        return np.einsum("...qij,q->...ij", grads, self.weights)


class ViscousPotential:
    """Base class for convex dissipation potentials on symmetric matrices."""

    delta = 0.0

    def base_value(self, mats):
        raise NotImplementedError

    def base_gradient(self, mats):
        raise NotImplementedError

    def value(self, mats):
        raise NotImplementedError

    def gradient(self, mats):
        raise NotImplementedError

    def conjugate(self, mat):
        raise NotImplementedError


class NewtonianPotential(ViscousPotential):
    """Quadratic potential mu |D0|^2 + eta |tr D|^2.

    Quadratics are invariant under mollification (the convolution adds only a
    constant, which the normalization subtracts), so delta > 0 reuses the
    closed forms; the generic quadrature path in :func:`mollify` cross-checks
    this.
    """

    def __init__(self, mu, eta=0.0, delta=0.0):
        if mu <= 0:
            raise DomainError("shear coefficient mu must be positive")
        if eta < 0:
            raise DomainError("bulk coefficient eta must be nonnegative")
        self.mu = float(mu)
        self.eta = float(eta)
        self.delta = float(delta)

    def base_value(self, mats):
        mats = np.asarray(mats, dtype=float)
        dev = deviator(mats)
        return self.mu * inner(dev, dev) + self.eta * trace(mats) ** 2

    value = base_value

    def base_gradient(self, mats):
        mats = np.asarray(mats, dtype=float)
        d = mats.shape[-1]
        out = 2.0 * self.mu * deviator(mats)
        tr = 2.0 * self.eta * trace(mats)
        for i in range(d):
            out[..., i, i] += tr
        return out

    gradient = base_gradient

    def conjugate(self, mat):
        mat = check_symmetric(mat)
        d = mat.shape[-1]
        dev = deviator(mat)
        tr = float(trace(mat))
        dev2 = float(inner(dev, dev))
        val = dev2 / (4.0 * self.mu)
        if self.eta == 0.0:
            if abs(tr) > 1e-10 * (1.0 + float(frobenius(mat))):
                direction = np.eye(d) / math.sqrt(d)
                raise ConjugateDomainError(
                    "conjugate is infinite: stress has a trace component but "
                    "the potential has no bulk part",
                    direction=direction,
                )
            return val
        return val + tr**2 / (4.0 * d**2 * self.eta)

    def __repr__(self):
        return f"NewtonianPotential(mu={self.mu}, eta={self.eta}, delta={self.delta})"


class PowerLawPotential(ViscousPotential):
    """p-growth potential (mu0/p)[(mu1 + |D0|^2)^(p/2) - mu1^(p/2)].

    The constant is subtracted so the potential vanishes at the origin; this
    changes neither gradients nor Bregman distances.  The potential is blind
    to the trace part, so conjugates are finite only for traceless stresses.
    """

    def __init__(self, mu0, mu1=0.0, p=2.0, delta=0.0, mollifier_points=7):
        if mu0 <= 0:
            raise DomainError("mu0 must be positive")
        if mu1 < 0:
            raise DomainError("mu1 must be nonnegative")
        if p <= 1:
            raise DomainError("growth exponent p must exceed 1")
        self.mu0 = float(mu0)
        self.mu1 = float(mu1)
        self.p = float(p)
        self.delta = float(delta)
        self._mollifiers = {}
        self._points = mollifier_points

    def _mollifier(self, d):
        key = d
        if key not in self._mollifiers:
            self._mollifiers[key] = MatrixMollifier(d, self.delta, self._points)
        return self._mollifiers[key]

    def radial_value(self, z):
        z = np.asarray(z, dtype=float)
        raw = (self.mu1 + z**2) ** (self.p / 2.0) - self.mu1 ** (self.p / 2.0)
        return self.mu0 / self.p * raw

    def radial_slope(self, z):
        z = np.asarray(z, dtype=float)
        return self.mu0 * (self.mu1 + z**2) ** ((self.p - 2.0) / 2.0) * z

    def base_value(self, mats):
        dev = deviator(mats)
        return self.radial_value(frobenius(dev))

    def base_gradient(self, mats):
        dev = deviator(mats)
        z2 = inner(dev, dev)
        if self.mu1 == 0.0 and self.p < 2.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(
                    z2 > 0, self.mu0 * z2 ** ((self.p - 2.0) / 2.0), 0.0
                )
        else:
            coef = self.mu0 * (self.mu1 + z2) ** ((self.p - 2.0) / 2.0)
        return coef[..., None, None] * dev

    def value(self, mats):
        mats = np.asarray(mats, dtype=float)
        if self.delta == 0.0:
            return self.base_value(mats)
        return self._mollifier(mats.shape[-1]).value(self.base_value, mats)

    def gradient(self, mats):
        mats = np.asarray(mats, dtype=float)
        if self.delta == 0.0:
            return self.base_gradient(mats)
        return self._mollifier(mats.shape[-1]).gradient(self.base_gradient, mats)

    def _ray_mollified(self, direction):
        """Mollified potential along a unit traceless ray.

        The continuous mollification is radial in the traceless norm; the
        discrete quadrature is only radial up to its own error, so the
        conjugate searches along the ray of the stress it is paired with.
        """
        moll = self._mollifier(direction.shape[-1])

        def g(z):
            return float(moll.value(self.base_value, float(z) * direction))

        return g

    def conjugate(self, mat):
        mat = check_symmetric(mat)
        d = mat.shape[-1]
        tr = float(trace(mat))
        if abs(tr) > 1e-10 * (1.0 + float(frobenius(mat))):
            raise ConjugateDomainError(
                "conjugate is infinite: power-law potential is trace-blind but "
                "the stress has a trace component",
                direction=np.eye(d) / math.sqrt(d),
            )
        dev = deviator(mat)
        s = float(frobenius(dev))
        if s == 0.0:
            return 0.0
        if self.delta == 0.0 and self.mu1 == 0.0:
            q = self.p / (self.p - 1.0)
            return self.mu0 ** (1.0 - q) * s**q / q
        if self.delta == 0.0:
            f = self.radial_value
        else:
            f = self._ray_mollified(dev / s)
        return _golden_max(lambda z: s * z - f(z))

    def __repr__(self):
        return (
            f"PowerLawPotential(mu0={self.mu0}, mu1={self.mu1}, p={self.p}, "
            f"delta={self.delta})"
        )


def _golden_max(g, rel_tol=1e-10, max_expand=200):
    """Maximize a concave function of one variable on [0, inf)."""
    hi = 1.0
    for _ in range(max_expand):
        if g(2.0 * hi) <= g(hi):
            break
        hi *= 2.0
    else:
        raise DomainError("conjugate maximization did not bracket (sup may be inf)")
    lo = 0.0
    hi = 2.0 * hi
    c = hi - _INVPHI * (hi - lo)
    d_ = lo + _INVPHI * (hi - lo)
    gc, gd = g(c), g(d_)
    for _ in range(300):
        if hi - lo <= rel_tol * max(1.0, hi):
            break
        if gc >= gd:
            hi, d_, gd = d_, c, gc
            c = hi - _INVPHI * (hi - lo)
            gc = g(c)
        else:
            lo, c, gc = c, d_, gd
            d_ = lo + _INVPHI * (hi - lo)
            gd = g(d_)
    z = (lo + hi) / 2.0
    return float(g(z))


def evaluate_F(pot, mats):
    """Potential value (mollified when the potential carries delta > 0)."""
    return pot.value(check_symmetric(mats))


def subdifferential(pot, mats):
    """One element of the subdifferential (the gradient wherever it exists)."""
    return pot.gradient(check_symmetric(mats))


def conjugate(pot, mat):
    """Fenchel conjugate F*(S) = sup_D { S:D - F(D) }."""
    return pot.conjugate(mat)


def fenchel_young_gap(pot, mats, stress):
    """F(D) + F*(S) - S:D; nonnegative, zero exactly on the subdifferential."""
    mats = check_symmetric(mats)
    stress = check_symmetric(stress)
    return float(pot.value(mats) + pot.conjugate(stress) - inner(mats, stress))


def mollify(pot, delta, mats, points_per_dim=7):
    """Mollified potential value by explicit quadrature (no shortcuts).

    Uses the potential's unmollified base value, so this doubles as an
    independent check of any analytic mollification identities.
    """
    mats = check_symmetric(np.asarray(mats, dtype=float))
    moll = MatrixMollifier(mats.shape[-1], delta, points_per_dim)
    return moll.value(pot.base_value, mats)


@dataclass
class YoungFunction:
    """Convex increasing function with A(0) = 0 plus its parameters."""

    fn: callable
    params: dict = field(default_factory=dict)

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=float))

    def delta22_constants(self, lo=1e-6, hi=1e6, num=241):
        """Ratios A(2z)/A(z) on a log grid; returns (a1, a2) = (min, max)."""
        zs = np.geomspace(lo, hi, num)
        ratios = self(2.0 * zs) / self(zs)
        return float(ratios.min()), float(ratios.max())

    def rescaled(self, argument_factor=1.0, value_factor=1.0):
        base = self.fn
        return YoungFunction(
            lambda z: value_factor * base(argument_factor * np.asarray(z, float)),
            params={**self.params, "argument_factor": argument_factor,
                    "value_factor": value_factor},
        )


def build_A_R(pot, R):
    """Young function A_R certifying the coercivity of the Bregman distance.

    For the quadratic potential the Bregman distance is exactly
    mu|Q0|^2 + eta(tr Q)^2, so A(z) = (mu/2) z^2 works for every radius.  For
    power-law potentials the distance dominates a two-regime bound derived
    from the Hessian (quadratic near the base point, p-growth far away); the
    constants below are chosen so the certified inequality genuinely holds
    for all sampled increments, which for p >= 2 requires the classical
    1/2^(p-1) factor rather than the bare 1/p one.
    """
    if R <= 0:
        raise DomainError("radius R must be positive")
    if isinstance(pot, NewtonianPotential):
        mu = pot.mu
        return YoungFunction(
            lambda z: 0.5 * mu * np.asarray(z, float) ** 2,
            params={"kind": "quadratic", "mu": mu, "R": R},
        )
    if not isinstance(pot, PowerLawPotential):
        raise StructureError(f"no A_R construction for {type(pot).__name__}")

    p, mu0, mu1 = pot.p, pot.mu0, pot.mu1
    R_eff = R + pot.delta  # mollification shifts the base-point radius
    if p == 2.0:
        return YoungFunction(
            lambda z: 0.5 * mu0 * np.asarray(z, float) ** 2,
            params={"kind": "quadratic", "mu": mu0, "R": R},
        )
    if p > 2.0:
        coef = mu0 / p * 2.0 ** (1.0 - p)
        return YoungFunction(
            lambda z: coef * np.asarray(z, float) ** p,
            params={"kind": "power", "coefficient": coef, "p": p, "R": R},
        )

    # p in (1, 2): quadratic branch on [0, 1], p-branch beyond, C^1 at z = 1.
    kappa = 0.5 * mu0 * (p - 1.0) * (math.sqrt(mu1) + R_eff + 1.0) ** (p - 2.0)
    c_quad = 0.5 * mu0 * (p - 1.0) * (mu1 + (R_eff + 1.0) ** 2) ** ((p - 2.0) / 2.0)
    c = min(c_quad, kappa / 4.0, 0.25)
    alpha = beta = None
    for _ in range(200):
        alpha = c * (2.0 - p) / (1.0 - p * c)
        if 0.0 < alpha < 1.0 and c * (1.0 - alpha) + alpha <= 0.999 * kappa:
            beta = alpha * (1.0 - c)
            break
        c *= 0.5
    else:
        raise StructureError("could not fix (alpha, beta) for the p < 2 branch")

    def young(z):
        z = np.asarray(z, dtype=float)
        near = c * z**2
        far = c * (1.0 - alpha) * np.abs(z) ** p + alpha * z - beta
        return np.where(z <= 1.0, near, far)

    return YoungFunction(
        young,
        params={
            "kind": "two_branch",
            "c": c,
            "alpha": alpha,
            "beta": beta,
            "kappa": kappa,
            "c_quadratic_bound": c_quad,
            "p": p,
            "R": R,
        },
    )


def check_coercivity_S5(pot, R, trials=10000, seed=0, d=2):
    """Sample the translated-convexity inequality against the built A_R.

    Draws base points with |D| <= R and increments Q (including adversarial
    reflections Q ~ -2 D0), and returns the worst margin
    min [ F(D+Q) - F(D) - dF(D):Q - A_R(|Q0|) ]; pass means >= -1e-9.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    rng = np.random.default_rng(seed)
    young = build_A_R(pot, R)
    worst = np.inf
    batch = 512
    done = 0
    while done < trials:
        nb = min(batch, trials - done)
        D = random_symmetric(rng, d, size=nb)
        norms = frobenius(D)
        scale = rng.uniform(0.0, R, size=nb) / np.maximum(norms, 1e-30)
        D = D * scale[..., None, None]
        Q = random_symmetric(rng, d, size=nb)
        qn = frobenius(Q)
        qscale = rng.uniform(0.0, 3.0 * R, size=nb) / np.maximum(qn, 1e-30)
        Q = Q * qscale[..., None, None]
        # adversarial reflections across the base point
        flip = rng.random(nb) < 0.25
        Q[flip] = -2.0 * deviator(D[flip]) * rng.uniform(0.8, 1.2, size=flip.sum())[
            ..., None, None
        ]
        lhs = pot.value(D + Q) - pot.value(D) - inner(pot.gradient(D), Q)
        rhs = young(frobenius(deviator(Q)))
        worst = min(worst, float((lhs - rhs).min()))
        done += nb
    return worst
