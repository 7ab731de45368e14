"""Barotropic pressure laws and their pressure potentials.

A pressure law provides p(rho) together with the potential P(rho) solving
P'(rho) rho - P(rho) = p(rho), P(0) = 0.  The structural constants
``a_lower`` and ``a_upper`` bound the convexity relation between P and p
(P - a_lower*p and a_upper*p - P convex) and drive the defect-compatibility
constants used by the energy ledger.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, StructureError

_GAUSS_N = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_N)


def _check_rho(rho):
    arr = np.asarray(rho, dtype=float)
    if np.any(arr < 0):
        raise DomainError("density must be nonnegative")
    return arr


class PressureLaw:
    """Base class; subclasses implement pressure/potential and derivatives."""

    a_lower = None
    a_upper = None

    def pressure(self, rho):
        raise NotImplementedError

    def pressure_derivative(self, rho):
        raise NotImplementedError

    def potential(self, rho, strict=True):
        raise NotImplementedError

    def potential_derivative(self, rho):
        raise NotImplementedError

    def potential_second(self, rho):
        """P''(rho) = p'(rho)/rho for rho > 0."""
        arr = _check_rho(rho)
        out = np.zeros_like(arr)
        pos = arr > 0
        out[pos] = self.pressure_derivative(arr[pos]) / arr[pos]
        return out if out.ndim else float(out)

    def relative_potential(self, rho, rho_tilde):
        """Bregman distance P(rho) - P'(rho_tilde)(rho - rho_tilde) - P(rho_tilde)."""
        r = _check_rho(rho)
        rt = np.asarray(rho_tilde, dtype=float)
        if np.any(rt <= 0):
            raise DomainError("reference density must be positive")
        val = (
            self.potential(r)
            - self.potential_derivative(rt) * (r - rt)
            - self.potential(rt)
        )
        return val if np.ndim(val) else float(val)

    def relative_pressure(self, rho, rho_tilde):
        """Bregman distance of p (appears in the relative energy inequality)."""
        r = _check_rho(rho)
        rt = np.asarray(rho_tilde, dtype=float)
        if np.any(rt <= 0):
            raise DomainError("reference density must be positive")
        val = (
            self.pressure(r)
            - self.pressure_derivative(rt) * (r - rt)
            - self.pressure(rt)
        )
        return val if np.ndim(val) else float(val)

    def sympy_pressure(self, r):
        raise StructureError(
            f"{type(self).__name__} has no symbolic pressure; manufactured "
            "solutions need an analytic law"
        )


class IsentropicLaw(PressureLaw):
    """p(rho) = a rho^gamma with gamma > 1."""

    def __init__(self, a=1.0, gamma=2.0, a_lower=None, a_upper=None):
        if a <= 0:
            raise DomainError("coefficient a must be positive")
        if gamma <= 1:
            raise DomainError("exponent gamma must exceed 1")
        self.a = float(a)
        self.gamma = float(gamma)
        default = 1.0 / (self.gamma - 1.0)
        self.a_lower = default if a_lower is None else float(a_lower)
        self.a_upper = default if a_upper is None else float(a_upper)

    def pressure(self, rho):
        r = _check_rho(rho)
        val = self.a * r**self.gamma
        return val if val.ndim else float(val)

    def pressure_derivative(self, rho):
        r = _check_rho(rho)
        with np.errstate(divide="ignore"):
            val = self.a * self.gamma * r ** (self.gamma - 1.0)
        return val if val.ndim else float(val)

    def potential(self, rho, strict=True):
        r = _check_rho(rho)
        val = self.a / (self.gamma - 1.0) * r**self.gamma
        return val if val.ndim else float(val)

    def potential_derivative(self, rho):
        r = _check_rho(rho)
        val = self.a * self.gamma / (self.gamma - 1.0) * r ** (self.gamma - 1.0)
        return val if val.ndim else float(val)

    def sympy_pressure(self, r):
        return self.a * r**self.gamma

    def __repr__(self):
        return f"IsentropicLaw(a={self.a}, gamma={self.gamma})"


class IsentropicPlusLinearLaw(PressureLaw):
    """p(rho) = a rho^gamma + b rho.

    The linear part contributes b*rho*log(rho) to the potential, so P dips
    slightly negative near vacuum; the defining identity P' rho - P = p and
    P(0) = 0 still hold, and all Bregman distances remain nonnegative.
    """

    def __init__(self, a=1.0, gamma=2.0, b=0.0, a_lower=None, a_upper=None):
        if b < 0:
            raise DomainError("linear coefficient b must be nonnegative")
        self._core = IsentropicLaw(a, gamma, a_lower, a_upper)
        self.a = self._core.a
        self.gamma = self._core.gamma
        self.b = float(b)
        self.a_lower = self._core.a_lower
        self.a_upper = self._core.a_upper

    def core(self):
        """The gamma-law part, which is what the convexity hypotheses bind."""
        return self._core

    def pressure(self, rho):
        r = _check_rho(rho)
        val = self._core.pressure(r) + self.b * r
        return val if np.ndim(val) else float(val)

    def pressure_derivative(self, rho):
        val = self._core.pressure_derivative(rho) + self.b
        return val if np.ndim(val) else float(val)

    def potential(self, rho, strict=True):
        r = _check_rho(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            lin = np.where(r > 0, self.b * r * np.log(np.where(r > 0, r, 1.0)), 0.0)
        val = self._core.potential(r) + lin
        return val if val.ndim else float(val)

    def potential_derivative(self, rho):
        r = _check_rho(rho)
        with np.errstate(divide="ignore"):
            lin = self.b * (np.log(r) + 1.0) if self.b else np.zeros_like(r)
        val = self._core.potential_derivative(r) + lin
        return val if np.ndim(val) else float(val)

    def sympy_pressure(self, r):
        return self._core.sympy_pressure(r) + self.b * r

    def __repr__(self):
        return (
            f"IsentropicPlusLinearLaw(a={self.a}, gamma={self.gamma}, b={self.b})"
        )


class TabulatedLaw(PressureLaw):
    """Pressure law interpolated monotonically from (rho, p) samples.

    Interpolation is piecewise-cubic monotone (PCHIP); below the first sample
    the law continues as the power law fitted to the two smallest samples.
    The pressure potential is computed from P(rho) = rho * I(rho) with
    I(rho) = int_0^rho p(s)/s^2 ds; the vacuum end of that integral is
    evaluated with the substitution s = t^2 and converges only if the fitted
    near-vacuum growth exponent exceeds 1.
    """

    def __init__(self, rho_samples, p_samples, a_lower=1.0, a_upper=1.0):
        r = np.asarray(rho_samples, dtype=float)
        p = np.asarray(p_samples, dtype=float)
        if r.ndim != 1 or r.shape != p.shape or r.size < 3:
            raise StructureError("need at least 3 (rho, p) samples")
        if np.any(np.diff(r) <= 0):
            raise StructureError("rho samples must be strictly increasing")
        if r[0] <= 0:
            if r[0] < 0 or p[0] != 0:
                raise StructureError("samples must have rho >= 0 and p(0) = 0")
            r, p = r[1:], p[1:]
        if np.any(p <= 0):
            raise StructureError("pressure samples must be positive for rho > 0")
        self.rho_samples = r
        self.p_samples = p
        self.a_lower = float(a_lower)
        self.a_upper = float(a_upper)
        self._interp = PchipInterpolator(r, p, extrapolate=False)
        self._dinterp = self._interp.derivative()
        # near-vacuum growth exponent from the two smallest samples
        self._exponent = float(np.log(p[1] / p[0]) / np.log(r[1] / r[0]))
        self._cumulative = None

    @property
    def vacuum_integrable(self):
        return self._exponent > 1.0 + 1e-9

    def _power_tail_pressure(self, rho):
        return self.p_samples[0] * (rho / self.rho_samples[0]) ** self._exponent

    def pressure(self, rho):
        r = _check_rho(rho)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r > self.rho_samples[-1] * (1 + 1e-12)):
            raise DomainError("density beyond the tabulated range")
        out = np.empty_like(r)
        low = r < self.rho_samples[0]
        out[low] = self._power_tail_pressure(r[low])
        hi = ~low
        out[hi] = self._interp(np.minimum(r[hi], self.rho_samples[-1]))
        return float(out[0]) if scalar else out

    def pressure_derivative(self, rho):
        r = _check_rho(rho)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        low = r < self.rho_samples[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[low] = np.where(
                r[low] > 0,
                self._exponent * self._power_tail_pressure(r[low]) / r[low],
                0.0 if self._exponent > 1 else np.inf,
            )
        out[~low] = self._dinterp(np.minimum(r[~low], self.rho_samples[-1]))
        return float(out[0]) if scalar else out

    def _vacuum_tail(self, upper):
        """int_0^upper p(s)/s^2 ds for upper <= first sample, via s = t^2.

        The substituted integrand 2 p(t^2) / t^3 ~ t^(2e-3) is integrable for
        e > 1; geometric panels toward 0 handle the mild singularity.
        """
        if not self.vacuum_integrable:
            raise StructureError(
                "p(s)/s^2 is not integrable near vacuum "
                f"(fitted exponent {self._exponent:.3f} <= 1)"
            )
        tmax = np.sqrt(upper)
        total = 0.0
        hi = tmax
        for _ in range(60):
            lo = hi / 2.0
            mid = (hi + lo) / 2.0
            half = (hi - lo) / 2.0
            ts = mid + half * _GL_NODES
            vals = 2.0 * self._power_tail_pressure(ts**2) / ts**3
            total += half * float(vals @ _GL_WEIGHTS)
            hi = lo
            if hi**2 * self._power_tail_pressure(hi**2) / hi**2 < 1e-18 * (1 + total):
                break
        return total

    def _build_cumulative(self):
        r0, r1 = self.rho_samples[0], self.rho_samples[-1]
        base = self._vacuum_tail(r0)
        grid = np.geomspace(r0, r1, 4097)
        # integrate p/s^2 ds = (p/s) dlog s on the log grid, panel by panel
        logg = np.log(grid)
        integrand = self._interp(grid) / grid
        cum = np.zeros_like(grid)
        # composite Gauss on each log panel for smooth accuracy
        mids = (logg[1:] + logg[:-1]) / 2.0
        halfs = (logg[1:] - logg[:-1]) / 2.0
        ts = mids[:, None] + halfs[:, None] * _GL_NODES[None, :]
        ss = np.exp(ts)
        vals = self._interp(np.clip(ss, r0, r1)) / ss
        panel = halfs * (vals @ _GL_WEIGHTS)
        cum[1:] = np.cumsum(panel)
        self._cumulative = PchipInterpolator(logg, base + cum, extrapolate=False)

    def _antiderivative(self, rho):
        """I(rho) = int_0^rho p(s)/s^2 ds, vectorized."""
        if self._cumulative is None:
            self._build_cumulative()
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.empty_like(r)
        r0 = self.rho_samples[0]
        low = r < r0
        if np.any(low):
            e = self._exponent
            coef = self.p_samples[0] * r0 ** (-e) / (e - 1.0)
            out[low] = np.where(r[low] > 0, coef * r[low] ** (e - 1.0), 0.0)
        if np.any(~low):
            out[~low] = self._cumulative(np.log(np.minimum(r[~low], self.rho_samples[-1])))
        return out

    def potential(self, rho, strict=True):
        r = _check_rho(rho)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if not self.vacuum_integrable:
            if strict:
                raise StructureError(
                    "vacuum quadrature of p(s)/s^2 diverges; the pressure "
                    "potential with P(0)=0 does not exist for this table"
                )
            # normalization P(1)-free fallback: P1(rho) = rho * int_1^rho p/s^2;
            # convexity tests are invariant to the linear term this drops.
            if self._cumulative is None:
                grid = np.geomspace(self.rho_samples[0], self.rho_samples[-1], 4097)
                logg = np.log(grid)
                mids = (logg[1:] + logg[:-1]) / 2.0
                halfs = (logg[1:] - logg[:-1]) / 2.0
                ts = mids[:, None] + halfs[:, None] * _GL_NODES[None, :]
                ss = np.exp(ts)
                vals = self._interp(np.clip(ss, grid[0], grid[-1])) / ss
                cum = np.concatenate([[0.0], np.cumsum(halfs * (vals @ _GL_WEIGHTS))])
                self._cumulative = PchipInterpolator(logg, cum, extrapolate=False)
            ref = self._cumulative(np.log(np.clip(r, self.rho_samples[0], None)))
            vals = r * (ref - self._cumulative(np.array([0.0]))[0])
            out = np.where(r >= self.rho_samples[0], vals, 0.0)
            return float(out[0]) if scalar else out
        out = r * self._antiderivative(r)
        return float(out[0]) if scalar else out

    def potential_derivative(self, rho):
        r = _check_rho(rho)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r > 0, self.pressure(r) / np.where(r > 0, r, 1.0), 0.0)
        out = self._antiderivative(r) + ratio
        return float(out[0]) if scalar else out

    def __repr__(self):
        return (
            f"TabulatedLaw({self.rho_samples.size} samples on "
            f"[{self.rho_samples[0]:g}, {self.rho_samples[-1]:g}])"
        )


def load_tabulated_csv(path, a_lower=1.0, a_upper=1.0):
    """Load a tabulated law from a two-column CSV (rho, p); header optional."""
    rhos, ps = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                r, p = float(row[0]), float(row[1])
            except ValueError:
                continue  # header line
            rhos.append(r)
            ps.append(p)
    return TabulatedLaw(rhos, ps, a_lower=a_lower, a_upper=a_upper)


@dataclass
class StructureReport:
    """Outcome of the structural-hypothesis checks on a pressure law."""

    monotone: bool
    monotone_worst: float
    convex_lower: bool
    convex_lower_worst: float
    convex_upper: bool
    convex_upper_worst: float
    coercive: bool
    coercivity_constant: float
    coercivity_exponent: float
    vacuum_integrable: bool
    messages: list = field(default_factory=list)

    @property
    def passed(self):
        return (
            self.monotone
            and self.convex_lower
            and self.convex_upper
            and self.coercive
            and self.vacuum_integrable
        )


def _second_divided_differences(x, f):
    """Normalized curvature proxy on a non-uniform grid; >= 0 iff convex samples."""
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return 2.0 * ((f[2:] - f[1:-1]) / h2 - (f[1:-1] - f[:-2]) / h1) / (h1 + h2)


def check_structure(law, sample_count=200, rho_range=(1e-3, 1e3)):
    """Sample a log grid and verify monotonicity of p, convexity of
    P - a_lower*p and a_upper*p - P, and the derived coercivity
    P(rho) >= a rho^(1 + 1/a_upper) on [1, rho_max] for some fitted a > 0.
    """
    if sample_count < 3:
        raise DomainError("sample_count must be at least 3")
    lo, hi = rho_range
    if isinstance(law, TabulatedLaw):
        lo = max(lo, law.rho_samples[0])
        hi = min(hi, law.rho_samples[-1])
    rhos = np.geomspace(lo, hi, sample_count)
    messages = []

    p = law.pressure(rhos)
    dp = np.diff(p)
    monotone_worst = float(dp.min())
    monotone = bool(monotone_worst > -1e-12 * max(1.0, float(np.abs(p).max())))

    vacuum_ok = True
    try:
        P = law.potential(rhos)
    except StructureError as exc:
        vacuum_ok = False
        messages.append(str(exc))
        P = law.potential(rhos, strict=False)

    def convexity(values):
        dd = _second_divided_differences(rhos, values)
        scale = np.maximum.reduce(
            [np.abs(values[:-2]), np.abs(values[1:-1]), np.abs(values[2:]), np.ones_like(dd)]
        )
        margin = dd + 1e-10 * scale
        return bool(np.all(margin >= 0)), float((dd / scale).min())

    convex_lower, worst_lower = convexity(P - law.a_lower * p)
    convex_upper, worst_upper = convexity(law.a_upper * p - P)

    gamma_prime = 1.0 + 1.0 / law.a_upper
    mask = rhos >= 1.0
    if np.any(mask):
        ratios = P[mask] / rhos[mask] ** gamma_prime
        fitted = float(ratios.min())
    else:
        fitted = float("nan")
        messages.append("coercivity range [1, rho_max] empty for this law")
    coercive = bool(np.isfinite(fitted) and fitted > 0.0)

    if not monotone:
        messages.append("pressure is not strictly increasing on the sample grid")
    if not convex_lower:
        messages.append("P - a_lower*p fails sampled convexity")
    if not convex_upper:
        messages.append("a_upper*p - P fails sampled convexity")
    if not coercive:
        messages.append(
            f"coercivity P >= a rho^{gamma_prime:.4g} fails (fitted a = {fitted:.3g})"
        )

    return StructureReport(
        monotone=monotone,
        monotone_worst=monotone_worst,
        convex_lower=convex_lower,
        convex_lower_worst=worst_lower,
        convex_upper=convex_upper,
        convex_upper_worst=worst_upper,
        coercive=coercive,
        coercivity_constant=fitted,
        coercivity_exponent=gamma_prime,
        vacuum_integrable=vacuum_ok,
        messages=messages,
    )


def make_law(spec):
    """Build a pressure law from a scenario dictionary."""
    kind = spec.get("kind", "isentropic").lower()
    if kind == "isentropic":
        return IsentropicLaw(
            a=spec.get("a", 1.0),
            gamma=spec.get("gamma", 2.0),
            a_lower=spec.get("a_lower"),
            a_upper=spec.get("a_upper"),
        )
    if kind in ("isentropic_plus_linear", "extended"):
        return IsentropicPlusLinearLaw(
            a=spec.get("a", 1.0),
            gamma=spec.get("gamma", 2.0),
            b=spec.get("b", 0.0),
            a_lower=spec.get("a_lower"),
            a_upper=spec.get("a_upper"),
        )
    if kind == "tabulated":
        if "csv" in spec:
            return load_tabulated_csv(
                spec["csv"], spec.get("a_lower", 1.0), spec.get("a_upper", 1.0)
            )
        return TabulatedLaw(
            spec["rho"], spec["p"], spec.get("a_lower", 1.0), spec.get("a_upper", 1.0)
        )
    raise DomainError(f"unknown pressure law kind {kind!r}")
