"""Fitness distributions on (0, 1] and integration against them.

A fitness distribution mu is a probability measure with bounded support and
essential supremum normalised to 1. Four representations are supported:

* :class:`FiniteDiscrete` -- finitely many atoms (an atom at 1 is simply a
  support point at 1.0),
* :class:`PiecewiseDensity` -- piecewise-polynomial Lebesgue density plus an
  optional explicit atom at 1,
* :class:`BetaShape` -- a Beta(alpha, beta) body (ess sup already 1) plus an
  optional atom at 1,
* :class:`Uniform01` -- the standard uniform law.

Integration is against a small catalog of integrands (rational weights
f/(theta-f), plain polynomials/indicators, and the Yule-Simon impact
factors). Divergent integrals are reported as ``math.inf`` rather than
raised: the phase test downstream legitimately compares an infinite
integral against a finite threshold.

Numerics: closed forms are used where an antiderivative exists (discrete
sums, polynomial densities against rational weights); otherwise adaptive
quadrature. Integrands with a 1/(1-f) factor are integrated after the
substitution f = 1 - exp(-t), which cancels the endpoint singularity
analytically and maps the last piece onto an exponentially decaying
integrand on [t0, inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate as scipy_integrate
from scipy import special

MASS_TOL = 1e-12
DEFAULT_TOL = 1e-10
_QUAD_LIMIT = 200


class MeasureError(ValueError):
    """Invalid fitness-distribution construction or operation."""


# ---------------------------------------------------------------------------
# integrand catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Integrand:
    """A catalog integrand, optionally restricted to a window (lo, hi].

    kind:
      * ``rational``      -- p(f) / (theta - f) with polynomial numerator p
      * ``poly``          -- plain polynomial of f
      * ``impact_factor`` -- Yule-Simon pmf at k with rate theta/f
      * ``impact_survival`` -- Yule-Simon survival P(K >= k)
      * ``impact_mean_tail`` -- sum_{j >= k} j * pmf(j)

    ``include_one`` controls whether mass sitting exactly at f = 1 (explicit
    atoms and discrete support points) belongs to the window. Continuous
    parts are unaffected.
    """

    kind: str
    coeffs: tuple[float, ...] = ()
    theta: float = 0.0
    k: int = 0
    lo: float = 0.0
    hi: float = 1.0
    include_one: bool = True

    def restrict(self, lo: float, hi: float) -> "Integrand":
        return replace(self, lo=max(self.lo, lo), hi=min(self.hi, hi))

    def without_point_one(self) -> "Integrand":
        return replace(self, include_one=False)

    @property
    def pole_at_one(self) -> bool:
        """True when the integrand carries a 1/(1-f) factor."""
        if self.kind == "rational":
            return self.theta == 1.0 and _polyval(self.coeffs, 1.0) != 0.0
        if self.kind == "impact_mean_tail":
            return self.theta == 1.0
        return False

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "poly":
            out = _polyval(self.coeffs, f)
        elif self.kind == "rational":
            den = self.theta - f
            num = _polyval(self.coeffs, f)
            with np.errstate(divide="ignore"):
                out = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.inf)
        elif self.kind == "impact_factor":
            out = self.theta / (self.theta + self.k * f) * _yule_survival(f, self.theta, self.k)
        elif self.kind == "impact_survival":
            out = _yule_survival(f, self.theta, self.k)
        elif self.kind == "impact_mean_tail":
            gap = self.theta - f
            with np.errstate(divide="ignore"):
                mean_factor = np.where(gap > 0.0, self.theta / np.where(gap > 0.0, gap, 1.0), np.inf)
            out = self.k * _yule_survival(f, self.theta, self.k) * mean_factor
        else:  # pragma: no cover - constructors forbid it
            raise MeasureError(f"unknown integrand kind {self.kind!r}")
        return out if out.ndim else float(out)


def _polyval(coeffs: Sequence[float], f):
    return npoly.polyval(f, list(coeffs) if coeffs else [0.0])


def _yule_survival(f, theta: float, k: int):
    """prod_{i=1}^{k-1} i*f / (i*f + theta); equals P(K >= k) at rate theta/f."""
    out = np.ones_like(np.asarray(f, dtype=float))
    for i in range(1, k):
        out = out * (i * f) / (i * f + theta)
    return out


def f_over_theta_minus_f(theta: float) -> Integrand:
    """f / (theta - f); the integrand defining the normalisation root."""
    if theta < 1.0:
        raise MeasureError("pole location theta must be >= 1")
    return Integrand("rational", coeffs=(0.0, 1.0), theta=float(theta))


def theta_over_theta_minus_f(theta: float) -> Integrand:
    """theta / (theta - f); the fit-get-richer density factor."""
    if theta < 1.0:
        raise MeasureError("pole location theta must be >= 1")
    return Integrand("rational", coeffs=(float(theta),), theta=float(theta))


def one_over_one_minus_f() -> Integrand:
    """1 / (1 - f); the condensation density factor."""
    return Integrand("rational", coeffs=(1.0,), theta=1.0)


def f_over_one_minus_f() -> Integrand:
    """f / (1 - f); the phase-boundary integrand."""
    return Integrand("rational", coeffs=(0.0, 1.0), theta=1.0)


def fitness_identity() -> Integrand:
    """The coordinate f itself (first moment)."""
    return Integrand("poly", coeffs=(0.0, 1.0))


def window_indicator(lo: float, hi: float) -> Integrand:
    """Indicator of the half-open window (lo, hi]."""
    if not lo < hi:
        raise MeasureError(f"empty window ({lo}, {hi}]")
    return Integrand("poly", coeffs=(1.0,), lo=float(lo), hi=float(hi))


def impact_factor(theta_star: float, k: int) -> Integrand:
    """Density factor of the impact-k fitness law (Yule-Simon pmf at k)."""
    if k < 1:
        raise MeasureError("impact level k must be >= 1")
    if theta_star < 1.0:
        raise MeasureError("theta_star must be >= 1")
    return Integrand("impact_factor", theta=float(theta_star), k=int(k))


def impact_survival(theta_star: float, k: int) -> Integrand:
    """P(K >= k) under the Yule-Simon impact law; tail of the pmf sum."""
    if k < 1:
        raise MeasureError("impact level k must be >= 1")
    return Integrand("impact_survival", theta=float(theta_star), k=int(k))


def impact_mean_tail(theta_star: float, k: int) -> Integrand:
    """sum_{j >= k} j * pmf(j) under the Yule-Simon impact law."""
    if k < 1:
        raise MeasureError("impact level k must be >= 1")
    return Integrand("impact_mean_tail", theta=float(theta_star), k=int(k))


# ---------------------------------------------------------------------------
# distribution representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteDiscrete:
    """Finitely many atoms (value, mass); values sorted, masses sum to 1."""

    points: tuple[tuple[float, float], ...]

    def __init__(self, points):
        merged: dict[float, float] = {}
        for value, mass in points:
            value = float(value)
            mass = float(mass)
            if not math.isfinite(value) or value <= 0.0:
                raise MeasureError(f"support point {value} outside (0, inf)")
            if mass < 0.0:
                raise MeasureError("negative point mass")
            if mass > 0.0:
                merged[value] = merged.get(value, 0.0) + mass
        if len(merged) < 2:
            raise MeasureError("discrete fitness law needs >= 2 support points (no Dirac)")
        total = sum(merged.values())
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {total} != 1")
        object.__setattr__(self, "points", tuple(sorted(merged.items())))

    @property
    def ess_sup(self) -> float:
        return self.points[-1][0]

    @property
    def mass_at_one(self) -> float:
        return sum(m for v, m in self.points if v == 1.0)

    @property
    def atom_at_one(self) -> float:
        return self.mass_at_one

    def values_masses(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.array([v for v, _ in self.points])
        masses = np.array([m for _, m in self.points])
        return values, masses


@dataclass(frozen=True)
class PiecewiseDensity:
    """Piecewise-polynomial density plus an optional atom at f = 1.

    ``coeffs[j]`` are ascending-power polynomial coefficients of the density
    on (edges[j], edges[j+1]). The density must be nonnegative and the body
    mass plus the atom must equal 1.
    """

    edges: tuple[float, ...]
    coeffs: tuple[tuple[float, ...], ...]
    atom_at_one: float = 0.0

    def __init__(self, edges, coeffs, atom_at_one=0.0):
        edges = tuple(float(e) for e in edges)
        coeffs = tuple(tuple(float(c) for c in piece) for piece in coeffs)
        atom = float(atom_at_one)
        if len(edges) < 2 or len(coeffs) != len(edges) - 1:
            raise MeasureError("need len(edges) == len(coeffs) + 1 >= 2")
        if edges[0] < 0.0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise MeasureError("edges must be nondecreasing and start >= 0")
        if not 0.0 <= atom <= 1.0:
            raise MeasureError("atom mass must lie in [0, 1]")
        for (a, b), piece in zip(zip(edges, edges[1:]), coeffs):
            grid = np.linspace(a, b, 257)
            if np.min(_polyval(piece, grid)) < -1e-9:
                raise MeasureError(f"density negative on ({a}, {b})")
        body = sum(
            _poly_segment_integral(piece, a, b)
            for (a, b), piece in zip(zip(edges, edges[1:]), coeffs)
        )
        if abs(body + atom - 1.0) > MASS_TOL:
            raise MeasureError(f"body mass {body} + atom {atom} != 1")
        if body <= 0.0:
            raise MeasureError("density carries no mass (Dirac at 1 is not allowed)")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "atom_at_one", atom)

    @property
    def ess_sup(self) -> float:
        sup = 1.0 if self.atom_at_one > 0.0 else 0.0
        for (a, b), piece in zip(zip(self.edges, self.edges[1:]), self.coeffs):
            if _poly_segment_integral(piece, a, b) > 1e-15:
                sup = max(sup, b)
        return sup

    @property
    def mass_at_one(self) -> float:
        return self.atom_at_one

    def density_at_one(self) -> float:
        """Density value at the upper edge when the support reaches 1."""
        for (a, b), piece in zip(zip(self.edges, self.edges[1:]), self.coeffs):
            if a < 1.0 <= b:
                value = _polyval(piece, 1.0)
                scale = max((abs(c) for c in piece), default=0.0)
                return 0.0 if abs(value) <= 1e-12 * max(scale, 1.0) else float(value)
        return 0.0


@dataclass(frozen=True)
class BetaShape:
    """Beta(alpha, beta) body (support (0, 1)) plus an optional atom at 1."""

    alpha: float
    beta: float
    atom_at_one: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise MeasureError("Beta shape parameters must be positive")
        if not 0.0 <= self.atom_at_one < 1.0:
            raise MeasureError("atom mass must lie in [0, 1)")

    @property
    def ess_sup(self) -> float:
        return 1.0

    @property
    def mass_at_one(self) -> float:
        return self.atom_at_one


@dataclass(frozen=True)
class Uniform01:
    """Standard uniform fitness law on (0, 1]."""

    @property
    def ess_sup(self) -> float:
        return 1.0

    @property
    def atom_at_one(self) -> float:
        return 0.0

    @property
    def mass_at_one(self) -> float:
        return 0.0

    def _as_piecewise(self) -> PiecewiseDensity:
        return PiecewiseDensity((0.0, 1.0), ((1.0,),))


FitnessDistribution = Union[FiniteDiscrete, PiecewiseDensity, BetaShape, Uniform01]


def require_normalized(dist: FitnessDistribution) -> None:
    if dist.ess_sup != 1.0:
        raise MeasureError(
            f"fitness law has ess sup {dist.ess_sup}; call normalize_esssup first"
        )


def normalize_esssup(dist: FitnessDistribution) -> FitnessDistribution:
    """Push the law forward under f -> f / ess_sup so that ess sup becomes 1."""
    s = dist.ess_sup
    if not (math.isfinite(s) and s > 0.0):
        raise MeasureError(f"essential supremum {s} not normalisable")
    if s == 1.0:
        return dist
    if isinstance(dist, FiniteDiscrete):
        return FiniteDiscrete(tuple((v / s, m) for v, m in dist.points))
    if isinstance(dist, PiecewiseDensity):
        if dist.atom_at_one > 0.0:
            raise MeasureError(
                "cannot rescale a density with an atom at 1: the atom would move "
                f"to {1.0 / s}, which this representation cannot hold"
            )
        edges = tuple(e / s for e in dist.edges)
        coeffs = tuple(
            tuple(c * s ** (i + 1) for i, c in enumerate(piece)) for piece in dist.coeffs
        )
        return PiecewiseDensity(edges, coeffs)
    return dist  # BetaShape / Uniform01 are normalised by construction


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def quantile(dist: FitnessDistribution, u):
    """Inverse CDF; maps one uniform in [0, 1) to one fitness in (0, 1].

    Every representation consumes exactly one uniform per sample. Discrete
    laws invert the CDF in ascending value order; densities place the atom
    at 1 (when present) on the top quantile range [1 - atom, 1).
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if isinstance(dist, FiniteDiscrete):
        values, masses = dist.values_masses()
        cum = np.cumsum(masses)
        out = values[np.minimum(np.searchsorted(cum, u, side="right"), len(values) - 1)]
    elif isinstance(dist, Uniform01):
        out = 1.0 - u
    else:
        atom = dist.atom_at_one
        body = 1.0 - atom
        out = np.ones_like(u)
        inside = u < body
        if np.any(inside):
            if isinstance(dist, BetaShape):
                body_q = special.betaincinv(dist.alpha, dist.beta, u[inside] / body)
            else:
                body_q = _piecewise_quantile(dist, u[inside])
            out[inside] = body_q
    out = np.maximum(out, np.nextafter(0.0, 1.0))
    return float(out[0]) if scalar else out


def _piecewise_cdf(dist: PiecewiseDensity, x: np.ndarray) -> np.ndarray:
    edges = np.asarray(dist.edges)
    piece_mass = np.array(
        [
            _poly_segment_integral(piece, a, b)
            for (a, b), piece in zip(zip(dist.edges, dist.edges[1:]), dist.coeffs)
        ]
    )
    cum = np.concatenate([[0.0], np.cumsum(piece_mass)])
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(dist.coeffs) - 1)
    out = np.empty_like(x)
    for j, piece in enumerate(dist.coeffs):
        mask = idx == j
        if np.any(mask):
            anti = npoly.polyint(list(piece))
            out[mask] = cum[j] + npoly.polyval(np.clip(x[mask], dist.edges[j], dist.edges[j + 1]), anti) - npoly.polyval(dist.edges[j], anti)
    out[x <= edges[0]] = 0.0
    out[x >= edges[-1]] = cum[-1]
    return out


def _piecewise_quantile(dist: PiecewiseDensity, targets: np.ndarray) -> np.ndarray:
    lo = np.full_like(targets, dist.edges[0])
    hi = np.full_like(targets, dist.edges[-1])
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = _piecewise_cdf(dist, mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


def sample(dist: FitnessDistribution, rng) -> float:
    """Draw one fitness; consumes exactly one uniform from ``rng.random()``."""
    return quantile(dist, rng.random())


def sample_many(dist: FitnessDistribution, rng, size: int) -> np.ndarray:
    """Vectorised sampling; consumes exactly ``size`` uniforms."""
    return np.atleast_1d(quantile(dist, rng.random(size)))


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def _poly_segment_integral(coeffs, a: float, b: float) -> float:
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0:
        return 0.0
    anti = npoly.polyint(coeffs)
    return float(npoly.polyval(b, anti) - npoly.polyval(a, anti))


def _diverges(dist: FitnessDistribution, g: Integrand) -> bool:
    if not g.pole_at_one or g.hi < 1.0:
        return False
    if g.include_one and dist.mass_at_one > 0.0:
        return True
    if isinstance(dist, FiniteDiscrete):
        return False
    if isinstance(dist, Uniform01):
        return True
    if isinstance(dist, BetaShape):
        return dist.beta <= 1.0
    return dist.density_at_one() != 0.0


def integrate(
    dist: FitnessDistribution,
    g: Integrand,
    *,
    tol: float = DEFAULT_TOL,
    method: str = "auto",
) -> float:
    """Integrate a catalog integrand against mu over the window (lo, hi].

    Returns ``math.inf`` for divergent integrals. ``method`` is one of
    ``auto`` (closed form when available, quadrature otherwise), ``exact``
    (closed form or raise) and ``quadrature``.
    """
    if method not in ("auto", "exact", "quadrature"):
        raise MeasureError(f"unknown method {method!r}")
    if not isinstance(g, Integrand):
        raise MeasureError("integrand must come from the measures catalog")
    if g.lo >= g.hi:
        return 0.0
    if _diverges(dist, g):
        return math.inf

    if isinstance(dist, FiniteDiscrete):
        return _integrate_discrete(dist, g)
    if isinstance(dist, Uniform01):
        return integrate(dist._as_piecewise(), g, tol=tol, method=method)

    atom_part = 0.0
    if dist.atom_at_one > 0.0 and g.hi >= 1.0 and g.include_one:
        value = g(1.0)
        if math.isinf(value):
            return math.inf
        atom_part = dist.atom_at_one * value

    if isinstance(dist, BetaShape):
        if method == "exact":
            exact = _beta_exact(dist, g)
            if exact is None:
                raise MeasureError("no closed form for this integrand against a Beta body")
            return exact + atom_part
        if method == "auto":
            exact = _beta_exact(dist, g)
            if exact is not None:
                return exact + atom_part
        return _beta_quad(dist, g, tol) + atom_part

    # piecewise-polynomial density
    if method == "quadrature":
        return _piecewise_quad(dist, g, tol) + atom_part
    exact = _piecewise_exact(dist, g)
    if exact is not None:
        return exact + atom_part
    if method == "exact":
        raise MeasureError(f"no closed form for integrand kind {g.kind!r}")
    return _piecewise_quad(dist, g, tol) + atom_part


def _integrate_discrete(dist: FiniteDiscrete, g: Integrand) -> float:
    total = 0.0
    for v, m in dist.points:
        if not (g.lo < v <= g.hi):
            continue
        if v == 1.0 and not g.include_one:
            continue
        value = g(v)
        if math.isinf(value):
            return math.inf
        total += m * value
    return total


def _piece_windows(dist: PiecewiseDensity, g: Integrand):
    for (a, b), piece in zip(zip(dist.edges, dist.edges[1:]), dist.coeffs):
        lo, hi = max(a, g.lo), min(b, g.hi)
        if lo < hi:
            yield lo, hi, piece


def _piecewise_exact(dist: PiecewiseDensity, g: Integrand):
    if g.kind not in ("poly", "rational"):
        return None
    total = 0.0
    for lo, hi, piece in _piece_windows(dist, g):
        if g.kind == "poly":
            prod = npoly.polymul(list(piece), list(g.coeffs))
            total += _poly_segment_integral(prod, lo, hi)
            continue
        num = npoly.polymul(list(piece), list(g.coeffs))
        quotient, remainder = npoly.polydiv(num, [g.theta, -1.0])
        resid = float(remainder[0]) if len(remainder) else 0.0
        scale = max(np.max(np.abs(num)), 1.0)
        if abs(resid) <= 1e-12 * scale:
            resid = 0.0
        total += _poly_segment_integral(quotient, lo, hi)
        if resid != 0.0:
            if g.theta - hi <= 0.0:
                return None  # convergent only through cancellation; use quadrature
            total += resid * (math.log(g.theta - lo) - math.log(g.theta - hi))
    return total


def _piecewise_quad(dist: PiecewiseDensity, g: Integrand, tol: float) -> float:
    total = 0.0
    for lo, hi, piece in _piece_windows(dist, g):
        total += _quad_segment(lambda f, omf, p=piece: _polyval(p, f), lo, hi, g, tol)
    return total


def _beta_exact(dist: BetaShape, g: Integrand):
    if g.kind != "poly" or len(g.coeffs) > 2:
        return None
    body = 1.0 - dist.atom_at_one
    lo, hi = max(g.lo, 0.0), min(g.hi, 1.0)
    a, b = dist.alpha, dist.beta
    total = 0.0
    if len(g.coeffs) >= 1 and g.coeffs[0] != 0.0:
        total += g.coeffs[0] * (special.betainc(a, b, hi) - special.betainc(a, b, lo))
    if len(g.coeffs) == 2 and g.coeffs[1] != 0.0:
        mean = a / (a + b)
        total += g.coeffs[1] * mean * (
            special.betainc(a + 1.0, b, hi) - special.betainc(a + 1.0, b, lo)
        )
    return body * total


def _beta_quad(dist: BetaShape, g: Integrand, tol: float) -> float:
    body = 1.0 - dist.atom_at_one
    lo, hi = max(g.lo, 0.0), min(g.hi, 1.0)
    if lo >= hi:
        return 0.0
    lbeta = special.betaln(dist.alpha, dist.beta)
    am1, bm1 = dist.alpha - 1.0, dist.beta - 1.0

    def density(f, omf):
        with np.errstate(divide="ignore"):
            return np.exp(am1 * np.log(f) + bm1 * np.log(omf) - lbeta)

    return body * _quad_segment(density, lo, hi, g, tol)


def _quad_segment(density, lo: float, hi: float, g: Integrand, tol: float) -> float:
    """Quadrature of g * density over (lo, hi); hi == 1 uses f = 1 - exp(-t).

    ``density(f, one_minus_f)`` receives 1 - f computed exactly in t-space so
    that singular powers of (1 - f) keep full precision near the endpoint.
    """
    epsrel = max(tol, 1e-13)
    if hi < 1.0:
        def fn(f):
            return float(g(f) * density(f, 1.0 - f))

        value, _ = scipy_integrate.quad(
            fn, lo, hi, epsabs=tol, epsrel=epsrel, limit=_QUAD_LIMIT
        )
        return value

    t0 = -math.log1p(-lo) if lo > 0.0 else 0.0
    theta_gap = g.theta - 1.0 if g.kind in ("rational", "impact_mean_tail") else None

    def fn_t(t):
        w = math.exp(-t)
        f = 1.0 - w
        rho = density(f, w)
        if rho == 0.0:
            return 0.0
        if g.kind == "rational":
            # p(f)/(theta-f) * e^{-t}; theta - f = (theta-1) + e^{-t} exactly
            return float(_polyval(g.coeffs, f)) * w / (theta_gap + w) * rho
        if g.kind == "impact_mean_tail":
            surv = float(_yule_survival(f, g.theta, g.k))
            return g.k * surv * g.theta / (theta_gap + w) * w * rho
        return float(g(f)) * w * rho

    value, _ = scipy_integrate.quad(
        fn_t, t0, np.inf, epsabs=tol, epsrel=epsrel, limit=_QUAD_LIMIT
    )
    return value


def mass_between(
    dist: FitnessDistribution,
    lo: float,
    hi: float,
    *,
    include_one: bool = True,
    tol: float = DEFAULT_TOL,
) -> float:
    """mu((lo, hi]); ``include_one`` toggles mass sitting exactly at 1."""
    if lo >= hi:
        return 0.0
    g = window_indicator(lo, hi)
    if not include_one:
        g = g.without_point_one()
    return integrate(dist, g, tol=tol)


def mean_fitness(dist: FitnessDistribution, *, tol: float = DEFAULT_TOL) -> float:
    return integrate(dist, fitness_identity(), tol=tol)
