"""Closed-form and asymptotic quantities of the branching-with-mutations model.

Everything here is driven by the scale function W of the population process
(and W* of the clonal process): one-dimensional marginals, the expected
allelic frequency spectrum at a finite horizon, its exponential-growth limit
constants J^{i,a} / J, the tail behaviour of the limiting spectrum, and the
deterministic scales at which old/large families live.

For exponential lifespans (linear birth-death processes, rates b and d)
every formula is evaluated in closed form through the unified clonal
parameters (b*, d*, r*).  For general lifespans W is obtained by solving
the renewal equation W = 1 + tail * W numerically (Gregory-corrected
trapezoidal marching, third order) and the model-specific formulas are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, simpson
from scipy.optimize import brentq

from .model import (
    ClonalParams,
    Criticality,
    LifespanMeasure,
    ModelI,
    ModelII,
    ModelParams,
    clonal_lifespan,
    clonal_params,
    mean_offspring,
    mutation_intensity,
)

__all__ = [
    "ScaleFunction",
    "AsymptoticConstants",
    "psi",
    "psi_prime",
    "malthusian",
    "growth_exponent",
    "scale_w",
    "scale_w_clonal",
    "marginal_z",
    "survival_probability",
    "expected_spectrum_density",
    "expected_spectrum",
    "expected_total_types",
    "expected_old_families",
    "expected_large_families",
    "expected_large_family_offset_ratio",
    "limit_spectrum_J",
    "J_total",
    "tail_supercritical",
    "tail_critical",
    "critical_limit_spectrum",
    "asymptotic_constants",
    "old_family_scale",
    "old_family_limit",
    "age_point_intensity",
    "large_family_scale_II",
    "subsequence_times",
    "conjecture_scale_I",
    "supercritical_family_scale",
]

_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=200)
# Truncation point of integrals against an exp(-rate*u) envelope.
_ENVELOPE_CUTOFF = -math.log(1e-14)


# ---------------------------------------------------------------------------
# psi and its root

def psi(measure: LifespanMeasure | ModelParams, lam: float) -> float:
    """Branching mechanism psi(lam) = lam - integral of (1 - e^{-lam u}).

    Closed form for exponential lifespans; quadrature against the tail
    (integration by parts) otherwise.  Convex, psi(0) = 0, psi'(0) = 1 - m.
    """
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if lam == 0.0:
        return 0.0
    if measure.kind == "exponential":
        b, d = measure.b, measure.d
        return lam * (lam - b + d) / (lam + d)
    if measure.kind == "immortal":
        return lam - measure.b
    tail = measure.tail_values
    h = measure.grid_step
    y = np.arange(tail.size) * h
    integral = simpson(np.exp(-lam * y) * tail, dx=h)
    if tail[-1] > 0.0 and lam > 0.0:
        # constant tail beyond the grid (mass parked at +infinity)
        integral += tail[-1] * math.exp(-lam * y[-1]) / lam
    return lam * (1.0 - integral)


def psi_prime(measure: LifespanMeasure | ModelParams, lam: float) -> float:
    """Derivative of psi; psi'(0) = 1 - m."""
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if measure.kind == "exponential":
        b, d = measure.b, measure.d
        g = b - d
        return ((2 * lam - g) * (lam + d) - lam * (lam - g)) / (lam + d) ** 2
    if measure.kind == "immortal":
        return 1.0
    tail = measure.tail_values
    h = measure.grid_step
    y = np.arange(tail.size) * h
    decay = np.exp(-lam * y)
    i0 = simpson(decay * tail, dx=h)
    i1 = simpson(y * decay * tail, dx=h)
    if tail[-1] > 0.0 and lam > 0.0:
        e = math.exp(-lam * y[-1])
        i0 += tail[-1] * e / lam
        i1 += tail[-1] * e * (y[-1] / lam + 1.0 / lam**2)
    return 1.0 - i0 + lam * i1


def malthusian(measure: LifespanMeasure | ModelParams, *, bracket_max: float = 1e6) -> float:
    """Malthusian parameter: largest root of psi, floored at 0.

    Zero in the (sub)critical case (mean offspring <= 1); for supercritical
    exponential lifespans this is b - d exactly.  The general case brackets
    the unique positive root and polishes it with Brent's method.
    """
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if mean_offspring(measure) <= 1.0:
        return 0.0
    if measure.kind == "exponential":
        return measure.b - measure.d
    if measure.kind == "immortal":
        return measure.b
    lo = 1e-12
    hi = 1.0
    while psi(measure, hi) <= 0.0:
        hi *= 2.0
        if hi > bracket_max:
            raise ValueError("could not bracket the Malthusian parameter below "
                             f"{bracket_max}; pathological tabulated measure?")
    return float(brentq(lambda lam: psi(measure, lam), lo, hi, xtol=1e-14, rtol=1e-15))


def growth_exponent(measure: LifespanMeasure | ModelParams) -> float:
    """Signed growth exponent b - d of an exponential-lifespan population.

    Unlike :func:`malthusian` this is negative for subcritical populations;
    it is the exponent appearing in W'(x) = b e^{gx}.
    """
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if not measure.is_exponential:
        raise ValueError("signed growth exponent requires an exponential lifespan")
    return measure.b - measure.death_rate


def survival_probability(measure: LifespanMeasure | ModelParams) -> float:
    """Probability of never dying out: r / b (zero when subcritical/critical)."""
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    return malthusian(measure) / measure.b


# ---------------------------------------------------------------------------
# scale function

@dataclass(eq=False)
class ScaleFunction:
    """The scale function W (increasing, W(0) = 1) and its derivative.

    ``flavor`` is "closed_form" for exponential lifespans, where
    W(x) = (b e^{gx} - d)/g (or 1 + bx at criticality) and W'(x) = b e^{gx},
    or "renewal" for a grid solution of W = 1 + tail * W with derivative by
    central differences on the grid.
    """

    flavor: str
    b: float = 0.0
    d: float = 0.0
    grid: np.ndarray | None = None
    values: np.ndarray | None = None
    deriv: np.ndarray | None = None
    grid_step: float = 0.0

    @classmethod
    def exponential(cls, b: float, d: float) -> "ScaleFunction":
        return cls(flavor="closed_form", b=b, d=d)

    @classmethod
    def from_grid(cls, grid, values, deriv) -> "ScaleFunction":
        return cls(flavor="renewal", grid=grid, values=values, deriv=deriv,
                   grid_step=float(grid[1] - grid[0]))

    @property
    def x_max(self) -> float:
        return math.inf if self.flavor == "closed_form" else float(self.grid[-1])

    def __call__(self, x):
        if self.flavor == "closed_form":
            g = self.b - self.d
            if g == 0.0:
                return 1.0 + self.b * np.asarray(x, dtype=float)
            return (self.b * np.exp(g * np.asarray(x, dtype=float)) - self.d) / g
        return np.interp(x, self.grid, self.values)

    def derivative(self, x):
        if self.flavor == "closed_form":
            return self.b * np.exp((self.b - self.d) * np.asarray(x, dtype=float))
        return np.interp(x, self.grid, self.deriv)


def _solve_renewal(lam: np.ndarray, h: float) -> np.ndarray:
    """March W = 1 + conv(tail, W) on a uniform grid.

    Composite quadrature with third-order Gregory end weights
    [5/12, 13/12, 1, ..., 1, 13/12, 5/12]; plain trapezoid loses two digits
    to the resonant e^{rx} mode of the renewal equation.
    """
    n = lam.size
    W = np.empty(n)
    W[0] = 1.0
    lam_rev = lam[::-1].copy()  # forward-contiguous slices in the dot products
    denom_t = 1.0 - 0.5 * h * lam[0]
    for k in (1, 2, 3):
        if k >= n:
            return W
        s = np.dot(W[1:k], lam_rev[n - k:n - 1]) if k > 1 else 0.0
        W[k] = (1.0 + h * (s + 0.5 * lam[k] * W[0])) / denom_t
    denom = 1.0 - (5.0 / 12.0) * h * lam[0]
    c1 = 13.0 / 12.0
    c0 = 5.0 / 12.0
    for k in range(4, n):
        s = np.dot(W[2:k - 1], lam_rev[n + 1 - k:n - 2])
        tot = c1 * (lam[1] * W[k - 1] + lam[k - 1] * W[1]) + c0 * lam[k] * W[0] + s
        W[k] = (1.0 + h * tot) / denom
    return W


def scale_w(measure: LifespanMeasure | ModelParams, x_max: float = 10.0,
            h: float = 1e-3, *, force_renewal: bool = False) -> ScaleFunction:
    """Scale function of the population process.

    Exponential lifespans get the closed form; otherwise (or when
    ``force_renewal`` is set, mainly for validation) the renewal equation is
    marched on the grid ``0, h, ..., x_max`` and W' is recovered by central
    differences with one-sided stencils at the ends.
    """
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if measure.is_exponential and not force_renewal:
        return ScaleFunction.exponential(measure.b, measure.death_rate)
    if h <= 0 or x_max <= 0:
        raise ValueError("x_max and h must be positive")
    if h > x_max:
        raise ValueError(f"grid step h={h} exceeds horizon x_max={x_max}")
    grid = np.arange(0.0, x_max + h / 2, h)
    lam = np.asarray(measure.tail(grid), dtype=float)
    values = _solve_renewal(lam, h)
    deriv = np.gradient(values, h, edge_order=2)
    return ScaleFunction.from_grid(grid, values, deriv)


def scale_w_clonal(params: ModelParams, x_max: float = 10.0, h: float = 1e-3,
                   *, base: ScaleFunction | None = None,
                   force_renewal: bool = False) -> ScaleFunction:
    """Scale function of the clonal process.

    Exponential case: closed form with the starred rates.  General Model I:
    renewal solve on the thinned measure.  General Model II: the clonal scale
    is recovered from the base one through
    W*(x) = 1 + int_0^x e^{-theta u} W'(u) du, with derivative exactly
    e^{-theta x} W'(x).
    """
    if params.is_exponential and not force_renewal:
        cp = clonal_params(params)
        return ScaleFunction.exponential(cp.b_star, cp.d_star)
    measure = clonal_lifespan(params)
    if isinstance(params.mutation, ModelI) or measure.is_exponential:
        return scale_w(measure, x_max=x_max, h=h, force_renewal=force_renewal)
    if base is None:
        base = scale_w(params.lifespan, x_max=x_max, h=h, force_renewal=force_renewal)
    theta = params.mutation.theta
    grid = base.grid
    hh = base.grid_step
    deriv = np.exp(-theta * grid) * base.deriv
    # cumulative trapezoid is enough here: the integrand is already O(h^2) data
    values = np.empty_like(deriv)
    values[0] = 1.0
    np.cumsum((deriv[1:] + deriv[:-1]) * (hh / 2.0), out=values[1:])
    values[1:] += 1.0
    return ScaleFunction.from_grid(grid, values, deriv)


# ---------------------------------------------------------------------------
# one-dimensional marginals

def marginal_z(measure: LifespanMeasure | ModelParams, t: float, n: int,
               *, scale: ScaleFunction | None = None, h: float = 1e-3) -> float:
    """P(Z(t) = n): geometric with success 1/W(t) conditioned on being alive.

    P(Z(t) = 0) = 1 - W'(t)/(b W(t)) and for n >= 1
    P(Z(t) = n) = (1 - 1/W(t))^{n-1} W'(t) / (b W(t)^2).
    """
    if isinstance(measure, ModelParams):
        measure = measure.lifespan
    if t <= 0:
        raise ValueError("horizon t must be positive")
    if n < 0:
        raise ValueError("n must be a nonnegative integer")
    if scale is None:
        scale = scale_w(measure, x_max=t, h=h)
    W = float(scale(t))
    Wp = float(scale.derivative(t))
    alive = Wp / (measure.b * W)
    if n == 0:
        return 1.0 - alive
    return math.exp((n - 1) * math.log1p(-1.0 / W)) * alive / W


# ---------------------------------------------------------------------------
# expected frequency spectrum

def _expo(params: ModelParams) -> tuple[float, float, ClonalParams, float]:
    """(b, g, clonal params, mutation intensity delta) for the exponential case."""
    if not params.is_exponential:
        raise ValueError("this operation needs an exponential lifespan; "
                         "use the general-lifespan entry points with scale functions")
    b = params.lifespan.b
    g = growth_exponent(params.lifespan)
    cp = clonal_params(params)
    return b, g, cp, mutation_intensity(params)


def _geom_weight(wstar_u: float, i: int) -> float:
    """(1 - 1/W*(u))^{i-1} / W*(u)^2, evaluated through logs for large i."""
    return math.exp((i - 1) * math.log1p(-1.0 / wstar_u)) / (wstar_u * wstar_u)


def _general_scales(params: ModelParams, x_max: float, h: float,
                    scales: tuple[ScaleFunction, ScaleFunction] | None):
    if scales is not None:
        return scales
    base = scale_w(params.lifespan, x_max=x_max, h=h)
    star = scale_w_clonal(params, x_max=x_max, h=h, base=base)
    return base, star


def expected_spectrum_density(params: ModelParams, i: int, a: float, t: float,
                              *, scales=None, h: float = 1e-3) -> float:
    """Density (in the age variable) of the expected frequency spectrum.

    The expected number of types carried by exactly ``i`` particles at time
    ``t`` with age in [a, a + da] is this value times da.  Requires
    0 < a < t: the progenitor type (age exactly t) is an atom handled by
    :func:`expected_spectrum`.
    """
    if i < 1:
        raise ValueError("family size i must be >= 1")
    if not 0.0 < a < t:
        raise ValueError("the spectrum density needs 0 < a < t")
    if params.is_exponential:
        b, g, cp, delta = _expo(params)
        wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)
        return delta * math.exp(g * t - delta * a) * _geom_weight(float(wstar(a)), i)
    base, star = _general_scales(params, t, h, scales)
    mut = params.mutation
    if isinstance(mut, ModelI):
        p, b = mut.p, params.b
        return (p / (b * (1.0 - p))) * float(base.derivative(t - a)) \
            * math.exp((i - 1) * math.log1p(-1.0 / float(star(a)))) \
            * float(star.derivative(a)) / float(star(a)) ** 2
    theta, b = mut.theta, params.b
    return (theta / b) * float(base.derivative(t)) \
        * math.exp(-theta * a) * _geom_weight(float(star(a)), i)


def _progenitor_atom(params: ModelParams, i: int, t: float, star: ScaleFunction) -> float:
    """P(the progenitor's type is carried by exactly i particles at t).

    The clonal population is itself a splitting tree, so this is the
    geometric marginal of the clonal process: W*'(t)/(b* W*(t)^2) times
    (1 - 1/W*(t))^{i-1}.
    """
    if params.is_exponential:
        b_star = clonal_params(params).b_star
    else:
        b_star = clonal_lifespan(params).b
    W = float(star(t))
    Wp = float(star.derivative(t))
    return math.exp((i - 1) * math.log1p(-1.0 / W)) * Wp / (b_star * W * W)


def expected_spectrum(params: ModelParams, i: int, a: float, t: float,
                      *, scales=None, h: float = 1e-3) -> float:
    """Expected number of types of age < a carried by i particles at time t.

    Integrates the age density over (0, a); when a == t the progenitor's
    type (age exactly t) is included as an atom.
    """
    if i < 1:
        raise ValueError("family size i must be >= 1")
    if not 0.0 < a <= t:
        raise ValueError("need 0 < a <= t")
    if params.is_exponential:
        _, g, cp, delta = _expo(params)
        wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)

        def integrand(u):
            return math.exp(-delta * u) * _geom_weight(float(wstar(u)), i)

        val, _ = quad(integrand, 0.0, a, **_QUAD_OPTS)
        out = delta * math.exp(g * t) * val
        if a == t:
            out += _progenitor_atom(params, i, t, wstar)
        return out
    base, star = _general_scales(params, t, h, scales)
    val, _ = quad(lambda u: expected_spectrum_density(params, i, u, t,
                                                      scales=(base, star)),
                  0.0, a, **_QUAD_OPTS)
    if a == t:
        val += _progenitor_atom(params, i, t, star)
    return val


def _clonal_survival_tail(params: ModelParams, m: int, t: float,
                          star: ScaleFunction) -> float:
    """P(clonal process >= m at time t) = (1 - 1/W*)^{m-1} W*'/(b* W*)."""
    if params.is_exponential:
        b_star = clonal_params(params).b_star
    else:
        b_star = clonal_lifespan(params).b
    W = float(star(t))
    Wp = float(star.derivative(t))
    return math.exp((m - 1) * math.log1p(-1.0 / W)) * Wp / (b_star * W)


def expected_total_types(params: ModelParams, a: float, t: float) -> float:
    """Expected number of extant types of age < a (age <= t when a == t).

    Exponential case only; obtained by summing the spectrum over family
    sizes, which collapses the geometric weights to 1/W*.
    """
    if not 0.0 < a <= t:
        raise ValueError("need 0 < a <= t")
    _, g, cp, delta = _expo(params)
    wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)
    val, _ = quad(lambda u: math.exp(-delta * u) / float(wstar(u)), 0.0, a, **_QUAD_OPTS)
    out = delta * math.exp(g * t) * val
    if a == t:
        out += _clonal_survival_tail(params, 1, t, wstar)
    return out


def expected_old_families(params: ModelParams, a: float, t: float) -> float:
    """Expected number of extant families older than ``a`` at time ``t``.

    Exponential case.  Zero for a >= t is not imposed here (the integral is
    empty); for a < 0 the convention O_t(a) = 0 is applied by the statistics
    layer, the analytic value counts every family.
    """
    _, g, cp, delta = _expo(params)
    wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)
    lo = max(a, 0.0)
    out = 0.0
    if lo < t:
        val, _ = quad(lambda u: math.exp(-delta * u) / float(wstar(u)), lo, t, **_QUAD_OPTS)
        out = delta * math.exp(g * t) * val
        out += _clonal_survival_tail(params, 1, t, wstar)  # progenitor age = t > a
    return out


def expected_large_family_offset_ratio(params: ModelParams, x: float, t: float) -> float:
    """Exact E[L_t(m+1)] / E[L_t(m)] with m = ceil(x), exponential case.

    Overflow-safe for arbitrarily large horizons: the common factors e^{gt}
    and (b*/d*)^{m-1} are cancelled analytically before quadrature, so the
    large-size/large-time limit of the ratio (the clonal geometric ratio
    b*/d*) can be verified on horizons far beyond floating-point range of
    the expectations themselves.  Needs a subcritical clonal process.
    """
    m = max(int(math.ceil(x)), 1)
    _, g, cp, delta = _expo(params)
    if cp.r_star >= 0.0:
        raise ValueError("the offset-ratio profile needs a subcritical clonal process")
    alpha = cp.b_star / cp.d_star
    log_alpha = math.log(alpha)
    wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)

    # the integrand ramps up around log(m)/|r*| and is then killed by the
    # exp(-delta u) envelope; cap the quadrature window accordingly so the
    # adaptive rule cannot overlook the bump on very long horizons
    ramp = math.log(max(m, 2)) / abs(cp.r_star)
    u_hi = min(t, ramp + _ENVELOPE_CUTOFF / delta + 5.0)

    def scaled_integral(mm: int) -> float:
        def integrand(u):
            W = float(wstar(u))
            return math.exp((mm - 1) * (math.log1p(-1.0 / W) - log_alpha)
                            - delta * u) / W

        val, _ = quad(integrand, 0.0, u_hi,
                      points=[min(ramp, u_hi)] if ramp < u_hi else None,
                      **_QUAD_OPTS)
        return val

    def scaled_atom(mm: int) -> float:
        W = float(wstar(t))
        expo = (mm - 1) * (math.log1p(-1.0 / W) - log_alpha) - g * t + cp.r_star * t
        return math.exp(expo) / W if expo > -700.0 else 0.0

    num = delta * scaled_integral(m + 1) * alpha + scaled_atom(m + 1) * alpha
    den = delta * scaled_integral(m) + scaled_atom(m)
    return num / den


def expected_large_families(params: ModelParams, x: float, t: float) -> float:
    """Expected number of families of size >= ceil(x) at time ``t`` (exponential)."""
    m = max(int(math.ceil(x)), 1)
    _, g, cp, delta = _expo(params)
    wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)

    def integrand(u):
        W = float(wstar(u))
        return math.exp((m - 1) * math.log1p(-1.0 / W) - delta * u) / W

    val, _ = quad(integrand, 0.0, t, **_QUAD_OPTS)
    return delta * math.exp(g * t) * val + _clonal_survival_tail(params, m, t, wstar)


# ---------------------------------------------------------------------------
# limit constants of the spectrum

def limit_spectrum_J(params: ModelParams, i: int, a: float = math.inf,
                     *, scales=None, h: float = 1e-3) -> float:
    """Limit constant J^{i,a}: e^{-rt} E[spectrum] converges to it (times
    the survival factor r/(b psi'(r)) in the general case).

    ``a = inf`` gives J^i, the large-time mass of size-i families; the
    integrand carries an exp(-(r - r*) u) envelope so the infinite integral
    is truncated where that envelope is below 1e-14.
    """
    if i < 1:
        raise ValueError("family size i must be >= 1")
    if a <= 0:
        raise ValueError("age bound a must be positive (possibly inf)")
    delta = mutation_intensity(params)
    if delta <= 0.0:
        raise ValueError("limit constants need a positive mutation intensity")
    if params.is_exponential:
        _, g, cp, _ = _expo(params)
        wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)
        hi = min(a, _ENVELOPE_CUTOFF / delta)

        def integrand(u):
            return math.exp(-delta * u) * _geom_weight(float(wstar(u)), i)

        val, _ = quad(integrand, 0.0, hi, **_QUAD_OPTS)
        return delta * val
    r = malthusian(params.lifespan)
    if not math.isfinite(a) and r <= 0.0:
        raise ValueError("J^{i,inf} for a general lifespan needs a supercritical population")
    mut = params.mutation
    rate = mut.theta if isinstance(mut, ModelII) else r
    hi = min(a, _ENVELOPE_CUTOFF / rate)
    base, star = _general_scales(params, hi, h, scales)
    if isinstance(mut, ModelI):
        p = mut.p

        def integrand(u):
            W = float(star(u))
            return math.exp((i - 1) * math.log1p(-1.0 / W) - r * u) \
                * float(star.derivative(u)) / (W * W)

        val, _ = quad(integrand, 0.0, hi, **_QUAD_OPTS)
        return p / (1.0 - p) * val
    theta = mut.theta

    def integrand(u):
        return math.exp(-theta * u) * _geom_weight(float(star(u)), i)

    val, _ = quad(integrand, 0.0, hi, **_QUAD_OPTS)
    return theta * val


def limit_spectrum_tail_sum(params: ModelParams, i_from: int) -> float:
    """Sum of J^i over i >= i_from (exponential case), by one quadrature.

    Summing the geometric weights leaves (1 - 1/W*)^{i_from - 1} / W*.
    """
    if i_from < 1:
        raise ValueError("i_from must be >= 1")
    _, g, cp, delta = _expo(params)
    if delta <= 0.0:
        raise ValueError("limit constants need a positive mutation intensity")
    wstar = ScaleFunction.exponential(cp.b_star, cp.d_star)
    hi = _ENVELOPE_CUTOFF / delta

    def integrand(u):
        W = float(wstar(u))
        return math.exp((i_from - 1) * math.log1p(-1.0 / W) - delta * u) / W

    val, _ = quad(integrand, 0.0, hi, **_QUAD_OPTS)
    return delta * val


def J_total(params: ModelParams, *, method: str = "auto", scales=None,
            h: float = 1e-3) -> float:
    """Limit constant J for the total number of extant types.

    e^{-rt} M_t converges (on survival) to J times an exponential variable.
    ``method`` selects the formula: "unified" uses the clonal-scale integral
    (exponential case), "model" the model-specific form (log of the clonal
    scale for Model I, 1/W* for Model II); "auto" picks whichever applies.
    """
    r = malthusian(params.lifespan)
    if r <= 0.0:
        raise ValueError("J is only defined for a supercritical population (r > 0)")
    if method not in ("auto", "unified", "model"):
        raise ValueError(f"unknown method {method!r}")
    use_unified = params.is_exponential and method != "model"
    if method == "unified" and not params.is_exponential:
        raise ValueError("the unified form requires an exponential lifespan")
    if use_unified:
        return limit_spectrum_tail_sum(params, 1)
    mut = params.mutation
    if isinstance(mut, ModelII):
        theta = mut.theta
        hi = _ENVELOPE_CUTOFF / theta
        _, star = _general_scales(params, hi, h, scales)
        val, _ = quad(lambda u: math.exp(-theta * u) / float(star(u)), 0.0, hi,
                      **_QUAD_OPTS)
        return theta * val
    p = mut.p
    hi = _ENVELOPE_CUTOFF / r
    _, star = _general_scales(params, hi, h, scales)
    val, _ = quad(lambda u: math.exp(-r * u) * math.log(float(star(u))), 0.0, hi,
                  **_QUAD_OPTS)
    return r * p / (1.0 - p) * val


# ---------------------------------------------------------------------------
# tail asymptotics of J^i

@dataclass(frozen=True)
class AsymptoticConstants:
    """Constants driving the large-i behaviour of the limiting spectrum.

    nu = r / r*, mu = b*/r* (only meaningful when the clonal process is
    supercritical, NaN otherwise), gamma = (r - r*)/b*, the total-types
    constant J, and psi'(r).
    """

    nu: float
    mu: float
    gamma: float
    J: float
    psi_prime_r: float


def asymptotic_constants(params: ModelParams) -> AsymptoticConstants:
    b, g, cp, delta = _expo(params)
    if g <= 0.0:
        raise ValueError("asymptotic constants require a supercritical population")
    r = g
    gamma = delta / cp.b_star
    if cp.r_star > 0:
        nu, mu = r / cp.r_star, cp.b_star / cp.r_star
    else:
        nu = mu = math.nan
    return AsymptoticConstants(nu=nu, mu=mu, gamma=gamma, J=J_total(params),
                               psi_prime_r=psi_prime(params.lifespan, r))


def tail_supercritical(params: ModelParams, i) -> float:
    """Power-law tail of J^i when the clonal process is supercritical:
    J^i ~ i^{-1-nu} gamma Gamma(nu+1) mu^nu."""
    b, g, cp, delta = _expo(params)
    if cp.r_star <= 0.0:
        raise ValueError("supercritical tail asymptotics need r* > 0")
    if g <= 0.0:
        raise ValueError("supercritical tail asymptotics need r > 0")
    nu = g / cp.r_star
    mu = cp.b_star / cp.r_star
    gamma = delta / cp.b_star
    return np.asarray(i, dtype=float) ** (-1.0 - nu) * gamma * math.gamma(nu + 1.0) * mu**nu


def tail_critical(params: ModelParams, i) -> float:
    """Stretched-exponential tail of J^i at clonal criticality:
    C(gamma) i^{-3/4} exp(-2 sqrt(gamma i)) with C(x) = sqrt(pi) e^{x/2} x^{5/4}
    and gamma = r / b*."""
    b, g, cp, delta = _expo(params)
    if cp.r_star != 0.0:
        raise ValueError("critical tail asymptotics need r* = 0")
    if g <= 0.0:
        raise ValueError("critical tail asymptotics need r > 0")
    gamma = g / cp.b_star
    c = math.sqrt(math.pi) * math.exp(gamma / 2.0) * gamma ** 1.25
    i = np.asarray(i, dtype=float)
    return c * i ** -0.75 * np.exp(-2.0 * np.sqrt(gamma * i))


def critical_limit_spectrum(params: ModelParams, i: int) -> float:
    """J^i at clonal criticality through its confluent-hypergeometric form.

    Evaluates gamma * Gamma(i) * U(i, 0, gamma) via the integral
    gamma * int_0^inf e^{-gamma s} s^{i-1} / (1+s)^{i+1} ds with a log-domain
    integrand, which stays finite for large i.
    """
    b, g, cp, delta = _expo(params)
    if cp.r_star != 0.0:
        raise ValueError("this representation needs a critical clonal process")
    if g <= 0.0:
        raise ValueError("needs a supercritical population")
    gamma = g / cp.b_star

    def log_integrand(s):
        return -gamma * s + (i - 1) * math.log(s) - (i + 1) * math.log1p(s)

    # integrand peaks near sqrt(i/gamma); rescale by the peak value so the
    # quadrature keeps relative accuracy when the result underflows the
    # absolute tolerance (large i)
    s_peak = math.sqrt(max(i, 1) / gamma)
    log_max = log_integrand(s_peak)
    hi = s_peak * 30.0 + 50.0 / gamma
    val, _ = quad(lambda s: math.exp(log_integrand(s) - log_max), 0.0, hi,
                  points=[s_peak] if s_peak < hi else None, **_QUAD_OPTS)
    return gamma * val * math.exp(log_max)


# ---------------------------------------------------------------------------
# scales and limit laws for old / large families

def old_family_scale(params: ModelParams, t: float) -> float:
    """Centering c_t for the ages of the oldest families.

    Subcritical clonal process: c_t = r t/(r - r*).  Critical clonal
    process: c_t = t - log(t)/r.  Rejected when the clonal process is
    supercritical (old families then live at age ~ t).
    """
    b, g, cp, delta = _expo(params)
    if g <= 0.0:
        raise ValueError("old-family scales need a supercritical population")
    if cp.r_star > 0.0:
        raise ValueError("the clonal process must be (sub)critical")
    if cp.r_star == 0.0:
        return t - math.log(t) / g
    return g * t / (g - cp.r_star)


def old_family_limit(params: ModelParams, a: float) -> tuple[float, float]:
    """Limit of the old-family count at recentred age a (subcritical clonal).

    Returns ``(L, q)``: L is the limit of the (unconditional) expected number
    of families older than a + c_t, and q the success probability of the
    geometric limit law of that count conditional on survival,
    q = 1 / (1 + (b/r) L).
    """
    b, g, cp, delta = _expo(params)
    if g <= 0.0 or cp.r_star >= 0.0:
        raise ValueError("old-family limits need r > 0 and a subcritical clonal process")
    L = (abs(cp.r_star) / cp.d_star) * math.exp(-delta * a)
    q = 1.0 / (1.0 + (b / g) * L)
    return L, q


def age_point_intensity(params: ModelParams, x) -> float:
    """Intensity at recentred age x of the limiting age point process,
    conditional on a unit mixture variable: (b/r)(|r*|/d*)(r-r*) e^{-(r-r*)x}."""
    b, g, cp, delta = _expo(params)
    if g <= 0.0 or cp.r_star >= 0.0:
        raise ValueError("the age point process limit needs r > 0 and a "
                         "subcritical clonal process")
    pref = (b / g) * (abs(cp.r_star) / cp.d_star) * delta
    return pref * np.exp(-delta * np.asarray(x, dtype=float))


def _check_model_ii_expo(params: ModelParams) -> tuple[float, float, float, float]:
    if not isinstance(params.mutation, ModelII):
        raise ValueError("this scale is specific to Model II")
    b, g, cp, delta = _expo(params)
    if g <= 0.0:
        raise ValueError("needs a supercritical population")
    return b, g, params.lifespan.death_rate, params.mutation.theta


def large_family_scale_II(params: ModelParams, t: float) -> float:
    """Size scale x_t of the largest families in Model II.

    Subcritical clonal (theta > r):
    x_t = (r t - theta/(theta - r) log t) / log((theta + d)/b).
    Critical clonal (theta = r): x_t = r^2/(4 psi'(r)) (t - log(t)/(2r))^2.
    Supercritical clonal processes grow their largest family like e^{r* t};
    see :func:`supercritical_family_scale`.
    """
    b, r, d, theta = _check_model_ii_expo(params)
    if t <= 0:
        raise ValueError("t must be positive")
    if theta > r:
        log_ratio = math.log((theta + d) / b)
        return (r * t - theta / (theta - r) * math.log(t)) / log_ratio
    if theta == r:
        ppr = psi_prime(params.lifespan, r)
        return r * r / (4.0 * ppr) * (t - math.log(t) / (2.0 * r)) ** 2
    raise ValueError("theta < r: the clonal process is supercritical, use "
                     "supercritical_family_scale")


def subsequence_times(params: ModelParams, n: int) -> float:
    """Horizon t_n > argmin(x) solving x_{t_n} = n (Model II, theta > r).

    x_t diverges at 0+, dips to a minimum at t = theta/(r(theta - r)) and
    then increases; the increasing branch carries the limit theorems.  n
    below the minimum is rejected.
    """
    b, r, d, theta = _check_model_ii_expo(params)
    if theta <= r:
        raise ValueError("subsequence horizons require a subcritical clonal "
                         "process (theta > r)")
    t_min = theta / (r * (theta - r))
    x_min = large_family_scale_II(params, t_min)
    if n <= x_min:
        raise ValueError(f"no horizon with x_t = {n}: the scale stays above "
                         f"its minimum {x_min:.3f}")
    hi = t_min + 1.0
    while large_family_scale_II(params, hi) < n:
        hi *= 2.0
    return float(brentq(lambda t: large_family_scale_II(params, t) - n,
                        t_min, hi, xtol=1e-12))


def conjecture_scale_I(params: ModelParams, t: float) -> float:
    """Conjectured size scale of the largest families, Model I at clonal
    criticality: x_t = (2/sigma^2)(r t^2 - t log t), sigma^2 the second
    moment of the lifespan measure.  Exploratory output only.
    """
    if not isinstance(params.mutation, ModelI):
        raise ValueError("this scale is specific to Model I")
    measure = params.lifespan
    if measure.kind == "immortal":
        raise ValueError("infinite lifespan second moment")
    if measure.kind == "exponential":
        sigma2 = 2.0 * measure.b / measure.d ** 2
    else:
        if measure.has_residual_mass():
            raise ValueError("infinite lifespan second moment")
        grid = np.arange(measure.tail_values.size) * measure.grid_step
        sigma2 = 2.0 * float(simpson(grid * measure.tail_values, dx=measure.grid_step))
    r = malthusian(measure)
    if r <= 0.0:
        raise ValueError("needs a supercritical population")
    cp = clonal_params(params) if params.is_exponential else None
    if cp is not None and cp.r_star != 0.0:
        raise ValueError("the conjectured scale applies at clonal criticality")
    return 2.0 / sigma2 * (r * t * t - t * math.log(t))


def supercritical_family_scale(params: ModelParams, t: float) -> float:
    """Size scale e^{r* t} of the largest families when the clonal process
    itself is supercritical (either model)."""
    _, _, cp, _ = _expo(params)
    if cp.r_star <= 0.0:
        raise ValueError("needs a supercritical clonal process")
    return math.exp(cp.r_star * t)
