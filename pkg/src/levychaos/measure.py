"""Control measure, separable kernel factors and their power integrals.

The driving random measure has intensity dt (sigma^2 delta_0(dx) + nu(dx))
on [0,T] x R: a Gaussian slot at x = 0 plus an atomic jump measure on
R \\ {0}.  Kernel factors are separable, f(t,x) = g(t) h(x), optionally
restricted to x != 0.  All the expansion machinery reduces to power and
product integrals of such factors, which this module evaluates in closed
form wherever the time-factor algebra allows, with a log-space quadrature
fallback otherwise.  Divergent jump integrals are returned as +/-inf
values rather than raised: downstream square-integrability checks want to
inspect them.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "FiniteAtomic", "PowerAtomFamily", "ControlMeasure",
    "PiecewisePoly", "TimeFactor", "Tabulated", "PowerLaw", "SpaceFactor",
    "KernelFactor", "QuadratureError",
    "time_integral", "log_time_integral", "time_product_integral",
    "nu_power_integral", "m_power_integral", "m_product_integral",
    "kernel_product", "space_product", "abs_factor", "atom_table",
]

_LOG_MAX = math.log(sys.float_info.max)


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Jump measures and the control measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteAtomic:
    """Finitely many atoms (x_i, lambda_i), x_i != 0, lambda_i > 0."""

    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        xs = [x for x, _ in self.atoms]
        if len(set(xs)) != len(xs):
            raise ValueError("atom positions must be distinct")
        if any(x == 0 for x in xs):
            raise ValueError("atoms cannot sit at x = 0")
        if any(lam <= 0 for _, lam in self.atoms):
            raise ValueError("atom masses must be positive")

    @property
    def total_mass(self) -> float:
        return sum(lam for _, lam in self.atoms)


@dataclass(frozen=True)
class PowerAtomFamily:
    """Geometric atom family x_i = x0 q^i with masses lambda_i = lambda0 r^i.

    Construction requires r q^2 < 1 so that the jump measure integrates
    x^2; total mass lambda0/(1-r) is finite automatically.
    """

    x0: float
    q: float
    lambda0: float
    r: float

    def __post_init__(self):
        if self.x0 == 0:
            raise ValueError("x0 must be nonzero")
        if not 0 < self.q < 1 or not 0 < self.r < 1:
            raise ValueError("q and r must lie in (0,1)")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.r * self.q ** 2 >= 1:
            raise ValueError("need r*q^2 < 1 for a square-integrable jump measure")

    @property
    def total_mass(self) -> float:
        return self.lambda0 / (1.0 - self.r)


JumpMeasure = FiniteAtomic | PowerAtomFamily


@dataclass(frozen=True)
class ControlMeasure:
    """Deterministic intensity dt (sigma2 delta_0 + nu) on [0, T] x R."""

    sigma2: float
    nu: JumpMeasure
    T: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")

    def with_horizon(self, T: float) -> "ControlMeasure":
        return replace(self, T=T)


# ---------------------------------------------------------------------------
# Time factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial on [0, inf): breaks are interior knots.

    ``polys[i]`` (coefficients low to high) applies on the i-th interval;
    with ``absolute`` set, evaluation takes the absolute value.
    """

    breaks: tuple[float, ...]
    polys: tuple[tuple[float, ...], ...]
    absolute: bool = False

    def __post_init__(self):
        if len(self.polys) != len(self.breaks) + 1:
            raise ValueError("need len(breaks) + 1 polynomial pieces")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must be strictly increasing")
        if self.breaks and self.breaks[0] <= 0:
            raise ValueError("breaks must be positive")

    def piece_at(self, t: float) -> tuple[float, ...]:
        idx = 0
        for b in self.breaks:
            if t < b:
                break
            idx += 1
        return self.polys[idx]

    def __call__(self, t):
        if np.ndim(t) == 0:
            v = _polyval(self.piece_at(float(t)), float(t))
            return abs(v) if self.absolute else v
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), t, side="right")
        out = np.empty_like(t)
        for i, poly in enumerate(self.polys):
            sel = idx == i
            if np.any(sel):
                out[sel] = _polyval(poly, t[sel])
        return np.abs(out) if self.absolute else out

    def multiply(self, other: "PiecewisePoly") -> "PiecewisePoly":
        if self.absolute != other.absolute:
            raise ValueError("cannot mix absolute and plain piecewise factors")
        breaks = tuple(sorted(set(self.breaks) | set(other.breaks)))
        polys = []
        for i in range(len(breaks) + 1):
            t_mid = _interval_probe(breaks, i)
            polys.append(_polymul(self.piece_at(t_mid), other.piece_at(t_mid)))
        return PiecewisePoly(breaks, tuple(polys), self.absolute)

    def power(self, n: int) -> "PiecewisePoly":
        polys = tuple(_polypow(p, n) for p in self.polys)
        return PiecewisePoly(self.breaks, polys, self.absolute)


def _polyval(coeffs: Sequence[float], t):
    out = 0.0
    for c in reversed(coeffs):
        out = out * t + c
    return out


def _polymul(a: Sequence[float], b: Sequence[float]) -> tuple[float, ...]:
    out = [0.0] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        for j, cb in enumerate(b):
            out[i + j] += ca * cb
    return tuple(out)


def _polypow(a: Sequence[float], n: int) -> tuple[float, ...]:
    out: tuple[float, ...] = (1.0,)
    for _ in range(n):
        out = _polymul(out, a)
    return out


def _interval_probe(breaks: tuple[float, ...], i: int) -> float:
    lo = 0.0 if i == 0 else breaks[i - 1]
    hi = breaks[i] if i < len(breaks) else lo + 1.0
    return 0.5 * (lo + hi)


def _norm_exp_terms(terms) -> tuple[tuple[float, float], ...]:
    acc: dict[float, float] = {}
    for rate, alpha in terms:
        if alpha <= 0:
            raise ValueError("exponent alpha must be positive")
        acc[alpha] = acc.get(alpha, 0.0) + rate
    return tuple(sorted((r, a) for a, r in acc.items() if r != 0.0))


@dataclass(frozen=True)
class TimeFactor:
    """Time part in product normal form: coeff * t^power * exp(sum r t^a) * pieces.

    The plain shapes are built with the constructors below; products and
    integer powers of time factors stay inside this form, which is what
    keeps identified-factor integrals in closed form.
    """

    coeff: float = 1.0
    power: int = 0
    exp_terms: tuple[tuple[float, float], ...] = ()
    pieces: PiecewisePoly | None = None

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("monomial power must be >= 0")
        object.__setattr__(self, "exp_terms", _norm_exp_terms(self.exp_terms))

    # -- constructors ------------------------------------------------------
    @staticmethod
    def constant(c: float) -> "TimeFactor":
        return TimeFactor(coeff=float(c))

    @staticmethod
    def monomial(coeff: float, power: int) -> "TimeFactor":
        return TimeFactor(coeff=float(coeff), power=int(power))

    @staticmethod
    def exp_pow(alpha: float, rate: float = 1.0) -> "TimeFactor":
        """g(t) = exp(rate * t^alpha)."""
        return TimeFactor(exp_terms=((float(rate), float(alpha)),))

    @staticmethod
    def piecewise(breaks: Sequence[float], polys: Sequence[Sequence[float]]) -> "TimeFactor":
        pp = PiecewisePoly(tuple(float(b) for b in breaks),
                           tuple(tuple(float(c) for c in p) for p in polys))
        return TimeFactor(pieces=pp)

    # -- algebra -----------------------------------------------------------
    def __call__(self, t):
        scalar = np.ndim(t) == 0
        ts = np.asarray(t, dtype=float)
        out = np.full_like(ts, self.coeff)
        if self.power:
            out = out * np.power(ts, self.power)
        for rate, alpha in self.exp_terms:
            out = out * np.exp(rate * np.power(ts, alpha))
        if self.pieces is not None:
            out = out * self.pieces(ts)
        return float(out) if scalar else out

    def multiply(self, other: "TimeFactor") -> "TimeFactor":
        pieces = self.pieces
        if other.pieces is not None:
            pieces = other.pieces if pieces is None else pieces.multiply(other.pieces)
        return TimeFactor(self.coeff * other.coeff, self.power + other.power,
                          self.exp_terms + other.exp_terms, pieces)

    def power_n(self, n: int) -> "TimeFactor":
        if n < 1:
            raise ValueError("power must be >= 1")
        return TimeFactor(self.coeff ** n, self.power * n,
                          tuple((r * n, a) for r, a in self.exp_terms),
                          None if self.pieces is None else self.pieces.power(n))

    @property
    def is_polynomial(self) -> bool:
        return not self.exp_terms

    def abs(self) -> "TimeFactor":
        pieces = self.pieces
        if pieces is not None and not pieces.absolute:
            pieces = replace(pieces, absolute=True)
        return TimeFactor(abs(self.coeff), self.power, self.exp_terms, pieces)


# ---------------------------------------------------------------------------
# Time integration
# ---------------------------------------------------------------------------

def _int_monomial(p: int, a: float, b: float) -> float:
    return (b ** (p + 1) - a ** (p + 1)) / (p + 1)


def _int_monomial_exp(p: int, r: float, a: float, b: float) -> float:
    """Exact integral of t^p e^(r t) over [a, b]."""
    if r == 0.0:
        return _int_monomial(p, a, b)

    def anti(t: float) -> float:
        total = 0.0
        fall = 1.0
        for i in range(p + 1):
            total += (-1) ** i * fall * t ** (p - i) / r ** (i + 1)
            fall *= (p - i)
        return math.exp(r * t) * total

    try:
        return anti(b) - anti(a)
    except OverflowError:
        return math.inf if r > 0 else -math.inf


def _poly_segments(g: TimeFactor, T: float):
    """Yield (lo, hi, coeffs) covering [0, T] with the monomial part folded in."""
    base = tuple(0.0 for _ in range(g.power)) + (g.coeff,)
    if g.pieces is None:
        yield 0.0, T, base
        return
    knots = [0.0] + [b for b in g.pieces.breaks if b < T] + [T]
    for lo, hi in zip(knots, knots[1:]):
        piece = g.pieces.piece_at(0.5 * (lo + hi))
        yield lo, hi, _polymul(base, piece)


def _split_at_roots(coeffs: tuple[float, ...], lo: float, hi: float):
    """Sign-constant subintervals of [lo, hi] for a polynomial."""
    pts = [lo, hi]
    deg = len(coeffs) - 1
    if deg >= 1:
        roots = np.roots(list(reversed(coeffs)))
        for root in roots:
            if abs(root.imag) < 1e-12 and lo < root.real < hi:
                pts.append(float(root.real))
    pts = sorted(set(pts))
    return zip(pts, pts[1:])


def _integrate_poly_piece(coeffs: tuple[float, ...], lo: float, hi: float,
                          absolute: bool) -> float:
    if not absolute:
        return sum(c * _int_monomial(j, lo, hi) for j, c in enumerate(coeffs))
    total = 0.0
    for a, b in _split_at_roots(coeffs, lo, hi):
        part = sum(c * _int_monomial(j, a, b) for j, c in enumerate(coeffs))
        total += abs(part)
    return total


def _quad_direct(g: TimeFactor, T: float) -> float:
    val, err = integrate.quad(lambda t: float(g(t)), 0.0, T,
                              epsabs=1e-300, epsrel=1e-10, limit=500)
    if not math.isfinite(val):
        raise QuadratureError(f"quadrature returned {val} on [0, {T}]")
    if err > max(1e-9 * abs(val), 1e-250):
        raise QuadratureError(
            f"quadrature error {err:g} too large relative to value {val:g}")
    return val


def _log_phi(g: TimeFactor, t: float) -> float:
    # log of the positive integrand coeff * t^p * exp(sum r t^a)
    if t == 0.0:
        return math.log(g.coeff) if g.power == 0 else -math.inf
    return math.log(g.coeff) + g.power * math.log(t) + sum(
        r * t ** a for r, a in g.exp_terms)


def _quad_log_positive(g: TimeFactor, T: float) -> float:
    """log integral of a positive coeff*t^p*exp(...) integrand over [0, T]."""
    grid = np.linspace(0.0, T, 513)
    peak = max(_log_phi(g, t) for t in grid)
    val, err = integrate.quad(lambda t: math.exp(_log_phi(g, t) - peak),
                              0.0, T, epsabs=1e-300, epsrel=1e-10, limit=500)
    if val <= 0:
        raise QuadratureError("log-space quadrature collapsed to zero")
    if err > 1e-8 * val:
        raise QuadratureError(
            f"log-space quadrature error {err:g} vs value {val:g}")
    return peak + math.log(val)


def _integrate_timefactor(g: TimeFactor, T: float) -> float:
    if g.coeff == 0.0:
        return 0.0
    if not g.exp_terms:
        absolute = g.pieces.absolute if g.pieces is not None else False
        return sum(_integrate_poly_piece(c, lo, hi, absolute)
                   for lo, hi, c in _poly_segments(g, T))
    rates = dict((a, r) for r, a in g.exp_terms)
    if set(rates) == {1.0} and (g.pieces is None or not g.pieces.absolute):
        r = rates[1.0]
        total = 0.0
        for lo, hi, coeffs in _poly_segments(g, T):
            total += sum(c * _int_monomial_exp(j, r, lo, hi)
                         for j, c in enumerate(coeffs))
        return total
    if g.pieces is None:
        sign = 1.0 if g.coeff > 0 else -1.0
        logv = _quad_log_positive(replace(g, coeff=abs(g.coeff)), T)
        return sign * math.inf if logv > _LOG_MAX else sign * math.exp(logv)
    return _quad_direct(g, T)


def time_integral(g: TimeFactor, n: int, T: float) -> float:
    """Integral of g(t)^n over [0, T]; closed form where the algebra allows."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if T <= 0:
        raise ValueError("T must be positive")
    return _integrate_timefactor(g.power_n(n), T)


def log_time_integral(g: TimeFactor, n: int, T: float) -> float:
    """log of time_integral(g, n, T) for positive g, safe at huge exponents."""
    if n < 1 or T <= 0:
        raise ValueError("need n >= 1 and T > 0")
    gn = g.power_n(n)
    if gn.coeff <= 0 or gn.pieces is not None:
        raise ValueError("log-space integration needs a positive smooth factor")
    if not gn.exp_terms:
        return math.log(_integrate_timefactor(gn, T))
    rates = dict((a, r) for r, a in gn.exp_terms)
    if set(rates) == {1.0} and gn.power == 0:
        r = rates[1.0]
        if r > 0:
            # exact: log((e^{rT} - 1)/r)
            return r * T + math.log1p(-math.exp(-r * T)) - math.log(r)
    return _quad_log_positive(gn, T)


def time_product_integral(factors: Sequence[TimeFactor], T: float) -> float:
    """Integral of the pointwise product of time factors over [0, T]."""
    return _integrate_timefactor(reduce(TimeFactor.multiply, factors), T)


# ---------------------------------------------------------------------------
# Space factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tabulated:
    """Values h(x_i) aligned with the atoms of a FiniteAtomic measure."""

    values: tuple[float, ...]


@dataclass(frozen=True)
class PowerLaw:
    """h(x) = scale * x^beta; with ``absolute``, |scale * x^beta|."""

    beta: float
    scale: float = 1.0
    absolute: bool = False


@dataclass(frozen=True)
class SpaceFactor:
    """Space part: the Gaussian-slot value h(0) plus jump-side values."""

    h0: float
    variant: Tabulated | PowerLaw


def _signed_pow(x: float, b: float) -> float:
    if x > 0:
        return x ** b
    if x == 0:
        if b > 0:
            return 0.0
        return 1.0 if b == 0 else math.inf
    bi = round(b)
    if abs(b - bi) > 1e-9:
        raise ValueError(f"fractional power {b} of negative base {x}")
    return x ** int(bi)


def _space_value(space: SpaceFactor, x: float, idx: int) -> float:
    v = space.variant
    if isinstance(v, Tabulated):
        return v.values[idx]
    out = v.scale * _signed_pow(x, v.beta)
    return abs(out) if v.absolute else out


def nu_power_integral(nu: JumpMeasure, spaces: Sequence[SpaceFactor],
                      exponents: Sequence[int]) -> float:
    """Mixed power integral sum_i lambda_i prod_j h_j(x_i)^e_j over nu.

    For the geometric atom family this is a geometric series; a ratio >= 1
    makes the series diverge, which is reported as +/-inf, never raised.
    """
    if len(spaces) != len(exponents):
        raise ValueError("one exponent per space factor")
    if isinstance(nu, FiniteAtomic):
        for h in spaces:
            v = h.variant
            if isinstance(v, Tabulated) and len(v.values) != len(nu.atoms):
                raise ValueError(
                    f"tabulated factor has {len(v.values)} values for "
                    f"{len(nu.atoms)} atoms")
        total = 0.0
        for i, (x, lam) in enumerate(nu.atoms):
            prod = lam
            for h, e in zip(spaces, exponents):
                if e:
                    prod *= _space_value(h, x, i) ** e
            total += prod
        return total
    b_total = 0.0
    lead = nu.lambda0
    for h, e in zip(spaces, exponents):
        if not e:
            continue
        v = h.variant
        if not isinstance(v, PowerLaw):
            raise ValueError("geometric atom families need power-law space factors")
        b_total += v.beta * e
        if v.absolute:
            lead *= (abs(v.scale) * abs(nu.x0) ** v.beta) ** e
        else:
            lead *= (v.scale ** e) * _signed_pow(nu.x0, v.beta * e)
    ratio = nu.r * nu.q ** b_total
    if ratio >= 1.0:
        if lead == 0.0:
            return 0.0
        return math.copysign(math.inf, lead)
    return lead / (1.0 - ratio)


# ---------------------------------------------------------------------------
# Kernel factors and control-measure integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelFactor:
    """Separable factor g(t) h(x), optionally killed on the Gaussian slot.

    ``domain == "r0"`` multiplies by the indicator of x != 0, so the
    effective h(0) is zero no matter what the space factor stores.
    """

    time: TimeFactor
    space: SpaceFactor
    domain: str = "full"

    def __post_init__(self):
        if self.domain not in ("full", "r0"):
            raise ValueError("domain must be 'full' or 'r0'")

    @property
    def effective_h0(self) -> float:
        return 0.0 if self.domain == "r0" else self.space.h0


def m_power_integral(factor: KernelFactor, n: int, measure: ControlMeasure,
                     domain: str = "full") -> float:
    """Integral of f^n against the control measure, +/-inf when divergent."""
    tint = time_integral(factor.time, n, measure.T)
    jump = nu_power_integral(measure.nu, [factor.space], [n])
    mass = jump
    if domain != "r0" and measure.sigma2 and factor.domain != "r0":
        mass += measure.sigma2 * factor.space.h0 ** n
    if tint == 0.0:
        return 0.0
    return tint * mass


def m_product_integral(factors: Sequence[KernelFactor], measure: ControlMeasure,
                       domain: str = "full") -> float:
    """Integral of the pointwise product of factors against the control measure."""
    if not factors:
        raise ValueError("need at least one factor")
    tint = time_product_integral([f.time for f in factors], measure.T)
    jump = nu_power_integral(measure.nu, [f.space for f in factors],
                             [1] * len(factors))
    mass = jump
    if domain != "r0" and measure.sigma2 and all(f.domain == "full" for f in factors):
        gauss = measure.sigma2
        for f in factors:
            gauss *= f.space.h0
        mass += gauss
    if tint == 0.0:
        return 0.0
    return tint * mass


def space_product(spaces: Sequence[SpaceFactor], nu: JumpMeasure) -> SpaceFactor:
    """Pointwise product of space factors, closed under the measure's atoms."""
    h0 = 1.0
    for s in spaces:
        h0 *= s.h0
    if all(isinstance(s.variant, PowerLaw) for s in spaces):
        beta = sum(s.variant.beta for s in spaces)
        scale = 1.0
        for s in spaces:
            scale *= s.variant.scale
        absolute = any(s.variant.absolute for s in spaces)
        if absolute and not all(s.variant.absolute for s in spaces):
            raise ValueError("cannot mix absolute and plain power laws")
        return SpaceFactor(h0, PowerLaw(beta, scale, absolute))
    if not isinstance(nu, FiniteAtomic):
        raise ValueError("tabulated space factors need a finite atomic measure")
    values = []
    for i, (x, _) in enumerate(nu.atoms):
        prod = 1.0
        for s in spaces:
            prod *= _space_value(s, x, i)
        values.append(prod)
    return SpaceFactor(h0, Tabulated(tuple(values)))


def kernel_product(factors: Sequence[KernelFactor], nu: JumpMeasure,
                   force_r0: bool = False) -> KernelFactor:
    """Pointwise product of kernel factors as a single kernel factor."""
    time = reduce(TimeFactor.multiply, (f.time for f in factors))
    space = space_product([f.space for f in factors], nu)
    domain = "r0" if force_r0 or any(f.domain == "r0" for f in factors) else "full"
    return KernelFactor(time, space, domain)


def abs_factor(f: KernelFactor) -> KernelFactor:
    """|f| as a kernel factor; used by the square-integrability check."""
    v = f.space.variant
    if isinstance(v, Tabulated):
        variant: Tabulated | PowerLaw = Tabulated(tuple(abs(x) for x in v.values))
    else:
        variant = PowerLaw(v.beta, v.scale, absolute=True)
    return KernelFactor(f.time.abs(), SpaceFactor(abs(f.space.h0), variant), f.domain)


def atom_table(nu: JumpMeasure, tail_mass: float = 1e-12):
    """Atoms as arrays (positions, masses, truncation_bias) for simulation.

    Geometric families are truncated once the remaining mass drops below
    ``tail_mass``; the discarded mass is reported as the bias bound.
    """
    if isinstance(nu, FiniteAtomic):
        if not nu.atoms:
            return np.empty(0), np.empty(0), 0.0
        xs = np.array([x for x, _ in nu.atoms], dtype=float)
        lams = np.array([lam for _, lam in nu.atoms], dtype=float)
        return xs, lams, 0.0
    # smallest i with lambda0 r^(i+1) / (1 - r) <= tail_mass
    n_keep = max(1, math.ceil(math.log(tail_mass * (1 - nu.r) / nu.lambda0)
                              / math.log(nu.r)))
    idx = np.arange(n_keep)
    xs = nu.x0 * nu.q ** idx
    lams = nu.lambda0 * nu.r ** idx
    bias = nu.lambda0 * nu.r ** n_keep / (1 - nu.r)
    return xs, lams, bias
