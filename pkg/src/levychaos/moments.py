"""Closed-form moments and cumulants of order-one stochastic integrals.

The N-th moment of a centered order-one integral is a Bell polynomial in
the power integrals of its kernel; its cumulants ARE those power
integrals.  This gives exact long-horizon diagnostics: standardized
cumulants of the normalized integral decide between a central limit
theorem and convergence to a non-Gaussian law, depending on how fast the
time factor grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import combinatorics as cb
from .measure import (ControlMeasure, KernelFactor, SpaceFactor, TimeFactor,
                      log_time_integral, m_power_integral, m_product_integral,
                      nu_power_integral)

__all__ = [
    "CumulantSequence", "CltScanResult", "DivergentIntegralError",
    "moment_order1", "cumulants_order1", "expectation_product_order1",
    "moments_from_cumulants", "cumulants_from_moments",
    "clt_scan", "limiting_cumulants",
]


class DivergentIntegralError(ValueError):
    """A required power integral of the kernel diverges."""

    def __init__(self, order: int):
        self.order = order
        super().__init__(f"power integral of order {order} diverges")


@dataclass(frozen=True)
class CumulantSequence:
    """Cumulants kappa_1..kappa_N, raw or divided by kappa_2^(N/2)."""

    values: tuple[float, ...]
    normalization: str = "raw"

    def __post_init__(self):
        if self.normalization not in ("raw", "standardized"):
            raise ValueError("normalization must be 'raw' or 'standardized'")

    def standardized(self) -> "CumulantSequence":
        if self.normalization == "standardized":
            return self
        k2 = self.values[1]
        if k2 <= 0:
            raise ValueError("second cumulant must be positive to standardize")
        vals = tuple(v / k2 ** (n / 2) for n, v in enumerate(self.values, start=1))
        return CumulantSequence(vals, "standardized")


def _power_args(factor: KernelFactor, n: int, measure: ControlMeasure) -> list[float]:
    """x_2..x_n for the Bell evaluation: order 2 over the full measure,
    higher orders over the jump part only."""
    args = []
    for order in range(2, n + 1):
        domain = "full" if order == 2 else "r0"
        v = m_power_integral(factor, order, measure, domain=domain)
        if not math.isfinite(v):
            raise DivergentIntegralError(order)
        args.append(v)
    return args


def moment_order1(factor: KernelFactor, n: int, measure: ControlMeasure) -> float:
    """N-th moment of the centered order-one integral of the factor."""
    if n < 1:
        raise ValueError("moment order must be >= 1")
    if n == 1:
        return 0.0
    return cb.bell_eval(n, _power_args(factor, n, measure))


def cumulants_order1(factor: KernelFactor, n_max: int,
                     measure: ControlMeasure) -> CumulantSequence:
    """Cumulants kappa_1..kappa_n_max of the order-one integral."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    values = [0.0]
    if n_max >= 2:
        values.extend(_power_args(factor, n_max, measure))
    return CumulantSequence(tuple(values))


def expectation_product_order1(factors: Sequence[KernelFactor],
                               measure: ControlMeasure) -> float:
    """Expected product of order-one integrals via singleton-free partitions.

    Each partition contributes the product of its per-block mixed
    integrals: size-2 blocks over the full measure, larger blocks over
    the jump part.
    """
    n = len(factors)
    if n < 1:
        raise ValueError("need at least one factor")
    if n == 1:
        return 0.0
    total = 0.0
    for part in cb.singleton_free_partitions(n):
        prod = 1.0
        for block in part.block_elements():
            domain = "full" if len(block) == 2 else "r0"
            prod *= m_product_integral([factors[j - 1] for j in block],
                                       measure, domain=domain)
        total += prod
    return total


def moments_from_cumulants(cumulants: Sequence[float]) -> list[float]:
    """Raw moments m_1..m_N from cumulants by the standard recursion."""
    kappa = list(cumulants)
    n = len(kappa)
    moments = [1.0]  # m_0
    for order in range(1, n + 1):
        m = 0.0
        for j in range(1, order + 1):
            m += math.comb(order - 1, j - 1) * kappa[j - 1] * moments[order - j]
        moments.append(m)
    return moments[1:]


def cumulants_from_moments(moments: Sequence[float]) -> list[float]:
    """Inverse of :func:`moments_from_cumulants`."""
    mom = [1.0] + list(moments)
    n = len(moments)
    kappa: list[float] = []
    for order in range(1, n + 1):
        k = mom[order]
        for j in range(1, order):
            k -= math.comb(order - 1, j - 1) * kappa[j - 1] * mom[order - j]
        kappa.append(k)
    return kappa


# ---------------------------------------------------------------------------
# Long-horizon behaviour
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CltScanResult:
    """Standardized cumulant ratios on a horizon grid, with analytic targets.

    ``ratios[N]`` aligns with ``T_grid``; ``targets[N]`` is the known
    horizon limit (0.0 for sub-exponential growth, finite for exponential
    rate-one growth, inf for faster growth, nan when no target applies).
    ``h_scale`` is the factor applied to the space part to normalize its
    squared mass to one.
    """

    T_grid: tuple[float, ...]
    orders: tuple[int, ...]
    ratios: dict[int, tuple[float, ...]]
    targets: dict[int, float]
    h_scale: float


def _exp_target(n: int, g: TimeFactor, nu_ratio: float) -> float:
    """Analytic horizon limit of the standardized N-th cumulant."""
    if not g.exp_terms:
        return 0.0
    if len(g.exp_terms) == 1:
        rate, alpha = g.exp_terms[0]
        if rate > 0:
            if alpha < 1:
                return 0.0
            if alpha == 1:
                return nu_ratio * (2 * rate) ** (n / 2) / (n * rate)
            return math.inf
    return math.nan


def clt_scan(g: TimeFactor, h: SpaceFactor, measure: ControlMeasure,
             n_max: int, T_grid: Sequence[float]) -> CltScanResult:
    """Standardized cumulants of the normalized integral over a horizon grid.

    The space factor is rescaled so its squared mass under
    sigma^2 delta_0 + nu is one; the N-th standardized cumulant then
    factorizes into nu(h^N) times a pure time ratio, evaluated in log
    space so horizons like T = 50 with exponential factors do not
    overflow.
    """
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    if any(t <= 0 for t in T_grid):
        raise ValueError("horizons must be positive")
    h2 = nu_power_integral(measure.nu, [h], [2]) + measure.sigma2 * h.h0 ** 2
    if not (h2 > 0 and math.isfinite(h2)):
        raise ValueError("space factor must have finite positive squared mass")
    scale = 1.0 / math.sqrt(h2)
    orders = tuple(range(3, n_max + 1))
    log_i2 = {t: log_time_integral(g, 2, t) for t in T_grid}
    ratios: dict[int, tuple[float, ...]] = {}
    targets: dict[int, float] = {}
    for n in orders:
        nu_hn = nu_power_integral(measure.nu, [h], [n]) * scale ** n
        if not math.isfinite(nu_hn):
            raise DivergentIntegralError(n)
        row = []
        for t in T_grid:
            log_ratio = log_time_integral(g, n, t) - 0.5 * n * log_i2[t]
            row.append(nu_hn * math.exp(log_ratio) if log_ratio < 700 else
                       math.copysign(math.inf, nu_hn))
        ratios[n] = tuple(row)
        targets[n] = _exp_target(n, g, nu_hn)
    return CltScanResult(tuple(float(t) for t in T_grid), orders, ratios,
                         targets, scale)


def limiting_cumulants(h: SpaceFactor, measure: ControlMeasure,
                       n_max: int) -> CumulantSequence:
    """Cumulants of the non-Gaussian horizon limit for rate-one exponential
    time factors: kappa_N = nu(h^N) 2^(N/2) / N after normalization."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    h2 = nu_power_integral(measure.nu, [h], [2]) + measure.sigma2 * h.h0 ** 2
    if not (h2 > 0 and math.isfinite(h2)):
        raise ValueError("space factor must have finite positive squared mass")
    scale = 1.0 / math.sqrt(h2)
    values = [0.0]
    for n in range(2, n_max + 1):
        nu_hn = nu_power_integral(measure.nu, [h], [n]) * scale ** n
        values.append(nu_hn * 2 ** (n / 2) / n)
    return CumulantSequence(tuple(values))
