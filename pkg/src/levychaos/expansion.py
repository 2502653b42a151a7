"""Expansion of products of multiple stochastic integrals into chaos terms.

A product of N multiple integrals with symmetrized separable tensor
kernels expands into a finite sum of multiple integrals of every order
k = 0..m_1+...+m_N.  Each admissible exponent pair contributes one term:
an exact rational coefficient, a fully-contracted scalar, and a list of
identified kernel factors that survive into the order-k integral.

Because the input kernels are symmetrized, a term is evaluated by
averaging over all assignments of each kernel's factors to its variable
slots; assignment classes that produce distinct identified factors are
kept as separate weighted pieces of the term.  Selection rules decide
which slots survive and which are restricted to x != 0; a general table,
a Brownian-only table and a jump-only table are provided.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import combinatorics as cb
from .measure import (ControlMeasure, KernelFactor, abs_factor,
                      kernel_product, m_product_integral)

__all__ = [
    "MeasureClass", "TensorKernel", "TermPiece", "ChaosTerm", "ChaosExpansion",
    "SquareIntegrabilityError", "IntegrabilityReport", "TermCheck",
    "contract_term", "expand_product", "expectation_of_product",
    "check_square_integrability", "expansion_second_moment", "ryser_permanent",
]

MAX_TOTAL_ORDER = 12


class MeasureClass:
    """Selection-rule tables for the three driving-measure regimes."""

    GENERAL = "general"
    BROWNIAN = "brownian"
    JUMP = "jump"
    ALL = (GENERAL, BROWNIAN, JUMP)


def _check_class(mclass: str) -> str:
    if mclass not in MeasureClass.ALL:
        raise ValueError(f"unknown measure class {mclass!r}")
    return mclass


@dataclass(frozen=True)
class TensorKernel:
    """Symmetrization of the tensor product of separable factors.

    Two kernels whose factor lists are permutations of each other denote
    the same symmetric function.
    """

    factors: tuple[KernelFactor, ...]
    label: str = ""

    def __post_init__(self):
        if not self.factors:
            raise ValueError("a kernel needs at least one factor")

    @property
    def order(self) -> int:
        return len(self.factors)

    def canonical(self) -> "TensorKernel":
        return TensorKernel(tuple(sorted(self.factors, key=repr)), self.label)

    @staticmethod
    def pure_power(factor: KernelFactor, order: int, label: str = "") -> "TensorKernel":
        return TensorKernel((factor,) * order, label)


@dataclass(frozen=True)
class TermPiece:
    """One assignment class of a term: weight, contracted scalar, survivors."""

    weight: Fraction
    scalar: float
    factors: tuple[KernelFactor, ...]


@dataclass(frozen=True)
class ChaosTerm:
    """One expansion term: coefficient times a mixture of tensor pieces.

    For pure-power kernels there is a single piece and ``identified_factors``
    recovers the plain (scalar, factor list) view.
    """

    exponents: cb.ExponentPair
    coefficient: Fraction
    pieces: tuple[TermPiece, ...]

    @property
    def order(self) -> int:
        return self.exponents.order

    @property
    def scalar(self) -> float:
        """Weight-averaged contracted scalar; exact for order-0 terms."""
        return math.fsum(float(p.weight) * p.scalar for p in self.pieces)

    @property
    def identified_factors(self) -> tuple[KernelFactor, ...]:
        if len(self.pieces) != 1:
            raise ValueError("term mixes assignment classes; inspect .pieces")
        return self.pieces[0].factors

    @property
    def divergent(self) -> bool:
        return any(not math.isfinite(p.scalar) for p in self.pieces)


@dataclass(frozen=True)
class ChaosExpansion:
    orders: tuple[int, ...]
    measure_class: str
    terms_by_order: dict[int, tuple[ChaosTerm, ...]]

    @property
    def total_order(self) -> int:
        return sum(self.orders)

    def terms(self, k: int) -> tuple[ChaosTerm, ...]:
        return self.terms_by_order.get(k, ())

    def n_terms(self) -> int:
        return sum(len(v) for v in self.terms_by_order.values())


# ---------------------------------------------------------------------------
# Selection rules
# ---------------------------------------------------------------------------

def _identified_r0(card: int, mclass: str) -> bool:
    # products over two or more kernels re-enter the integral through the
    # jump part only, so the general table kills their Gaussian slot
    return mclass == MeasureClass.GENERAL and card >= 2


def _contraction_domain(card: int, mclass: str) -> str:
    if mclass == MeasureClass.GENERAL and card >= 3:
        return "r0"
    return "full"


def class_admits(ep: cb.ExponentPair, mclass: str) -> bool:
    """Whether an exponent pair survives the class's selection rules.

    Pairs with contractions on singletons are excluded everywhere (the
    enumerator never produces them).  The Brownian table additionally
    kills identifications off singletons and contractions off pairs.
    """
    if mclass != MeasureClass.BROWNIAN:
        return True
    masks = cb.subset_masks(ep.n_factors)
    for i, mask in enumerate(masks):
        card = bin(mask).count("1")
        if ep.identified[i] and card != 1:
            return False
        if ep.contracted[i] and card != 2:
            return False
    return True


# ---------------------------------------------------------------------------
# Term construction
# ---------------------------------------------------------------------------

def _distinct_orderings(factors: tuple[KernelFactor, ...]):
    """Distinct orderings of a factor multiset with their assignment weights.

    Weights are the fraction of the m! raw assignments landing on each
    ordering; they sum to one.
    """
    m = len(factors)
    uniq: list[KernelFactor] = []
    counts: list[int] = []
    for f in factors:
        for i, u in enumerate(uniq):
            if u == f:
                counts[i] += 1
                break
        else:
            uniq.append(f)
            counts.append(1)
    if len(uniq) == 1:
        return [(factors, Fraction(1))]
    mult = 1
    for c in counts:
        mult *= math.factorial(c)
    weight = Fraction(mult, math.factorial(m))
    out = []

    def rec(prefix: tuple[KernelFactor, ...], remaining: list[int]) -> None:
        if len(prefix) == m:
            out.append((prefix, weight))
            return
        for i, c in enumerate(remaining):
            if c:
                remaining[i] -= 1
                rec(prefix + (uniq[i],), remaining)
                remaining[i] += 1

    rec((), counts)
    return out


def _scalar_product(values: Sequence[float]) -> float:
    if any(not math.isfinite(v) for v in values):
        return math.inf
    out = 1.0
    for v in values:
        out *= v
    return out


def contract_term(kernels: Sequence[TensorKernel], ep: cb.ExponentPair,
                  measure: ControlMeasure, mclass: str = MeasureClass.GENERAL) -> ChaosTerm:
    """Evaluate one expansion term for the given exponent pair.

    Every contraction slot integrates the participating factors against
    the control measure (domain per the class rules); every identified
    slot forms their pointwise product as a surviving kernel factor.  The
    result averages over all factor-to-slot assignments, grouped into
    weighted pieces by the surviving factor tuple.
    """
    _check_class(mclass)
    n = len(kernels)
    masks = cb.subset_masks(n)
    ident_slots: list[int] = []
    contr_slots: list[int] = []
    for i in range(len(masks)):
        ident_slots.extend([i] * ep.identified[i])
        contr_slots.extend([i] * ep.contracted[i])

    kernel_slots: list[list[tuple[str, int]]] = []
    for j in range(n):
        bit = 1 << j
        sl = [("i", s) for s, sub in enumerate(ident_slots) if masks[sub] & bit]
        sl += [("c", s) for s, sub in enumerate(contr_slots) if masks[sub] & bit]
        if len(sl) != kernels[j].order:
            raise ValueError("exponent pair does not match kernel orders")
        kernel_slots.append(sl)

    ident_r0 = [_identified_r0(bin(masks[s]).count("1"), mclass) for s in ident_slots]
    contr_dom = [_contraction_domain(bin(masks[s]).count("1"), mclass) for s in contr_slots]

    acc: dict[tuple[KernelFactor, ...], list] = {}
    orderings = [_distinct_orderings(k.factors) for k in kernels]
    for combo in itertools.product(*orderings):
        weight = Fraction(1)
        for _, w in combo:
            weight *= w
        ident_parts: list[list[KernelFactor]] = [[] for _ in ident_slots]
        contr_parts: list[list[KernelFactor]] = [[] for _ in contr_slots]
        for j, (ordered, _) in enumerate(combo):
            for pos, (kind, s) in enumerate(kernel_slots[j]):
                (ident_parts if kind == "i" else contr_parts)[s].append(ordered[pos])
        values = [m_product_integral(contr_parts[s], measure, domain=contr_dom[s])
                  for s in range(len(contr_slots))]
        scalar = _scalar_product(values)
        factors = tuple(kernel_product(ident_parts[s], measure.nu, force_r0=ident_r0[s])
                        for s in range(len(ident_slots)))
        entry = acc.setdefault(factors, [Fraction(0), 0.0])
        entry[0] += weight
        entry[1] += float(weight) * scalar

    pieces = tuple(
        TermPiece(w, ws / float(w), factors)
        for factors, (w, ws) in sorted(acc.items(), key=lambda kv: repr(kv[0]))
    )
    return ChaosTerm(ep, ep.coefficient(), pieces)


def _admissible_pairs(orders: tuple[int, ...], mclass: str,
                      k: int | None = None) -> list[cb.ExponentPair]:
    return [ep for ep in cb.enumerate_exponents(orders, k)
            if class_admits(ep, mclass)]


def expand_product(kernels: Sequence[TensorKernel], measure: ControlMeasure,
                   mclass: str = MeasureClass.GENERAL,
                   force: bool = False) -> ChaosExpansion:
    """Full orthogonal expansion of a product of multiple integrals.

    Refuses (listing the offending exponent pairs) when the
    square-integrability condition fails, unless ``force`` is set.
    """
    _check_class(mclass)
    orders = tuple(k.order for k in kernels)
    if not orders:
        raise ValueError("need at least one kernel")
    if sum(orders) > MAX_TOTAL_ORDER:
        raise ValueError(f"total order capped at {MAX_TOTAL_ORDER}")
    if not force:
        report = check_square_integrability(kernels, measure, mclass)
        if not report.ok:
            raise SquareIntegrabilityError(report)
    by_order: dict[int, list[ChaosTerm]] = {}
    for ep in _admissible_pairs(orders, mclass):
        term = contract_term(kernels, ep, measure, mclass)
        by_order.setdefault(ep.order, []).append(term)
    frozen = {
        k: tuple(sorted(v, key=lambda t: (t.exponents.identified, t.exponents.contracted)))
        for k, v in sorted(by_order.items())
    }
    return ChaosExpansion(orders, mclass, frozen)


def expectation_of_product(kernels: Sequence[TensorKernel], measure: ControlMeasure,
                           mclass: str = MeasureClass.GENERAL) -> float:
    """Expected value of the product: the order-0 level of the expansion."""
    _check_class(mclass)
    orders = tuple(k.order for k in kernels)
    total = 0.0
    for ep in _admissible_pairs(orders, mclass, k=0):
        term = contract_term(kernels, ep, measure, mclass)
        total += float(term.coefficient) * term.scalar
    return total


# ---------------------------------------------------------------------------
# Square integrability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermCheck:
    exponents: cb.ExponentPair
    finite: bool
    norm_sq: float
    detail: str = ""


@dataclass(frozen=True)
class IntegrabilityReport:
    ok: bool
    entries: tuple[TermCheck, ...]

    def failures(self) -> tuple[TermCheck, ...]:
        return tuple(e for e in self.entries if not e.finite)


class SquareIntegrabilityError(RuntimeError):
    """Expansion refused: some term has a divergent squared norm."""

    def __init__(self, report: IntegrabilityReport):
        self.report = report
        bad = ", ".join(
            f"(l={e.exponents.identified}, lo={e.exponents.contracted})"
            for e in report.failures())
        super().__init__(f"square-integrability condition fails at: {bad}")


def _term_norm_sq(term: ChaosTerm, measure: ControlMeasure) -> tuple[float, str]:
    """Coefficient-free squared norm of a term's symmetrized kernel.

    Returns (value, detail); the value is +inf as soon as any contracted
    scalar or Gram entry diverges.
    """
    k = term.order
    for p in term.pieces:
        if not math.isfinite(p.scalar):
            return math.inf, "divergent contraction integral"
    if k == 0:
        return term.scalar ** 2, ""
    entries = [(float(p.weight) * p.scalar, p.factors) for p in term.pieces]
    fact_k = math.factorial(k)
    total = 0.0
    for i, (ci, fi) in enumerate(entries):
        for j in range(i, len(entries)):
            cj, fj = entries[j]
            gram = [[m_product_integral([u, w], measure) for w in fj] for u in fi]
            if any(not math.isfinite(g) for row in gram for g in row):
                return math.inf, "divergent pairing of identified factors"
            contrib = ci * cj * ryser_permanent(gram) / fact_k
            total += contrib if i == j else 2 * contrib
    return total, ""


def check_square_integrability(kernels: Sequence[TensorKernel],
                               measure: ControlMeasure,
                               mclass: str = MeasureClass.GENERAL) -> IntegrabilityReport:
    """Evaluate the sufficient product-formula condition term by term.

    Each admissible exponent pair is contracted with absolute-value
    factors and the squared norm of the resulting symmetrized kernel is
    computed; any divergence is reported, never raised.
    """
    _check_class(mclass)
    abs_kernels = [TensorKernel(tuple(abs_factor(f) for f in k.factors), k.label)
                   for k in kernels]
    orders = tuple(k.order for k in kernels)
    entries = []
    for ep in _admissible_pairs(orders, mclass):
        term = contract_term(abs_kernels, ep, measure, mclass)
        norm_sq, detail = _term_norm_sq(term, measure)
        entries.append(TermCheck(ep, math.isfinite(norm_sq), norm_sq, detail))
    entries.sort(key=lambda e: (e.exponents.order, e.exponents.identified,
                                e.exponents.contracted))
    return IntegrabilityReport(all(e.finite for e in entries), tuple(entries))


# ---------------------------------------------------------------------------
# Second moment via Gram permanents
# ---------------------------------------------------------------------------

def ryser_permanent(mat: Sequence[Sequence[float]]) -> float:
    """Permanent of a square matrix by Ryser's inclusion-exclusion.

    Gray-code column updates; intended for n <= 12 Gram matrices.
    """
    n = len(mat)
    if n == 0:
        return 1.0
    if any(len(row) != n for row in mat):
        raise ValueError("matrix must be square")
    if n > 16:
        raise ValueError("permanent limited to n <= 16")
    row_sums = [0.0] * n
    total = 0.0
    prev = 0
    for g in range(1, 1 << n):
        gray = g ^ (g >> 1)
        diff = gray ^ prev
        col = diff.bit_length() - 1
        if gray & diff:
            for i in range(n):
                row_sums[i] += mat[i][col]
        else:
            for i in range(n):
                row_sums[i] -= mat[i][col]
        prod = 1.0
        for v in row_sums:
            prod *= v
        size = bin(gray).count("1")
        total += prod if (n - size) % 2 == 0 else -prod
        prev = gray
    return total


def expansion_second_moment(exp: ChaosExpansion, measure: ControlMeasure) -> float:
    """Second moment of the expanded product.

    The order-0 level contributes its square; every level k >= 1
    contributes k! times the squared norm of its symmetrized kernel sum,
    with inner products of symmetrized tensor factors evaluated through
    permanents of pairing Gram matrices.  Divergence propagates as +inf.
    """
    zero = math.fsum(float(t.coefficient) * t.scalar
                     for t in exp.terms_by_order.get(0, ()))
    total = zero * zero
    for k, terms in exp.terms_by_order.items():
        if k == 0:
            continue
        entries: list[tuple[float, tuple[KernelFactor, ...]]] = []
        for t in terms:
            for p in t.pieces:
                if not math.isfinite(p.scalar):
                    return math.inf
                c = float(t.coefficient * p.weight) * p.scalar
                if c != 0.0:
                    entries.append((c, p.factors))
        for i, (ci, fi) in enumerate(entries):
            for j in range(i, len(entries)):
                cj, fj = entries[j]
                gram = [[m_product_integral([u, w], measure) for w in fj] for u in fi]
                if any(not math.isfinite(g) for row in gram for g in row):
                    return math.inf
                contrib = ci * cj * ryser_permanent(gram)
                total += contrib if i == j else 2 * contrib
    return total
