"""Exact index combinatorics behind the chaos-expansion engine.

Expanding a product of N multiple stochastic integrals is driven by the
alphabet of nonempty subsets of {1..N} and by pairs of exponent vectors
over that alphabet: one vector of "identified" multiplicities (variables
that survive into a lower-order integral) and one of "contracted"
multiplicities (variables integrated out against the control measure).

This module enumerates those objects and counts them by four independent
routes -- brute-force enumeration, a recursion that peels off the last
factor, weak-composition splitting, and truncated generating functions --
so that each route can serve as an oracle for the others.  It also
provides singleton-free set partitions, Bell-polynomial evaluation and a
weak-composition generator.  Everything here is integer or rational
arithmetic; no floating point enters.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

MAX_FACTORS = 16


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _mask_elements(mask: int) -> tuple[int, ...]:
    """0-based element indices of a bitmask."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


@dataclass(frozen=True)
class SubsetIndex:
    """A nonempty subset of {1..n} together with its canonical position.

    The canonical order sorts by (cardinality ascending, numeric mask
    ascending), so the n singletons occupy ordinals 1..n and the full set
    comes last.
    """

    mask: int
    ordinal: int  # 1-based

    @property
    def cardinality(self) -> int:
        return _popcount(self.mask)

    @property
    def elements(self) -> tuple[int, ...]:
        """Members of the subset, 1-based and ascending."""
        return tuple(i + 1 for i in _mask_elements(self.mask))

    def contains(self, j: int) -> bool:
        """Membership test for a 1-based element index."""
        return bool(self.mask >> (j - 1) & 1)


@lru_cache(maxsize=None)
def subset_masks(n: int) -> tuple[int, ...]:
    """Bitmasks of all nonempty subsets of {1..n} in canonical order."""
    if not 1 <= n <= MAX_FACTORS:
        raise ValueError(f"number of factors must be in 1..{MAX_FACTORS}, got {n}")
    return tuple(sorted(range(1, 1 << n), key=lambda m: (_popcount(m), m)))


def enumerate_subsets(n: int) -> list[SubsetIndex]:
    """All 2**n - 1 nonempty subsets of {1..n} in canonical order."""
    return [SubsetIndex(mask=m, ordinal=i + 1) for i, m in enumerate(subset_masks(n))]


@lru_cache(maxsize=None)
def _large_first_masks(n: int, min_card: int, max_card: int | None = None) -> tuple[int, ...]:
    """Subset masks ordered by (cardinality descending, mask ascending).

    This is the processing order used by the nested-sum counters: any
    strict superset is processed before its subsets, the full set first
    and singletons last.
    """
    hi = n if max_card is None else max_card
    masks = [m for m in range(1, 1 << n) if min_card <= _popcount(m) <= hi]
    masks.sort(key=lambda m: (-_popcount(m), m))
    return tuple(masks)


@dataclass(frozen=True)
class ExponentPair:
    """One admissible pair of exponent vectors over the subset alphabet.

    ``identified[i]`` and ``contracted[i]`` are the multiplicities attached
    to the subset with ordinal ``i + 1`` in canonical order.  Admissibility
    means every factor index j is covered exactly ``orders[j-1]`` times over
    both vectors, and contractions never sit on singletons.
    """

    orders: tuple[int, ...]
    identified: tuple[int, ...]
    contracted: tuple[int, ...]

    @property
    def n_factors(self) -> int:
        return len(self.orders)

    @property
    def order(self) -> int:
        """Total identified multiplicity: the order k of the surviving integral."""
        return sum(self.identified)

    @property
    def contraction_count(self) -> int:
        return sum(self.contracted)

    def coefficient(self) -> Fraction:
        """Exact combinatorial weight m_1! ... m_N! / (l! l°!) of this pair."""
        num = 1
        for m in self.orders:
            num *= math.factorial(m)
        den = 1
        for v in self.identified:
            den *= math.factorial(v)
        for v in self.contracted:
            den *= math.factorial(v)
        return Fraction(num, den)

    def validate(self) -> None:
        n = self.n_factors
        masks = subset_masks(n)
        if len(self.identified) != len(masks) or len(self.contracted) != len(masks):
            raise ValueError("exponent vectors must have length 2**n - 1")
        for i, mask in enumerate(masks):
            if _popcount(mask) == 1 and self.contracted[i] != 0:
                raise ValueError("contraction multiplicity on a singleton subset")
        for j in range(n):
            cover = sum(
                (self.identified[i] + self.contracted[i])
                for i, mask in enumerate(masks)
                if mask >> j & 1
            )
            if cover != self.orders[j]:
                raise ValueError(
                    f"factor {j + 1} covered {cover} times, expected {self.orders[j]}"
                )


def _check_orders(orders: Sequence[int]) -> tuple[int, ...]:
    m = tuple(int(v) for v in orders)
    if not m:
        raise ValueError("need at least one factor order")
    if len(m) > MAX_FACTORS:
        raise ValueError(f"at most {MAX_FACTORS} factors supported")
    if any(v < 1 for v in m):
        raise ValueError("all factor orders must be >= 1")
    return m


def enumerate_exponents(orders: Sequence[int], k: int | None = None) -> list[ExponentPair]:
    """Brute-force enumeration of all admissible exponent pairs.

    Walks the subset alphabet depth-first, splitting each subset's usage
    into identified and contracted parts under the per-factor coverage
    budgets.  Contractions on singletons are excluded.  If ``k`` is given,
    only pairs with total identified multiplicity ``k`` are returned.

    This is the reference oracle for all counting routines.
    """
    m = _check_orders(orders)
    total_order = sum(m)
    if k is not None and not 0 <= k <= total_order:
        raise ValueError(f"k must be in 0..{total_order}")
    n = len(m)
    masks = subset_masks(n)
    eta = len(masks)
    elem_lists = [_mask_elements(mask) for mask in masks]
    budgets = list(m)
    ident = [0] * eta
    contr = [0] * eta
    out: list[ExponentPair] = []

    def rec(idx: int, ident_total: int) -> None:
        if k is not None and ident_total > k:
            return
        if idx == eta:
            if any(budgets):
                return
            if k is None or ident_total == k:
                out.append(ExponentPair(m, tuple(ident), tuple(contr)))
            return
        elems = elem_lists[idx]
        cap = min(budgets[e] for e in elems)
        singleton = len(elems) == 1
        for used in range(cap + 1):
            for e in elems:
                budgets[e] -= used
            splits = ((used, 0),) if singleton else tuple((li, used - li) for li in range(used + 1))
            for li, lo in splits:
                ident[idx] = li
                contr[idx] = lo
                rec(idx + 1, ident_total + li)
            ident[idx] = 0
            contr[idx] = 0
            for e in elems:
                budgets[e] += used
        return

    rec(0, 0)
    return out


# ---------------------------------------------------------------------------
# Counting route 1: recursion peeling off the last factor
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _usage_deltas(n: int, m_last: int, kappa: int) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Aggregated budget deltas for the subsets containing the last factor.

    Enumerates every way to spread ``kappa`` identified and
    ``m_last - kappa`` contracted units over the subsets containing factor
    n (contractions excluded from the bare singleton {n}), and groups the
    results by the induced coverage delta on factors 1..n-1.  Returns
    (delta, multiplicity) pairs.
    """
    half = 1 << (n - 1)
    acc: dict[tuple[int, ...], int] = {}
    if half == 1:
        # single factor: only the singleton {1} exists, no contraction slots
        lo_choices: tuple[tuple[int, ...], ...] = ((),) if m_last == kappa else ()
    else:
        lo_choices = tuple(weak_compositions(m_last - kappa, half - 1))
    for l_split in weak_compositions(kappa, half):
        for lo_split in lo_choices:
            delta = [0] * (n - 1)
            for sm in range(half):
                used = l_split[sm] + (lo_split[sm - 1] if sm >= 1 else 0)
                if used:
                    b = sm
                    while b:
                        low = b & -b
                        delta[low.bit_length() - 1] += used
                        b ^= low
            key = tuple(delta)
            acc[key] = acc.get(key, 0) + 1
    return tuple(acc.items())


@lru_cache(maxsize=None)
def _count_rec(k: int, m: tuple[int, ...]) -> int:
    if k < 0 or any(v < 0 for v in m):
        return 0
    if not m:
        return 1 if k == 0 else 0
    n = len(m)
    m_last = m[-1]
    head = m[:-1]
    total = 0
    for kappa in range(min(k, m_last) + 1):
        for delta, mult in _usage_deltas(n, m_last, kappa):
            reduced = tuple(h - d for h, d in zip(head, delta))
            if any(v < 0 for v in reduced):
                continue
            sub = _count_rec(k - kappa, reduced)
            if sub:
                total += mult * sub
    return total


def count_exponents_recursive(k: int, orders: Sequence[int]) -> int:
    """Number of admissible exponent pairs with identified total k, by recursion."""
    m = _check_orders(orders)
    if k < 0 or k > sum(m):
        return 0
    return _count_rec(k, m)


# ---------------------------------------------------------------------------
# Counting route 2: weak-composition splitting
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cover_count(masks: tuple[int, ...], budgets: tuple[int, ...],
                 k_rem: int | None, singleton_leftover: bool) -> int:
    """Nested-sum count of nonnegative tuples over ``masks`` meeting budgets.

    Each mask takes a value 0..min(remaining budgets over its elements),
    additionally capped by the remaining total ``k_rem`` when that is
    tracked.  With ``singleton_leftover`` the budgets left after all masks
    are spent are forced onto the singletons, in which case the tuple is
    counted when those forced values exhaust ``k_rem`` exactly; otherwise
    the budgets must come out at zero.
    """
    if not masks:
        if singleton_leftover:
            return 1 if (k_rem is None or sum(budgets) == k_rem) else 0
        if any(budgets):
            return 0
        return 1 if k_rem in (None, 0) else 0
    mask = masks[0]
    elems = _mask_elements(mask)
    cap = min(budgets[e] for e in elems)
    if k_rem is not None:
        cap = min(cap, k_rem)
    total = 0
    rest = masks[1:]
    for q in range(cap + 1):
        nb = tuple(b - q if i in elems else b for i, b in enumerate(budgets))
        total += _cover_count(rest, nb, None if k_rem is None else k_rem - q,
                              singleton_leftover)
    return total


def count_exponents_weakcomp(k: int, orders: Sequence[int]) -> int:
    """Counting by splitting the coverage between contractions and survivors.

    Splits each factor's budget m_j into a contracted part and an
    identified part, counts the contraction tuples (over non-singleton
    subsets) and the identified tuples (total k, singletons taking the
    slack) separately by nested weak-composition sums, and convolves over
    all splits.
    """
    m = _check_orders(orders)
    if k < 0 or k > sum(m):
        return 0
    n = len(m)
    hat_masks = _large_first_masks(n, 2)
    total = 0
    for taken in itertools.product(*(range(v + 1) for v in m)):
        rest = tuple(v - t for v, t in zip(m, taken))
        c_hat = _cover_count(hat_masks, taken, None, False)
        if c_hat:
            c_check = _cover_count(hat_masks, rest, k, True)
            if c_check:
                total += c_hat * c_check
    return total


def count_exponents_brownian(k: int, orders: Sequence[int]) -> int:
    """Number of terms surviving the Brownian selection rules.

    Under the Brownian rules only singleton identifications and pure pair
    contractions survive, so the count is nonzero only when sum(m) - k is
    even and the pair budgets can be matched.
    """
    m = _check_orders(orders)
    if k < 0 or k > sum(m):
        return 0
    n = len(m)
    pair_masks = _large_first_masks(n, 2, 2)
    total = 0
    for surv in itertools.product(*(range(v + 1) for v in m)):
        if sum(surv) != k:
            continue
        taken = tuple(v - s for v, s in zip(m, surv))
        total += _cover_count(pair_masks, taken, None, False)
    return total


# ---------------------------------------------------------------------------
# Counting route 3: truncated generating functions
# ---------------------------------------------------------------------------

def _mul_geometric(poly: dict[tuple[int, ...], int], mask: int,
                   bounds: tuple[int, ...], k_cap: int, with_y: bool) -> dict[tuple[int, ...], int]:
    """Multiply a truncated series by sum_c (y^c) x^(c * t_mask).

    Coefficients of the geometric factor are all 1: every usage count of
    the subset contributes a single monomial, which is what makes the
    series coefficients count tuples rather than weighted tuples.
    Truncation keeps y-degree <= k_cap and x_j-degree <= bounds[j].
    """
    elems = _mask_elements(mask)
    out: dict[tuple[int, ...], int] = {}
    for key, coef in poly.items():
        y = key[0]
        cap = min(bounds[e] - key[1 + e] for e in elems)
        if with_y:
            cap = min(cap, k_cap - y)
        if cap < 0:
            continue
        for c in range(cap + 1):
            nk = list(key)
            if with_y:
                nk[0] = y + c
            for e in elems:
                nk[1 + e] += c
            tk = tuple(nk)
            out[tk] = out.get(tk, 0) + coef
    return out


def count_exponents_genfunc(k: int, orders: Sequence[int]) -> int:
    """Coefficient extraction from the product of truncated geometric series.

    The identified vector contributes one y-graded geometric series per
    subset; the contracted vector one ungraded series per non-singleton
    subset.  The requested count is the coefficient of y^k x^m in the
    product, computed with dense exponent-keyed polynomials truncated at
    degree m_j in x_j and degree k in y.
    """
    m = _check_orders(orders)
    if k < 0 or k > sum(m):
        return 0
    n = len(m)
    poly: dict[tuple[int, ...], int] = {(0,) * (n + 1): 1}
    for mask in subset_masks(n):
        poly = _mul_geometric(poly, mask, m, k, with_y=True)
    for mask in subset_masks(n):
        if _popcount(mask) >= 2:
            poly = _mul_geometric(poly, mask, m, k, with_y=False)
    return poly.get((k, *m), 0)


# ---------------------------------------------------------------------------
# Singleton-free partitions and Bell polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingletonFreePartition:
    """A set partition of {1..n} with every block of size >= 2.

    Blocks are stored as bitmasks ordered by their least element.
    """

    blocks: tuple[int, ...]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(sorted(_popcount(b) for b in self.blocks))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_elements(self) -> tuple[tuple[int, ...], ...]:
        """Blocks as tuples of 1-based elements."""
        return tuple(tuple(e + 1 for e in _mask_elements(b)) for b in self.blocks)


def singleton_free_partitions(n: int) -> list[SingletonFreePartition]:
    """All partitions of {1..n} into blocks of size >= 2."""
    if not 1 <= n <= MAX_FACTORS:
        raise ValueError(f"n must be in 1..{MAX_FACTORS}, got {n}")
    out: list[SingletonFreePartition] = []
    full = (1 << n) - 1

    def rec(remaining: int, blocks: tuple[int, ...]) -> None:
        if remaining == 0:
            out.append(SingletonFreePartition(blocks))
            return
        low = remaining & -remaining
        rest = remaining ^ low
        # companions of the least remaining element: any nonempty submask
        sub = rest
        while sub:
            block = low | sub
            rec(remaining ^ block, blocks + (block,))
            sub = (sub - 1) & rest

    rec(full, ())
    out.sort(key=lambda p: p.blocks)
    return out


@dataclass(frozen=True)
class BellCoefficient:
    """Multiplicity-vector coefficient of a partition shape.

    ``j_vector[a-1]`` is the number of blocks of size a; the value is
    n! / prod_a(j_a! * (a!)^j_a), the number of set partitions of that
    shape, always a positive integer.
    """

    n: int
    j_vector: tuple[int, ...]
    value: int


def bell_coefficients(n: int, min_part: int = 1) -> list[BellCoefficient]:
    """Shape coefficients of the n-th Bell polynomial, parts >= min_part.

    The j-vector is reported with length n - q + 1 where q is the number
    of blocks.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    shapes: list[BellCoefficient] = []

    def rec(remaining: int, part: int, counts: dict[int, int]) -> None:
        if remaining == 0:
            q = sum(counts.values())
            width = n - q + 1
            j_vec = tuple(counts.get(a, 0) for a in range(1, width + 1))
            den = 1
            for a, j in counts.items():
                den *= math.factorial(j) * math.factorial(a) ** j
            value, rem = divmod(math.factorial(n), den)
            assert rem == 0
            shapes.append(BellCoefficient(n, j_vec, value))
            return
        for a in range(part, remaining + 1):
            counts[a] = counts.get(a, 0) + 1
            rec(remaining - a, a, counts)
            counts[a] -= 1
            if not counts[a]:
                del counts[a]

    rec(n, min_part, {})
    shapes.sort(key=lambda c: c.j_vector)
    return shapes


def bell_eval(n: int, values: Sequence, method: str = "partitions"):
    """Evaluate B_n(0, x_2, ..., x_n), the Bell polynomial with x_1 = 0.

    ``values`` supplies x_2..x_n (length n - 1; ignored beyond that).
    Works with exact rationals as well as floats.  Two routes are
    implemented: summation over singleton-free partitions, and the
    closed-form shape-coefficient sum; they must agree.

    For n = 1 the value is 0: no singleton-free partition of one element.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= 2 and len(values) < n - 1:
        raise ValueError(f"need x_2..x_{n}: {n - 1} values")
    if method == "partitions":
        total = 0
        for part in singleton_free_partitions(n):
            prod = 1
            for b in part.blocks:
                prod = prod * values[_popcount(b) - 2]
            total = total + prod
        return total
    if method == "coefficients":
        total = 0
        for coef in bell_coefficients(n, min_part=2):
            prod = coef.value
            for a, j in enumerate(coef.j_vector, start=1):
                if j:
                    prod = prod * values[a - 2] ** j
            total = total + prod
        return total
    raise ValueError(f"unknown method {method!r}")


def weak_compositions(r: int, n: int) -> Iterator[tuple[int, ...]]:
    """Yield all n-tuples of nonnegative integers summing to r.

    Lexicographic order; there are C(r + n - 1, n - 1) of them.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if n < 1:
        raise ValueError("n must be >= 1")

    def rec(prefix: tuple[int, ...], remaining: int, slots: int) -> Iterator[tuple[int, ...]]:
        if slots == 1:
            yield prefix + (remaining,)
            return
        for v in range(remaining + 1):
            yield from rec(prefix + (v,), remaining - v, slots - 1)

    return rec((), r, n)
