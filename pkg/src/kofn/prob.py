"""Exact probability kernel for failure counts in k-of-n testing.

Everything here is a pure function over exact rationals. The central object
is the truncated distribution of the number of failed tests over a group of
processors: counts above the threshold k are lumped into a single tail entry,
because no consumer ever distinguishes "k failures" from "more than k" -- an
item is discarded the moment it reaches k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError, DomainError
from .instances import Instance
from .rational import ONE, ZERO, Rat, RatLike, rat


@dataclass
class OpCounter:
    """Tallies of the arithmetic the solver wants accounted for.

    conv_terms counts multiply-add terms inside truncated convolutions (the
    quantity the merge-cost analysis bounds by O(nk)); tail_terms counts the
    additions that close off each convolution's lumped tail.
    """

    conv_terms: int = 0
    tail_terms: int = 0
    pmf_terms: int = 0
    heap_pops: int = 0
    heap_inserts: int = 0
    merges: int = 0
    phases: int = 0


@dataclass(frozen=True)
class CountDistribution:
    """Distribution of the failure count Z over a processor group, truncated at k.

    mass[v] = Pr[Z = v] for v < k, and mass[k] = Pr[Z >= k].
    """

    k: int
    mass: tuple[Rat, ...]

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"threshold k = {self.k} must be >= 1")
        if len(self.mass) != self.k + 1:
            raise ContractError(f"mass must have k+1 = {self.k + 1} entries, got {len(self.mass)}")

    @property
    def tail(self) -> Rat:
        """Pr[Z >= k]."""
        return self.mass[self.k]

    def exact_top(self) -> int:
        """Largest v < k with mass[v] > 0 (the non-tail support bound).

        Groups built from q in (0,1) always have mass[0] > 0, so this is the
        group size capped at k-1 for such groups.
        """
        for v in range(self.k - 1, -1, -1):
            if self.mass[v] > 0:
                return v
        return 0

    def at_least(self) -> tuple[Rat, ...]:
        """Upper tail probabilities: entry v is Pr[Z >= v], for v = 0..k."""
        ge = [ZERO] * (self.k + 1)
        ge[self.k] = self.mass[self.k]
        for v in range(self.k - 1, -1, -1):
            ge[v] = ge[v + 1] + self.mass[v]
        return tuple(ge)

    def expected_capped(self) -> Rat:
        """E[min(k, Z)], computed from the truncated masses."""
        total = ZERO
        for v in range(self.k):
            total += v * self.mass[v]
        return total + self.k * self.mass[self.k]

    def check(self) -> None:
        """Assert the invariants: entries in [0,1] and summing exactly to 1."""
        if any(v < 0 or v > 1 for v in self.mass):
            raise ContractError("count distribution entries must lie in [0,1]")
        if sum(self.mass) != 1:
            raise ContractError(f"count distribution sums to {sum(self.mass)}, not 1")


def point_mass_at_zero(k: int) -> CountDistribution:
    """Distribution of the failure count over an empty group."""
    return CountDistribution(k, (ONE,) + (ZERO,) * k)


def exact_count_pmf(
    q, k: int, counter: OpCounter | None = None
) -> CountDistribution:
    """Exact truncated pmf of the number of failures among independent tests.

    q lists the failure probabilities (1 - p_i), each strictly inside (0,1).
    An empty list yields the point mass at zero failures.
    """
    if k < 1:
        raise DomainError(f"threshold k = {k} must be >= 1")
    qs = [rat(v) for v in q]
    for i, v in enumerate(qs):
        if not (0 < v < 1):
            raise DomainError(f"q[{i}] = {v} must lie strictly inside (0,1)")
    mass = [ONE] + [ZERO] * k
    top = 0  # highest possibly-nonzero index below k
    for qi in qs:
        pi = 1 - qi
        # Saturating update: mass at >= k only ever grows.
        mass[k] = mass[k] + mass[k - 1] * qi
        top = min(top + 1, k - 1)
        for v in range(top, 0, -1):
            mass[v] = mass[v] * pi + mass[v - 1] * qi
        mass[0] = mass[0] * pi
        if counter is not None:
            counter.pmf_terms += 2 * (top + 1)
    return CountDistribution(k, tuple(mass))


def convolve_counts(
    a: CountDistribution, b: CountDistribution, counter: OpCounter | None = None
) -> CountDistribution:
    """Truncated convolution: failure count of the union of two disjoint groups.

    Entry v < k needs only the exact (non-tail) masses of both inputs; all
    combined mass at >= k lumps into the tail. The inner loop runs over the
    overlap of the two exact supports, so each output entry costs at most
    min(|support(a)|, |support(b)|) + 1 terms -- the property the solver's
    merge accounting relies on.
    """
    if a.k != b.k:
        raise ContractError(f"threshold mismatch: {a.k} vs {b.k}")
    k = a.k
    ta = a.exact_top()
    tb = b.exact_top()
    out = [ZERO] * (k + 1)
    below = ZERO
    for v in range(k):
        lo = max(0, v - tb)
        hi = min(v, ta)
        acc = ZERO
        for j in range(lo, hi + 1):
            acc += a.mass[j] * b.mass[v - j]
        out[v] = acc
        below += acc
        if counter is not None and hi >= lo:
            counter.conv_terms += hi - lo + 1
    out[k] = 1 - below
    if counter is not None:
        counter.tail_terms += k
    return CountDistribution(k, tuple(out))


@dataclass(frozen=True)
class ReachTable:
    """Per-position arrival fractions of each flow type.

    Positions are 1-based in visiting order. column(z)[j] is the probability
    that a unit of input flow arrives at the z-th visited processor carrying
    exactly j failures from the z-1 processors already visited; type k flow
    has been discarded and does not appear.
    """

    k: int
    columns: tuple[tuple[Rat, ...], ...]  # columns[z-1][j], j in 0..k-1

    @property
    def n(self) -> int:
        return len(self.columns)

    def column(self, position: int) -> tuple[Rat, ...]:
        if not 1 <= position <= self.n:
            raise DomainError(f"position {position} outside 1..{self.n}")
        return self.columns[position - 1]

    def value(self, j: int, position: int) -> Rat:
        if not 0 <= j < self.k:
            raise DomainError(f"type {j} outside 0..{self.k - 1}")
        return self.column(position)[j]


def reach_table(p, k: int) -> ReachTable:
    """Arrival fractions for flow pushed down processors in the given order.

    p lists pass probabilities in visiting order. The recurrence walks one
    position at a time: a type-j arrival at position z either passed the
    previous processor with j failures already, or failed it with j-1.
    """
    if k < 1:
        raise DomainError(f"threshold k = {k} must be >= 1")
    ps = [rat(v) for v in p]
    for i, v in enumerate(ps):
        if not (0 < v < 1):
            raise DomainError(f"p[{i}] = {v} must lie strictly inside (0,1)")
    cols = []
    col = (ONE,) + (ZERO,) * (k - 1)
    cols.append(col)
    for z in range(2, len(ps) + 1):
        pz = ps[z - 2]
        qz = 1 - pz
        nxt = [col[0] * pz] + [qz * col[j - 1] + pz * col[j] for j in range(1, k)]
        col = tuple(nxt)
        cols.append(col)
    return ReachTable(k, tuple(cols))


def alpha(p, k: int) -> Rat:
    """Expected number of counted failures per item, E[min(k, Z)].

    Equals the sum over t = 1..k of Pr[at least t failures among all tests];
    for k = 1 it reduces to 1 - p_1 ... p_n.
    """
    ps = [rat(v) for v in p]
    if not ps:
        raise DomainError("alpha needs at least one test")
    pmf = exact_count_pmf([1 - v for v in ps], k)
    return pmf.expected_capped()


def throughput_upper_bound(instance: Instance) -> Rat:
    """Throughput can never exceed total failure capacity over failures per item.

    Each processor can produce at most r_i(1-p_i) failed-test events per unit
    time, and every unit of throughput consumes exactly E[min(k, Z)] of them.
    The bound is tight exactly when a routing saturates every processor.
    """
    numer = ZERO
    for ri, pi in zip(instance.r, instance.p):
        numer += ri * (1 - pi)
    return numer / alpha(instance.p, instance.k)
