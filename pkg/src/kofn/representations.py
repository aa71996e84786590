"""Routing representations emitted by the solvers, plus the load report.

Three representations cover the conservative solver's output at different
sizes: MegaRouting lists every phase explicitly, CompressedRouting stores the
initial visiting order plus the merge events (O(n) total), PermutationRouting
is the flat list of (permutation, flow) pairs. PoolRouting carries adaptive
strategies (as state-action summaries) for the standard-variant solver; it is
not expandable to permutations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import ContractError
from .rational import Rat, ZERO


@dataclass(frozen=True)
class RoutingPhase:
    """One phase: processor groups in visiting order and the flow sent through them.

    Each group is routed internally by proportional cyclic shifts, so only the
    group composition and its member order matter here.
    """

    order: tuple[tuple[int, ...], ...]
    amount: Rat

    def flat(self) -> tuple[int, ...]:
        return tuple(i for group in self.order for i in group)


@dataclass(frozen=True)
class MegaRouting:
    """Phase-by-phase routing over merged processor groups."""

    k: int
    n: int
    phases: tuple[RoutingPhase, ...]

    @property
    def throughput(self) -> Rat:
        return sum((ph.amount for ph in self.phases), ZERO)

    def check(self) -> None:
        """Verify structural invariants: partitions, positive flow, coarsening."""
        ids = frozenset(range(1, self.n + 1))
        prev: tuple[tuple[int, ...], ...] | None = None
        for ph in self.phases:
            if ph.amount <= 0:
                raise ContractError("phase amounts must be positive")
            if frozenset(ph.flat()) != ids or len(ph.flat()) != self.n:
                raise ContractError("each phase must order every processor exactly once")
            if prev is not None and not _coarsens(prev, ph.order):
                raise ContractError("phase partitions may only merge adjacent groups")
            prev = ph.order


def _coarsens(earlier: tuple[tuple[int, ...], ...], later: tuple[tuple[int, ...], ...]) -> bool:
    """True if `later` is obtained from `earlier` by merging adjacent groups only."""
    i = 0
    for group in later:
        combined: tuple[int, ...] = ()
        while len(combined) < len(group):
            if i >= len(earlier):
                return False
            combined += earlier[i]
            i += 1
        if combined != group:
            return False
    return i == len(earlier)


@dataclass(frozen=True)
class MergeEvent:
    """A merge in the event log: send `amount` of flow, then fuse the group
    starting at visiting position `boundary` into its predecessor.

    Several groups equalizing at the same flow show up as one event with
    positive amount followed by zero-amount events.
    """

    boundary: int
    amount: Rat


@dataclass(frozen=True)
class CompressedRouting:
    """O(n) representation: initial visiting order, merge events, final flow."""

    k: int
    n: int
    initial_order: tuple[int, ...]
    events: tuple[MergeEvent, ...]
    final_amount: Rat

    @property
    def throughput(self) -> Rat:
        return sum((ev.amount for ev in self.events), ZERO) + self.final_amount


@dataclass(frozen=True)
class PermutationEntry:
    permutation: tuple[int, ...]
    amount: Rat


@dataclass(frozen=True)
class PermutationRouting:
    """Flat routing: flow amounts on explicit processor permutations."""

    k: int
    n: int
    entries: tuple[PermutationEntry, ...]

    @property
    def throughput(self) -> Rat:
        return sum((e.amount for e in self.entries), ZERO)

    def check(self) -> None:
        ids = frozenset(range(1, self.n + 1))
        for e in self.entries:
            if e.amount <= 0:
                raise ContractError("entry amounts must be positive")
            if frozenset(e.permutation) != ids or len(e.permutation) != self.n:
                raise ContractError(f"{e.permutation} is not a permutation of 1..{self.n}")


@dataclass(frozen=True)
class PoolRouting:
    """Routing over adaptive strategies from the standard-variant solver.

    Entries pair a strategy summary (carrying its g vector and state-action
    table) with the flow assigned to it.
    """

    k: int
    n: int
    entries: tuple[tuple[Any, Rat], ...]  # (StrategySummary, amount)

    @property
    def throughput(self) -> Rat:
        return sum((amount for _, amount in self.entries), ZERO)


@dataclass(frozen=True)
class LoadReport:
    """Exact per-processor arrivals for a routing, recomputed from scratch."""

    load: tuple[Rat, ...]
    residual: tuple[Rat, ...]
    saturated: frozenset[int]
    throughput: Rat

    @property
    def feasible(self) -> bool:
        return all(v >= 0 for v in self.residual)

    def overloaded(self) -> tuple[int, ...]:
        """1-based ids of processors whose rate limit is exceeded."""
        return tuple(i + 1 for i, v in enumerate(self.residual) if v < 0)


@dataclass(frozen=True)
class SaturationCertificate:
    """Optimality certificate: either every processor is saturated, or the
    saturated set forms a suffix of every permutation the routing uses."""

    kind: str  # "all-saturated" | "saturated-suffix"
    saturated: frozenset[int]
