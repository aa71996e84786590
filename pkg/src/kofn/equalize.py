"""Conservative max-throughput solver.

The solver pushes flow down the processors in order of decreasing residual
capacity, growing the amount until either the lowest-capacity class saturates
(done: the routing is optimal) or two adjacent classes reach equal residual
capacity. Equal classes fuse into a single megaprocessor that routes its
internal flow along proportional cyclic shifts, which keeps the residual
capacities of its members identical forever after. With exact rationals both
stopping conditions are exact equality tests.

Two implementations are provided:

* solve_conservative -- incremental: classes live in a doubly linked list,
  candidate equalization events in a lazy priority queue whose keys are
  absolute cumulative-flow values, so untouched entries stay valid across
  phases and only the neighbours of a merge are recomputed.
* solve_conservative_reference -- recomputes every class quantity from
  scratch each phase and rescans all adjacent pairs. Slow, simple, and used
  to cross-check the incremental solver event by event.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import ContractError, DomainError
from .instances import Instance
from .prob import (
    CountDistribution,
    OpCounter,
    ReachTable,
    alpha,
    convolve_counts,
    exact_count_pmf,
    reach_table,
)
from .rational import ONE, ZERO, Rat, RatLike, rat
from .representations import (
    CompressedRouting,
    LoadReport,
    MegaRouting,
    MergeEvent,
    PermutationEntry,
    PermutationRouting,
    RoutingPhase,
    SaturationCertificate,
)

__all__ = [
    "Megaprocessor",
    "StoppingFlow",
    "PhaseTrace",
    "ConservativeSolution",
    "LazyMergeQueue",
    "visiting_order",
    "xi",
    "capacity_rate",
    "stopping_flow",
    "merge_classes",
    "equal_rates_routing",
    "solve_conservative",
    "solve_conservative_reference",
    "replay_compressed",
]


def visiting_order(instance: Instance) -> tuple[int, ...]:
    """Processor ids sorted the way flow visits them: decreasing rate limit,
    ties by increasing id (equal-rate processors start out as one class)."""
    return tuple(sorted(range(1, instance.n + 1), key=lambda i: (-instance.r[i - 1], i)))


@dataclass(frozen=True)
class Megaprocessor:
    """One equivalence class of equal-residual processors.

    members lists the original processor ids in visiting order; start is the
    visiting position of the first member. xi is the rate at which one unit
    of input flow eats each member's residual capacity; it depends on the
    type mix arriving at the class entry, so it is None until computed.
    """

    members: tuple[int, ...]
    start: int
    residual: Rat
    sum_q: Rat
    pmf: CountDistribution
    xi: Optional[Rat] = None

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def end(self) -> int:
        return self.start + len(self.members) - 1


def capacity_rate(pmf: CountDistribution, sum_q: Rat, entry_types: Sequence[Rat]) -> Rat:
    """Residual-capacity reduction per unit of flow entering a class.

    entry_types[j] is the fraction of input flow arriving as type j (exactly
    j failures so far). A unit of type-j flow loads every member equally by
    (sum over v = 1..k-j of Pr[Z >= v]) / sum_q, by the proportional-shift
    allocation; summing over types gives the class rate.
    """
    k = pmf.k
    ge = pmf.at_least()
    d = [ZERO] * k  # d[j] = sum_{v=1}^{k-j} ge[v]
    d[k - 1] = ge[1]
    for j in range(k - 2, -1, -1):
        d[j] = d[j + 1] + ge[k - j]
    total = ZERO
    for j in range(k):
        fj = entry_types[j]
        if fj:
            total += fj * d[j]
    return total / sum_q


def xi(mega: Megaprocessor, reach: ReachTable | Sequence[Rat]) -> Rat:
    """Per-unit capacity reduction of the given class.

    reach may be the full ReachTable (the class entry column is looked up at
    mega.start) or the entry column itself.
    """
    col = reach.column(mega.start) if isinstance(reach, ReachTable) else reach
    return capacity_rate(mega.pmf, mega.sum_q, col)


@dataclass(frozen=True)
class StoppingFlow:
    """Amount of flow at which the first stopping condition fires.

    pairs holds every adjacent index pair (i-1, i) of the ascending-residual
    class list whose residuals equalize at that amount. On a tie between
    saturation and equalization, saturation wins and the tied pairs are
    still reported.
    """

    amount: Rat
    trigger: str  # "saturation" | "equalization"
    pairs: tuple[tuple[int, int], ...]


def stopping_flow(classes: Sequence[Megaprocessor]) -> StoppingFlow:
    """First stopping condition for classes listed in strictly increasing
    residual order (classes[0] is visited last and saturates first)."""
    if not classes:
        raise ContractError("no classes")
    for c in classes:
        if c.xi is None:
            raise ContractError("class xi values must be computed first")
    for a, b in itertools.pairwise(classes):
        if not a.residual < b.residual:
            raise ContractError("classes must be in strictly increasing residual order")
    assert classes[0].xi > 0, "the last-visited class always receives flow"
    t1 = classes[0].residual / classes[0].xi
    t2: Optional[Rat] = None
    pairs: list[tuple[int, int]] = []
    for i in range(1, len(classes)):
        d_xi = classes[i].xi - classes[i - 1].xi
        if d_xi <= 0:
            continue  # gap never closes
        t = (classes[i].residual - classes[i - 1].residual) / d_xi
        if t2 is None or t < t2:
            t2, pairs = t, [(i - 1, i)]
        elif t == t2:
            pairs.append((i - 1, i))
    if t2 is None or t1 <= t2:
        tied = tuple(pairs) if (t2 is not None and t1 == t2) else ()
        return StoppingFlow(t1, "saturation", tied)
    return StoppingFlow(t2, "equalization", tuple(pairs))


def merge_classes(
    classes: Sequence[Megaprocessor],
    pairs: Iterable[tuple[int, int]],
    reach: ReachTable | None = None,
    counter: OpCounter | None = None,
) -> tuple[Megaprocessor, ...]:
    """Fuse the given adjacent equal-residual pairs (ascending-residual list).

    Chained pairs like (1,2),(2,3) fuse into a single class. The merged pmf
    is the truncated convolution of the parts; sum_q adds; xi is recomputed
    from the reach table when one is supplied, else left None.
    """
    classes = list(classes)
    pair_set = set()
    for lo, hi in pairs:
        if hi != lo + 1 or not 0 <= lo < hi < len(classes):
            raise ContractError(f"pair ({lo},{hi}) is not adjacent in the class list")
        if classes[lo].residual != classes[hi].residual:
            raise ContractError(
                f"classes {lo} and {hi} have unequal residuals "
                f"{classes[lo].residual} != {classes[hi].residual}"
            )
        pair_set.add(lo)
    out: list[Megaprocessor] = []
    i = 0
    while i < len(classes):
        cur = classes[i]
        while i in pair_set:
            # Ascending residual order is reverse visiting order, so the
            # class at index i+1 is visited first: it is the left part.
            left, right = classes[i + 1], cur
            if left.start + left.size != right.start:
                raise ContractError("merged classes must be adjacent in visiting order")
            cur = Megaprocessor(
                members=left.members + right.members,
                start=left.start,
                residual=cur.residual,
                sum_q=left.sum_q + right.sum_q,
                pmf=convolve_counts(left.pmf, right.pmf, counter),
                xi=None,
            )
            i += 1
        if reach is not None:
            cur = Megaprocessor(
                cur.members, cur.start, cur.residual, cur.sum_q, cur.pmf,
                capacity_rate(cur.pmf, cur.sum_q, reach.column(cur.start)),
            )
        out.append(cur)
        i += 1
    return tuple(out)


def equal_rates_routing(p, k: int, r: RatLike) -> PermutationRouting:
    """Closed-form saturating routing when every processor shares rate r.

    Sends r * (1 - p_{i-1}) / E[min(k, Z)] units down each cyclic shift
    starting at processor i (indices wrap, so p_0 is p_n). The proportional
    split loads every processor identically, and the scale saturates them.
    """
    ps = [rat(v) for v in p]
    rate = rat(r)
    if rate <= 0:
        raise DomainError(f"rate {rate} must be positive")
    n = len(ps)
    a = alpha(ps, k)
    entries = []
    for i in range(1, n + 1):
        perm = tuple(range(i, n + 1)) + tuple(range(1, i))
        prev = ps[i - 2] if i >= 2 else ps[n - 1]
        entries.append(PermutationEntry(perm, rate * (1 - prev) / a))
    return PermutationRouting(k, n, tuple(entries))


# ---------------------------------------------------------------------------
# Incremental solver
# ---------------------------------------------------------------------------


class _Node:
    """Mutable solver-side class record, linked in visiting order."""

    __slots__ = (
        "serial", "start", "end", "sum_q", "pmf", "xi",
        "residual_ref", "stamp", "prev", "next",
    )

    def __init__(self, serial, start, end, sum_q, pmf, xi, residual_ref, stamp):
        self.serial = serial
        self.start = start
        self.end = end
        self.sum_q = sum_q
        self.pmf = pmf
        self.xi = xi
        self.residual_ref = residual_ref
        self.stamp = stamp
        self.prev: Optional[_Node] = None
        self.next: Optional[_Node] = None

    def residual_at(self, cumulative: Rat) -> Rat:
        """Residual capacity once `cumulative` total flow has been sent.

        xi is constant while the node lives, so the stored reference value
        plus elapsed flow is enough; no per-phase sweep is needed.
        """
        return self.residual_ref - self.xi * (cumulative - self.stamp)


class LazyMergeQueue:
    """Priority queue of pending equalization events with lazy offsets.

    Keys are absolute: the cumulative flow at which a pair of adjacent
    classes equalizes. Sending flow shifts every pending event closer by the
    same amount, so advancing the global offset replaces updating each entry;
    an entry's effective key is its stored key minus the offset. Entries
    whose classes merged away are dropped lazily when they surface. Pairs
    with a non-positive rate difference never equalize and are not stored.
    """

    def __init__(self, counter: OpCounter | None = None):
        self._heap: list[tuple[Rat, int, int]] = []
        self.offset: Rat = ZERO
        self.counter = counter

    def __len__(self) -> int:
        return len(self._heap)

    def advance(self, amount: Rat) -> None:
        """Account for `amount` of flow: every effective key drops by it."""
        self.offset += amount

    def effective_key(self, absolute_key: Rat) -> Rat:
        return absolute_key - self.offset

    def push_pair(self, left: _Node, right: _Node) -> None:
        """Queue the equalization of two adjacent classes, if it can happen.

        left is visited first and has the larger residual; the gap closes
        only if left's capacity drains faster.
        """
        d_xi = left.xi - right.xi
        if d_xi <= 0:
            return
        gap = left.residual_at(self.offset) - right.residual_at(self.offset)
        key = self.offset + gap / d_xi
        heapq.heappush(self._heap, (key, left.serial, right.serial))
        if self.counter is not None:
            self.counter.heap_inserts += 1

    def _pop(self) -> tuple[Rat, int, int]:
        if self.counter is not None:
            self.counter.heap_pops += 1
        return heapq.heappop(self._heap)

    def due_key(self, alive: dict[int, _Node]) -> Optional[Rat]:
        """Smallest absolute key among live entries, discarding stale tops."""
        while self._heap:
            key, ls, rs = self._heap[0]
            if ls in alive and rs in alive:
                return key
            self._pop()
        return None

    def pop_all_at(self, key: Rat, alive: dict[int, _Node]) -> list[tuple[int, int]]:
        """Remove and return every live pair whose event is exactly at `key`."""
        fired: list[tuple[int, int]] = []
        while self._heap and self._heap[0][0] == key:
            _, ls, rs = self._pop()
            if ls in alive and rs in alive:
                fired.append((ls, rs))
        return fired


@dataclass(frozen=True)
class PhaseTrace:
    """One phase for cross-checking solvers: flow sent, then the visiting
    positions at which class boundaries merged (empty for the final phase)."""

    amount: Rat
    boundaries: tuple[int, ...]


@dataclass(frozen=True)
class SolveStats:
    phases: int
    merges: int
    heap_pops: int
    heap_inserts: int
    conv_terms: int
    tail_terms: int
    pmf_terms: int


@dataclass(frozen=True)
class ConservativeSolution:
    routing: MegaRouting | CompressedRouting
    throughput: Rat
    certificate: SaturationCertificate
    report: Optional[LoadReport]
    stats: SolveStats
    trace: tuple[PhaseTrace, ...]


def _initial_nodes(
    instance: Instance,
    order: tuple[int, ...],
    reach: ReachTable,
    counter: OpCounter | None,
    serial: "itertools.count",
) -> list[_Node]:
    """Group equal-rate processors (already adjacent in visiting order)."""
    nodes: list[_Node] = []
    pos = 1
    while pos <= instance.n:
        end = pos
        rate = instance.r[order[pos - 1] - 1]
        while end < instance.n and instance.r[order[end] - 1] == rate:
            end += 1
        qs = [1 - instance.p[order[z - 1] - 1] for z in range(pos, end + 1)]
        pmf = exact_count_pmf(qs, instance.k, counter)
        sum_q = sum(qs, ZERO)
        node = _Node(
            serial=next(serial),
            start=pos,
            end=end,
            sum_q=sum_q,
            pmf=pmf,
            xi=capacity_rate(pmf, sum_q, reach.column(pos)),
            residual_ref=rate,
            stamp=ZERO,
        )
        if nodes:
            nodes[-1].next = node
            node.prev = nodes[-1]
        nodes.append(node)
        pos = end + 1
    return nodes


def solve_conservative(
    instance: Instance,
    representation: str = "mega",
    *,
    certify: bool = True,
    counter: OpCounter | None = None,
) -> ConservativeSolution:
    """Optimal routing for the conservative max-throughput problem.

    representation chooses the returned routing form ("mega" or
    "compressed"); the merge events are always produced and a mega routing is
    their replay, so both forms describe the identical phase sequence. With
    certify=True (the default) the result is re-validated from scratch:
    exact load evaluation, saturation/suffix certificate, and the throughput
    upper bound check. Pass certify=False for large instances where the
    O(n^2) replay would dominate.
    """
    if representation not in ("mega", "compressed"):
        raise DomainError(f"unknown representation {representation!r}")
    if counter is None:
        counter = OpCounter()

    order = visiting_order(instance)
    p_visit = [instance.p[i - 1] for i in order]
    reach = reach_table(p_visit, instance.k)
    serial = itertools.count()
    nodes = _initial_nodes(instance, order, reach, counter, serial)
    alive = {node.serial: node for node in nodes}
    head, tail = nodes[0], nodes[-1]

    queue = LazyMergeQueue(counter)
    for node in nodes:
        if node.next is not None:
            queue.push_pair(node, node.next)

    events: list[MergeEvent] = []
    trace: list[PhaseTrace] = []
    cumulative = ZERO

    while True:
        counter.phases += 1
        low_residual = tail.residual_at(cumulative)
        t_saturate = low_residual / tail.xi
        due = queue.due_key(alive)
        if due is None or cumulative + t_saturate <= due:
            # Saturation wins, including exact ties with an equalization.
            final_amount = t_saturate
            trace.append(PhaseTrace(final_amount, ()))
            cumulative += final_amount
            break

        amount = due - cumulative
        fired = queue.pop_all_at(due, alive)
        cumulative = due
        queue.advance(amount)

        # Group fired boundaries into runs of consecutive classes and merge
        # each run left to right.
        fired_nodes = sorted(
            ((alive[ls], alive[rs]) for ls, rs in fired), key=lambda pair: pair[0].start
        )
        boundaries = tuple(right.start for _, right in fired_nodes)
        trace.append(PhaseTrace(amount, boundaries))
        for i, boundary in enumerate(boundaries):
            events.append(MergeEvent(boundary, amount if i == 0 else ZERO))

        new_nodes: list[_Node] = []
        idx = 0
        while idx < len(fired_nodes):
            left, right = fired_nodes[idx]
            run = [left, right]
            while idx + 1 < len(fired_nodes) and fired_nodes[idx + 1][0] is run[-1]:
                run.append(fired_nodes[idx + 1][1])
                idx += 1
            idx += 1
            merged = run[0]
            residual = merged.residual_at(cumulative)
            for part in run[1:]:
                part_residual = part.residual_at(cumulative)
                if part_residual != residual:
                    raise ContractError(
                        f"merge of unequal residuals {residual} != {part_residual}"
                    )
                pmf = convolve_counts(merged.pmf, part.pmf, counter)
                fused = _Node(
                    serial=next(serial),
                    start=merged.start,
                    end=part.end,
                    sum_q=merged.sum_q + part.sum_q,
                    pmf=pmf,
                    xi=ZERO,  # filled below
                    residual_ref=residual,
                    stamp=cumulative,
                )
                fused.prev = merged.prev
                fused.next = part.next
                for dead in (merged, part):
                    alive.pop(dead.serial, None)
                merged = fused
                counter.merges += 1
            merged.xi = capacity_rate(merged.pmf, merged.sum_q, reach.column(merged.start))
            if merged.prev is not None:
                merged.prev.next = merged
            else:
                head = merged
            if merged.next is not None:
                merged.next.prev = merged
            else:
                tail = merged
            alive[merged.serial] = merged
            new_nodes.append(merged)

        fresh = {node.serial for node in new_nodes}
        for node in new_nodes:
            if node.prev is not None:
                queue.push_pair(node.prev, node)
            if node.next is not None and node.next.serial not in fresh:
                queue.push_pair(node, node.next)

    # Saturated processors: classes whose residual is exactly zero now. They
    # always form a run at the tail of the visiting order.
    saturated: set[int] = set()
    node = tail
    while node is not None and node.residual_at(cumulative) == 0:
        saturated.update(order[node.start - 1 : node.end])
        node = node.prev
    certificate = SaturationCertificate(
        "all-saturated" if len(saturated) == instance.n else "saturated-suffix",
        frozenset(saturated),
    )

    compressed = CompressedRouting(
        k=instance.k,
        n=instance.n,
        initial_order=order,
        events=tuple(events),
        final_amount=trace[-1].amount,
    )
    throughput = compressed.throughput
    routing = compressed if representation == "compressed" else replay_compressed(instance, compressed)

    report = None
    if certify:
        report = _certify(instance, compressed, throughput, certificate)

    stats = SolveStats(
        phases=counter.phases,
        merges=counter.merges,
        heap_pops=counter.heap_pops,
        heap_inserts=counter.heap_inserts,
        conv_terms=counter.conv_terms,
        tail_terms=counter.tail_terms,
        pmf_terms=counter.pmf_terms,
    )
    return ConservativeSolution(routing, throughput, certificate, report, stats, tuple(trace))


def _certify(
    instance: Instance,
    compressed: CompressedRouting,
    throughput: Rat,
    certificate: SaturationCertificate,
) -> LoadReport:
    """Independently re-validate a solution; raises ContractError on any gap."""
    from . import routing as routing_mod
    from .prob import throughput_upper_bound

    mega = replay_compressed(instance, compressed)
    mega.check()
    report = routing_mod.evaluate_loads(instance, mega)
    if report.throughput != throughput:
        raise ContractError("replayed throughput disagrees with solver throughput")
    if report.saturated != certificate.saturated:
        raise ContractError("recomputed saturated set disagrees with solver certificate")
    found = routing_mod.check_saturated_suffix(instance, mega, report)
    if found is None or found.kind != certificate.kind:
        raise ContractError("saturation certificate failed independent validation")
    bound = throughput_upper_bound(instance)
    if certificate.kind == "all-saturated":
        if throughput != bound:
            raise ContractError("fully saturated routing must meet the throughput bound")
    elif not throughput < bound:
        raise ContractError("partially saturated routing must sit strictly below the bound")
    return report


def replay_compressed(instance: Instance, compressed: CompressedRouting) -> MegaRouting:
    """Expand the event log back into the explicit phase list."""
    order = visiting_order(instance)
    if tuple(compressed.initial_order) != order:
        raise ContractError("routing's initial order does not match the instance")

    groups: list[tuple[int, ...]] = []
    starts: list[int] = []
    pos = 1
    while pos <= instance.n:
        end = pos
        rate = instance.r[order[pos - 1] - 1]
        while end < instance.n and instance.r[order[end] - 1] == rate:
            end += 1
        groups.append(tuple(order[pos - 1 : end]))
        starts.append(pos)
        pos = end + 1

    phases: list[RoutingPhase] = []
    for ev in compressed.events:
        if ev.amount > 0:
            phases.append(RoutingPhase(tuple(groups), ev.amount))
        elif ev.amount < 0:
            raise ContractError("merge event amounts cannot be negative")
        try:
            g = starts.index(ev.boundary)
        except ValueError:
            raise ContractError(f"no class boundary at visiting position {ev.boundary}")
        if g == 0:
            raise ContractError("cannot merge the first-visited class leftwards")
        groups[g - 1 : g + 1] = [groups[g - 1] + groups[g]]
        del starts[g]
    if compressed.final_amount <= 0:
        raise ContractError("final flow amount must be positive")
    phases.append(RoutingPhase(tuple(groups), compressed.final_amount))
    return MegaRouting(instance.k, instance.n, tuple(phases))


# ---------------------------------------------------------------------------
# Reference solver (rescans everything, used as a cross-check oracle)
# ---------------------------------------------------------------------------


def solve_conservative_reference(instance: Instance) -> tuple[MegaRouting, tuple[PhaseTrace, ...]]:
    """Phase-identical but brute-force variant of solve_conservative.

    Every phase recomputes each class's pmf, sum_q and xi from scratch and
    rescans all adjacent pairs for the stopping flow. Exists to validate the
    incremental solver; do not use on large instances.
    """
    order = visiting_order(instance)
    p_visit = [instance.p[i - 1] for i in order]
    reach = reach_table(p_visit, instance.k)

    # Classes kept in visiting order; index 0 is visited first.
    spans: list[tuple[int, int]] = []
    residuals: list[Rat] = []
    pos = 1
    while pos <= instance.n:
        end = pos
        rate = instance.r[order[pos - 1] - 1]
        while end < instance.n and instance.r[order[end] - 1] == rate:
            end += 1
        spans.append((pos, end))
        residuals.append(rate)
        pos = end + 1

    def build(span: tuple[int, int], residual: Rat) -> Megaprocessor:
        a, b = span
        members = tuple(order[a - 1 : b])
        qs = [1 - instance.p[i - 1] for i in members]
        pmf = exact_count_pmf(qs, instance.k)
        sum_q = sum(qs, ZERO)
        return Megaprocessor(
            members, a, residual, sum_q, pmf,
            capacity_rate(pmf, sum_q, reach.column(a)),
        )

    phases: list[RoutingPhase] = []
    trace: list[PhaseTrace] = []
    while True:
        classes = [build(span, res) for span, res in zip(spans, residuals)]
        ascending = list(reversed(classes))
        stop = stopping_flow(ascending)
        phases.append(
            RoutingPhase(tuple(c.members for c in classes), stop.amount)
        )
        m = len(classes)
        if stop.trigger == "saturation":
            trace.append(PhaseTrace(stop.amount, ()))
            break
        # Map ascending-order pair (i-1, i) back to the visiting-order index
        # of the later-visited (right) class: ascending index i-1 maps to
        # visiting index m-i.
        merge_at = sorted(m - i for _, i in stop.pairs)
        trace.append(PhaseTrace(stop.amount, tuple(spans[g][0] for g in merge_at)))
        for i, c in enumerate(classes):
            residuals[i] = residuals[i] - c.xi * stop.amount
        for g in reversed(merge_at):
            spans[g - 1 : g + 1] = [(spans[g - 1][0], spans[g][1])]
            if residuals[g - 1] != residuals[g]:
                raise ContractError("equalization fired on unequal residuals")
            del residuals[g]
    return MegaRouting(instance.k, instance.n, tuple(phases)), tuple(trace)
