"""Load evaluation, optimality certificates, expansion, and simulation.

evaluate_loads recomputes per-processor arrivals from nothing but the routing
and the instance, deliberately not reusing the solver's cached state, so it
can serve as an independent validator for solver output. All arithmetic is
exact; only the Monte Carlo simulator works in floats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, ExpansionLimitError
from .instances import Instance
from .prob import CountDistribution, exact_count_pmf
from .rational import ONE, ZERO, Rat
from .representations import (
    CompressedRouting,
    LoadReport,
    MegaRouting,
    PermutationEntry,
    PermutationRouting,
    PoolRouting,
    RoutingPhase,
    SaturationCertificate,
)

DEFAULT_EXPANSION_CAP = 100_000


def _check_ids(instance: Instance, ids) -> None:
    for i in ids:
        if not 1 <= i <= instance.n:
            raise ContractError(f"processor id {i} outside 1..{instance.n}")


def _forward_types(types: list[Rat], pmf: CountDistribution) -> list[Rat]:
    """Type distribution after passing a group: convolve and drop the mass
    that reached k failures (those items left the system)."""
    k = pmf.k
    out = [ZERO] * k
    for t in range(k):
        acc = ZERO
        for j in range(t + 1):
            if types[j]:
                acc += types[j] * pmf.mass[t - j]
        out[t] = acc
    return out


def _group_load_rate(types: list[Rat], pmf: CountDistribution, sum_q: Rat) -> Rat:
    """Load added to each member of a group per unit of typed inflow."""
    k = pmf.k
    ge = pmf.at_least()
    rate = ZERO
    tail_sum = ZERO  # sum_{v=1}^{k-j} ge[v], built up from j = k-1 downwards
    for j in range(k - 1, -1, -1):
        tail_sum += ge[k - j]
        if types[j]:
            rate += types[j] * tail_sum
    return rate / sum_q


def _perm_loads(instance: Instance, perm, amount: Rat, load: list[Rat]) -> None:
    """Accumulate loads for `amount` of flow down one explicit permutation.

    The arrival probability at each position is the chance of fewer than k
    failures among the tests already performed.
    """
    k = instance.k
    types = [ONE] + [ZERO] * (k - 1)
    for i in perm:
        reach = sum(types, ZERO)
        load[i - 1] += amount * reach
        qi = 1 - instance.p[i - 1]
        pi = instance.p[i - 1]
        for j in range(k - 1, 0, -1):
            types[j] = types[j] * pi + types[j - 1] * qi
        types[0] = types[0] * pi


def evaluate_loads(instance: Instance, routing) -> LoadReport:
    """Exact per-processor arrival rates for any routing representation."""
    if isinstance(routing, CompressedRouting):
        from .equalize import replay_compressed

        routing = replay_compressed(instance, routing)

    load = [ZERO] * instance.n
    if isinstance(routing, MegaRouting):
        if routing.k != instance.k or routing.n != instance.n:
            raise ContractError("routing shape does not match the instance")
        for phase in routing.phases:
            _check_ids(instance, phase.flat())
            types = [ONE] + [ZERO] * (instance.k - 1)
            for group in phase.order:
                qs = [1 - instance.p[i - 1] for i in group]
                pmf = exact_count_pmf(qs, instance.k)
                sum_q = sum(qs, ZERO)
                rate = _group_load_rate(types, pmf, sum_q)
                for i in group:
                    load[i - 1] += phase.amount * rate
                types = _forward_types(types, pmf)
    elif isinstance(routing, PermutationRouting):
        if routing.k != instance.k or routing.n != instance.n:
            raise ContractError("routing shape does not match the instance")
        for entry in routing.entries:
            _check_ids(instance, entry.permutation)
            if len(set(entry.permutation)) != instance.n:
                raise ContractError(f"{entry.permutation} is not a complete permutation")
            _perm_loads(instance, entry.permutation, entry.amount, load)
    elif isinstance(routing, PoolRouting):
        from .mincost import propagate_state_actions

        if routing.k != instance.k or routing.n != instance.n:
            raise ContractError("routing shape does not match the instance")
        for summary, amount in routing.entries:
            g = propagate_state_actions(
                instance.p, instance.k, summary.representation.actions
            )
            for i in range(instance.n):
                load[i] += amount * g[i]
    else:
        raise TypeError(f"cannot evaluate loads of {type(routing).__name__}")

    residual = tuple(r - x for r, x in zip(instance.r, load))
    saturated = frozenset(i + 1 for i, v in enumerate(residual) if v == 0)
    return LoadReport(tuple(load), residual, saturated, routing.throughput)


def check_saturated_suffix(
    instance: Instance, routing, report: LoadReport
) -> SaturationCertificate | None:
    """Optimality certificate for a permutation-style routing, if one holds.

    Full saturation certifies on its own. Otherwise the saturated set must
    appear as a trailing block of every visiting order the routing uses; for
    merged groups that means a union of trailing whole groups, since group
    members internally rotate through every cyclic shift.
    """
    sat = report.saturated
    if not sat or not report.feasible:
        return None
    if len(sat) == instance.n:
        return SaturationCertificate("all-saturated", sat)

    if isinstance(routing, CompressedRouting):
        from .equalize import replay_compressed

        routing = replay_compressed(instance, routing)

    if isinstance(routing, MegaRouting):
        for phase in routing.phases:
            covered: set[int] = set()
            for group in reversed(phase.order):
                if covered == sat:
                    break
                covered.update(group)
            if covered != sat:
                return None
    elif isinstance(routing, PermutationRouting):
        for entry in routing.entries:
            if frozenset(entry.permutation[-len(sat):]) != sat:
                return None
    else:
        raise TypeError(f"no suffix certificates for {type(routing).__name__}")
    return SaturationCertificate("saturated-suffix", sat)


def expand_to_permutations(
    instance: Instance, mega: MegaRouting, cap: int = DEFAULT_EXPANSION_CAP
) -> PermutationRouting:
    """Flatten a merged-group routing into explicit (permutation, flow) pairs.

    Every group contributes its cyclic shifts, weighted by the failure
    probability of the shift's cyclic predecessor; a phase expands to the
    product of its groups' choices. Loads are preserved exactly. Refuses
    with the required count when the expansion exceeds `cap`.
    """
    if isinstance(mega, CompressedRouting):
        from .equalize import replay_compressed

        mega = replay_compressed(instance, mega)
    required = 0
    for phase in mega.phases:
        count = 1
        for group in phase.order:
            count *= len(group)
        required += count
    if required > cap:
        raise ExpansionLimitError(required, cap)

    entries: list[PermutationEntry] = []
    for phase in mega.phases:
        per_group: list[list[tuple[tuple[int, ...], Rat]]] = []
        for group in phase.order:
            qs = [1 - instance.p[i - 1] for i in group]
            sum_q = sum(qs, ZERO)
            shifts = []
            s = len(group)
            for j in range(s):
                rotated = group[j:] + group[:j]
                shifts.append((rotated, qs[j - 1] / sum_q))  # predecessor wraps
            per_group.append(shifts)
        for combo in itertools.product(*per_group):
            perm: tuple[int, ...] = ()
            weight = phase.amount
            for rotated, frac in combo:
                perm += rotated
                weight *= frac
            entries.append(PermutationEntry(perm, weight))
    return PermutationRouting(instance.k, instance.n, tuple(entries))


@dataclass(frozen=True)
class SimulationReport:
    """Empirical per-processor arrival rates, scaled to the routing throughput.

    within_3se flags whether each empirical load landed within three standard
    errors of the exact load (binomial error model, per processor).
    """

    loads: tuple[float, ...]
    expected: tuple[Rat, ...]
    stderr: tuple[float, ...]
    within_3se: tuple[bool, ...]
    throughput: Rat
    items: int
    seed: int
    shards: int

    @property
    def all_within(self) -> bool:
        return all(self.within_3se)


def _routing_samplers(instance: Instance, routing):
    """Weights and visiting-order samplers, one per routing entry/phase.

    Each sampler is (groups, shift_probs) where groups are 0-based member
    arrays in visiting order; explicit permutations are single groups with a
    forced shift.
    """
    if isinstance(routing, CompressedRouting):
        from .equalize import replay_compressed

        routing = replay_compressed(instance, routing)
    samplers = []
    weights = []
    if isinstance(routing, MegaRouting):
        for phase in routing.phases:
            groups = []
            for group in phase.order:
                qs = np.array([float(1 - instance.p[i - 1]) for i in group])
                probs = np.roll(qs, 1)  # shift j is weighted by q of member j-1
                groups.append((np.array([i - 1 for i in group]), probs / probs.sum()))
            samplers.append(groups)
            weights.append(float(phase.amount))
    elif isinstance(routing, PermutationRouting):
        for entry in routing.entries:
            members = np.array([i - 1 for i in entry.permutation])
            samplers.append([(members, None)])
            weights.append(float(entry.amount))
    else:
        raise TypeError(f"cannot simulate {type(routing).__name__}")
    return samplers, np.array(weights)


def simulate_monte_carlo(
    instance: Instance,
    routing,
    items: int,
    seed: int = 0,
    shards: int = 1,
) -> SimulationReport:
    """Sample items through the routing and tally arrivals per processor.

    Conservative semantics: an item stops the moment it fails its k-th test
    and otherwise visits all n processors. Items are assigned to phases in
    proportion to flow, and within a merged group each item independently
    draws a cyclic shift with the proportional weights. Deterministic for a
    fixed (seed, shards); shard tallies merge by addition, so shards can run
    anywhere.
    """
    if items < 1:
        raise DomainError("items must be >= 1")
    if shards < 1 or shards > items:
        raise DomainError("shards must be in 1..items")

    exact = evaluate_loads(instance, routing)
    n, k = instance.n, instance.k
    q_arr = np.array([float(1 - pi) for pi in instance.p])
    samplers, weights = _routing_samplers(instance, routing)
    probs = weights / weights.sum()

    arrivals = np.zeros(n, dtype=np.int64)
    base, extra = divmod(items, shards)
    for shard in range(shards):
        shard_items = base + (1 if shard < extra else 0)
        if shard_items == 0:
            continue
        rng = np.random.default_rng([seed, shard])
        counts = rng.multinomial(shard_items, probs)
        for sampler, count in zip(samplers, counts):
            if count == 0:
                continue
            order = np.empty((count, n), dtype=np.int64)
            col = 0
            for members, shift_probs in sampler:
                s = len(members)
                rot = np.array([np.roll(members, -j) for j in range(s)])
                if shift_probs is None:
                    order[:, col : col + s] = members
                else:
                    idx = rng.choice(s, size=count, p=shift_probs)
                    order[:, col : col + s] = rot[idx]
                col += s
            fails = rng.random((count, n)) < q_arr[order]
            before = np.zeros((count, n), dtype=np.int64)
            before[:, 1:] = np.cumsum(fails[:, :-1], axis=1)
            reached = before < k
            arrivals += np.bincount(order[reached].ravel(), minlength=n)

    f_total = float(exact.throughput)
    loads = tuple(arrivals[i] / items * f_total for i in range(n))
    stderr = []
    within = []
    for i in range(n):
        li = float(exact.load[i])
        se = math.sqrt(max(li * (f_total - li), 0.0) / items)
        stderr.append(se)
        within.append(abs(loads[i] - li) <= 3 * se if se > 0 else loads[i] == li)
    return SimulationReport(
        loads=loads,
        expected=exact.load,
        stderr=tuple(stderr),
        within_3se=tuple(within),
        throughput=exact.throughput,
        items=items,
        seed=seed,
        shards=shards,
    )
