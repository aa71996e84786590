"""Minimum expected-cost testing strategies.

Conservative testing is solved by a single ratio sort. Standard testing gets
two solvers: an exact dynamic program over (tested-set, failure-count) states
that is the reference for everything else, and the compact two-permutation
strategy, which must agree with the DP on every instance (the agreement is
enforced in tests, and the DP remains the authority wherever a strategy feeds
the dual separation oracle).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import ContractError, DomainError
from .instances import CostInstance
from .rational import ONE, ZERO, Rat, rat

DEFAULT_DP_LIMIT = 20


@dataclass(frozen=True)
class PermutationStrategy:
    """Fixed-order conservative strategy."""

    order: tuple[int, ...]


@dataclass(frozen=True)
class TwoPermutationStrategy:
    """Compact standard strategy: one order by cost per failure, one by cost
    per pass; the realized decision tree is in `actions`."""

    by_fail_ratio: tuple[int, ...]
    by_pass_ratio: tuple[int, ...]
    actions: Mapping[tuple[int, int], int]


@dataclass(frozen=True)
class StateActionStrategy:
    """Explicit decision tree: (tested-mask, failures) -> next test id."""

    actions: Mapping[tuple[int, int], int]


@dataclass(frozen=True)
class StrategySummary:
    expected_cost: Rat
    g: tuple[Rat, ...]
    representation: PermutationStrategy | TwoPermutationStrategy | StateActionStrategy


def _ratio_order(values: tuple[Rat, ...], costs: tuple[Rat, ...]) -> tuple[int, ...]:
    """Test ids sorted by increasing cost/value, ties by id."""
    return tuple(sorted(range(1, len(costs) + 1), key=lambda i: (costs[i - 1] / values[i - 1], i)))


def _decided(n: int, k: int, tested: int, fails: int) -> bool:
    passes = tested - fails
    return fails >= k or passes >= n - k + 1


def evaluate_actions(
    p,
    k: int,
    action: Callable[[int, int], int] | Mapping[tuple[int, int], int],
    costs=None,
) -> StrategySummary:
    """Walk a standard strategy given by an action rule and summarize it.

    States are (tested-mask, failure-count); the walk stops at k failures or
    n-k+1 passes. Returns the probability g[i] that each test runs, the
    expected cost under `costs` (zero costs allowed), and the realized
    state-action table restricted to reachable states.
    """
    ps = tuple(rat(v) for v in p)
    n = len(ps)
    cs = tuple(rat(v) for v in costs) if costs is not None else (ZERO,) * n
    if isinstance(action, Mapping):
        table = action

        def pick(mask: int, fails: int) -> int:
            try:
                return table[(mask, fails)]
            except KeyError:
                raise ContractError(f"no action for reachable state {(mask, fails)}")
    else:
        pick = action

    g = [ZERO] * n
    actions: dict[tuple[int, int], int] = {}
    frontier: dict[tuple[int, int], Rat] = {(0, 0): ONE}
    while frontier:
        nxt: dict[tuple[int, int], Rat] = {}
        for (mask, fails), prob in sorted(frontier.items()):
            i = pick(mask, fails)
            bit = 1 << (i - 1)
            if not 1 <= i <= n or mask & bit:
                raise ContractError(f"illegal action {i} at state {(mask, fails)}")
            actions[(mask, fails)] = i
            g[i - 1] += prob
            tested = (mask | bit).bit_count()
            for outcome_fails, branch in ((fails, ps[i - 1]), (fails + 1, 1 - ps[i - 1])):
                if not _decided(n, k, tested, outcome_fails):
                    key = (mask | bit, outcome_fails)
                    nxt[key] = nxt.get(key, ZERO) + prob * branch
        frontier = nxt
    cost = sum((ci * gi for ci, gi in zip(cs, g)), ZERO)
    return StrategySummary(cost, tuple(g), StateActionStrategy(actions))


def propagate_state_actions(p, k: int, actions: Mapping[tuple[int, int], int]) -> tuple[Rat, ...]:
    """Recompute the per-test execution probabilities of a state-action table."""
    return evaluate_actions(p, k, actions).g


def conservative_mincost(instance: CostInstance) -> StrategySummary:
    """Cheapest conservative strategy: sort by cost per unit of failure mass.

    The order ascending in c_i/(1-p_i) (ties by id) is optimal among all
    conservative strategies; g follows from the arrival probabilities along
    the single permutation.
    """
    order = _ratio_order(instance.q, instance.c)
    k = instance.k
    g = [ZERO] * instance.n
    types = [ONE] + [ZERO] * (k - 1)
    for i in order:
        g[i - 1] = sum(types, ZERO)
        pi, qi = instance.p[i - 1], 1 - instance.p[i - 1]
        for j in range(k - 1, 0, -1):
            types[j] = types[j] * pi + types[j - 1] * qi
        types[0] = types[0] * pi
    cost = sum((ci * gi for ci, gi in zip(instance.c, g)), ZERO)
    return StrategySummary(cost, tuple(g), PermutationStrategy(order))


def optimal_standard_strategy(
    p, k: int, costs, limit: int = DEFAULT_DP_LIMIT
) -> StrategySummary:
    """Exact DP over (tested-set, failures) states; costs may include zeros.

    Ties in the argmin break toward the lowest test id, so the returned
    strategy is deterministic. Refuses when n exceeds `limit` (the state
    space is exponential).
    """
    ps = tuple(rat(v) for v in p)
    cs = tuple(rat(v) for v in costs)
    n = len(ps)
    if len(cs) != n:
        raise DomainError("probabilities and costs must have equal length")
    if any(c < 0 for c in cs):
        raise DomainError("costs must be nonnegative")
    if n > limit:
        raise DomainError(f"n = {n} exceeds the DP limit {limit}")
    if not 1 <= k <= n:
        raise DomainError(f"k = {k} must satisfy 1 <= k <= n")

    memo: dict[tuple[int, int], tuple[Rat, int]] = {}

    def best(mask: int, fails: int) -> tuple[Rat, int]:
        if _decided(n, k, mask.bit_count(), fails):
            return ZERO, 0
        try:
            return memo[(mask, fails)]
        except KeyError:
            pass
        top: tuple[Rat, int] | None = None
        for i in range(1, n + 1):
            bit = 1 << (i - 1)
            if mask & bit:
                continue
            value = (
                cs[i - 1]
                + ps[i - 1] * best(mask | bit, fails)[0]
                + (1 - ps[i - 1]) * best(mask | bit, fails + 1)[0]
            )
            if top is None or value < top[0]:
                top = (value, i)
        memo[(mask, fails)] = top
        return top

    cost, _ = best(0, 0)
    summary = evaluate_actions(ps, k, lambda mask, fails: best(mask, fails)[1], cs)
    if summary.expected_cost != cost:
        raise ContractError("forward propagation disagrees with the DP value")
    return summary


def standard_mincost_dp(instance: CostInstance, limit: int = DEFAULT_DP_LIMIT) -> StrategySummary:
    """Optimal standard strategy for a cost instance, via the exact DP."""
    return optimal_standard_strategy(instance.p, instance.k, instance.c, limit)


def standard_mincost_two_perm(instance: CostInstance) -> StrategySummary:
    """Optimal standard strategy in the compact two-permutation form.

    Keep one ordering by c/(1-p) and one by c/p. Needing a more failures and
    b more passes to decide, the next test must lie among both the first a
    untested of the failure order and the first b untested of the pass order;
    of those, the one earliest in the failure order is tested. Equality with
    the DP cost on every instance is the correctness guard for this rule.
    """
    sigma0 = _ratio_order(instance.q, instance.c)
    sigma1 = _ratio_order(instance.p, instance.c)
    n, k = instance.n, instance.k

    def pick(mask: int, fails: int) -> int:
        need_fail = k - fails
        need_pass = (n - k + 1) - (mask.bit_count() - fails)
        untested0 = [i for i in sigma0 if not mask & (1 << (i - 1))]
        untested1 = [i for i in sigma1 if not mask & (1 << (i - 1))]
        window = set(untested1[:need_pass])
        for i in untested0[:need_fail]:
            if i in window:
                return i
        raise ContractError(
            f"empty intersection at state {(mask, fails)}; the selection rule is wrong"
        )

    summary = evaluate_actions(instance.p, instance.k, pick, instance.c)
    return StrategySummary(
        summary.expected_cost,
        summary.g,
        TwoPermutationStrategy(sigma0, sigma1, summary.representation.actions),
    )


def standard_permutation_summary(instance: CostInstance, order) -> StrategySummary:
    """Summary of the fixed-order standard strategy S_k(order)."""
    order = tuple(order)
    if sorted(order) != list(range(1, instance.n + 1)):
        raise DomainError(f"{order} is not a permutation of 1..{instance.n}")

    def pick(mask: int, fails: int) -> int:
        for i in order:
            if not mask & (1 << (i - 1)):
                return i
        raise ContractError("ran out of tests before deciding")

    return evaluate_actions(instance.p, instance.k, pick, instance.c)
