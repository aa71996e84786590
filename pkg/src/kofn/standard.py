"""Max-throughput solver for standard (early-stopping) k-of-n testing.

The throughput LP has one variable per strategy, far too many to write down,
so the solver works on the dual: prices y on the processors, one constraint
per strategy saying its expected cost under y is at least 1. A minimum-cost
strategy under prices y is exactly the most violated constraint, so the exact
DP doubles as the separation oracle. Cutting planes with a simplex-solved
restricted dual replace the ellipsoid method; correctness rests entirely on
the exact certificates at the end, not on the search path:

  restricted primal optimum = restricted dual optimum   (LP duality)
  restricted dual optimum  <= full dual optimum          (relaxation)
  final iterate feasible   => restricted = full dual     (oracle says so)
  full dual = full primal                                 (LP duality)

Saturation does NOT certify optimality for standard testing (unlike the
conservative variant), which is why the duality certificate is the only exit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ContractError, DomainError
from .instances import Instance
from .lp import Constraint, LinearProgram, certify, solve_lp
from .mincost import DEFAULT_DP_LIMIT, StrategySummary, optimal_standard_strategy
from .rational import ONE, ZERO, Rat
from .representations import PoolRouting

__all__ = [
    "SeparationResult",
    "PoolItem",
    "StrategyPool",
    "StandardSolution",
    "separation_oracle",
    "solve_standard",
]


@dataclass(frozen=True)
class SeparationResult:
    """Outcome of pricing the strategies at y: either y is dual-feasible, or
    `strategy` names a constraint it violates (expected cost `value` < 1)."""

    feasible: bool
    value: Rat
    strategy: Optional[StrategySummary]


def separation_oracle(
    y, instance: Instance, limit: int = DEFAULT_DP_LIMIT
) -> SeparationResult:
    """Find a strategy of expected cost < 1 under prices y, if one exists.

    Runs the exact min-cost DP with the prices as costs; zero prices are
    legal (those tests are free). Every strategy performs at least one test,
    so all-ones prices, for example, are always feasible.
    """
    prices = tuple(y)
    if any(v < 0 for v in prices):
        raise DomainError("prices must be nonnegative")
    best = optimal_standard_strategy(instance.p, instance.k, prices, limit)
    if best.expected_cost < 1:
        return SeparationResult(False, best.expected_cost, best)
    return SeparationResult(True, best.expected_cost, None)


@dataclass(frozen=True)
class PoolItem:
    """A violated constraint: the strategy, the prices that exposed it, and
    its expected cost under those prices (always < 1)."""

    summary: StrategySummary
    priced_at: tuple[Rat, ...]
    value: Rat


@dataclass(frozen=True)
class StrategyPool:
    items: tuple[PoolItem, ...]

    def g_vectors(self) -> tuple[tuple[Rat, ...], ...]:
        return tuple(item.summary.g for item in self.items)


@dataclass(frozen=True)
class StandardSolution:
    """Routing over pooled strategies plus the duality certificate.

    dual_objective is a valid throughput upper bound in every status; when
    status is "optimal" it equals the routing's throughput exactly.
    """

    status: str  # "optimal" | "cap-exceeded"
    routing: PoolRouting
    throughput: Rat
    dual_prices: tuple[Rat, ...]
    dual_objective: Rat
    iterations: int
    pool: StrategyPool

    @property
    def gap(self) -> Rat:
        return self.dual_objective - self.throughput


def _restricted_dual(instance: Instance, pool: list[PoolItem]) -> tuple[Rat, ...]:
    """Cheapest prices satisfying the pooled constraints."""
    if not pool:
        return (ZERO,) * instance.n
    lp = LinearProgram(
        "min",
        instance.r,
        tuple(Constraint(item.summary.g, ">=", ONE) for item in pool),
    )
    sol = solve_lp(lp)
    if sol.status != "optimal" or not certify(lp, sol):
        raise ContractError(f"restricted dual came back {sol.status}")
    return sol.primal


def _restricted_primal(instance: Instance, pool: list[PoolItem]) -> tuple[PoolRouting, Rat]:
    """Best routing that uses only pooled strategies."""
    if not pool:
        raise ContractError("cannot build a routing from an empty pool")
    lp = LinearProgram(
        "max",
        (ONE,) * len(pool),
        tuple(
            Constraint(tuple(item.summary.g[i] for item in pool), "<=", instance.r[i])
            for i in range(instance.n)
        ),
    )
    sol = solve_lp(lp)
    if sol.status != "optimal" or not certify(lp, sol):
        raise ContractError(f"restricted primal came back {sol.status}")
    entries = tuple(
        (item.summary, amount)
        for item, amount in zip(pool, sol.primal)
        if amount > 0
    )
    routing = PoolRouting(instance.k, instance.n, entries)
    return routing, sol.objective


def solve_standard(
    instance: Instance,
    limit: int = DEFAULT_DP_LIMIT,
    max_iterations: Optional[int] = None,
) -> StandardSolution:
    """Maximize throughput over all standard k-of-n strategies.

    Alternates restricted-dual solves with the separation oracle until no
    constraint is violated, then routes over the collected strategies. The
    iteration cap (default 10*n*k) exists as a safety valve; hitting it
    returns the best pooled routing together with its duality gap against
    the best feasible prices seen.
    """
    if instance.n > limit:
        raise DomainError(f"n = {instance.n} exceeds the oracle limit {limit}")
    cap = max_iterations if max_iterations is not None else 10 * instance.n * instance.k

    # A known dual-feasible price vector (proportional to 1/r, scaled until
    # the cheapest strategy costs at least 1) seeds the upper bound used for
    # gap reporting; the cutting-plane loop itself starts from the empty pool.
    max_r = max(instance.r)
    start = tuple(max_r / ri for ri in instance.r)
    best_feasible_prices = start
    best_feasible_value = sum((ri * yi for ri, yi in zip(instance.r, start)), ZERO)

    pool: list[PoolItem] = []
    seen_g: set[tuple[Rat, ...]] = set()
    iterations = 0
    while iterations < cap:
        iterations += 1
        y = _restricted_dual(instance, pool)
        result = separation_oracle(y, instance, limit)
        if result.feasible:
            dual_objective = sum((ri * yi for ri, yi in zip(instance.r, y)), ZERO)
            routing, primal_value = _restricted_primal(instance, pool)
            if primal_value != dual_objective:
                raise ContractError(
                    f"strong duality failed: primal {primal_value} != dual {dual_objective}"
                )
            return StandardSolution(
                "optimal", routing, primal_value, y, dual_objective,
                iterations, StrategyPool(tuple(pool)),
            )
        g = result.strategy.g
        if g in seen_g:
            raise ContractError("separation oracle repeated a pooled constraint")
        seen_g.add(g)
        pool.append(PoolItem(result.strategy, tuple(y), result.value))

    routing, primal_value = _restricted_primal(instance, pool)
    return StandardSolution(
        "cap-exceeded", routing, primal_value, best_feasible_prices,
        best_feasible_value, iterations, StrategyPool(tuple(pool)),
    )
