"""Problem instances: n independent tests with a k-failure threshold.

Processors are numbered 1..n in the order they appear in the input; every
public structure in the package uses these 1-based ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import DomainError
from .rational import Rat, RatLike, rat


def _coerce_probs(values: Iterable[RatLike], what: str) -> tuple[Rat, ...]:
    out = tuple(rat(v) for v in values)
    for i, v in enumerate(out):
        if not (0 < v < 1):
            raise DomainError(f"{what}[{i + 1}] = {v} must lie strictly inside (0,1)")
    return out

def _coerce_positive(values: Iterable[RatLike], what: str) -> tuple[Rat, ...]:
    out = tuple(rat(v) for v in values)
    for i, v in enumerate(out):
        if v <= 0:
            raise DomainError(f"{what}[{i + 1}] = {v} must be positive")
    return out


@dataclass(frozen=True)
class Instance:
    """Throughput instance: pass probabilities p and rate limits r.

    An item "fails" test i with probability 1 - p[i]; a processor may test at
    most r[i] items per unit time. Immutable, safe to share across workers.
    """

    k: int
    p: tuple[Rat, ...]
    r: tuple[Rat, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", _coerce_probs(self.p, "p"))
        object.__setattr__(self, "r", _coerce_positive(self.r, "r"))
        if len(self.p) != len(self.r):
            raise DomainError(f"lengths disagree: {len(self.p)} probabilities, {len(self.r)} rates")
        if len(self.p) < 1:
            raise DomainError("instance needs at least one test")
        if not 1 <= self.k <= len(self.p):
            raise DomainError(f"k = {self.k} must satisfy 1 <= k <= n = {len(self.p)}")

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def q(self) -> tuple[Rat, ...]:
        """Failure probabilities 1 - p[i]."""
        return tuple(1 - pi for pi in self.p)


@dataclass(frozen=True)
class CostInstance:
    """Cost instance: pass probabilities p and per-test costs c."""

    k: int
    p: tuple[Rat, ...]
    c: tuple[Rat, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", _coerce_probs(self.p, "p"))
        object.__setattr__(self, "c", _coerce_positive(self.c, "c"))
        if len(self.p) != len(self.c):
            raise DomainError(f"lengths disagree: {len(self.p)} probabilities, {len(self.c)} costs")
        if len(self.p) < 1:
            raise DomainError("instance needs at least one test")
        if not 1 <= self.k <= len(self.p):
            raise DomainError(f"k = {self.k} must satisfy 1 <= k <= n = {len(self.p)}")

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def q(self) -> tuple[Rat, ...]:
        return tuple(1 - pi for pi in self.p)
