"""Oblivious rules that split a realized reward into d delayed components.

A spread policy only ever produces *weights*: rows of d non-negative numbers
summing to one. The environment multiplies them by the realized total, so the
decomposition of the reward drawn at time t is fixed the moment it is drawn
and never depends on what the learner does afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict

import numpy as np

from .errors import ConfigurationError

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SpreadAssignment:
    """The d components of one realized total, component s due at offset s."""

    components: np.ndarray
    total: float

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        if comps.ndim != 1 or comps.size < 1:
            raise ValueError("components must be a non-empty vector")
        if np.any(comps < 0):
            raise ValueError("components must be non-negative")
        if abs(float(comps.sum()) - self.total) > SUM_TOLERANCE:
            raise ValueError(f"components sum to {comps.sum()!r}, expected {self.total!r}")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return self.components.size


class SpreadPolicy:
    """Base class. Subclasses return the next ``n`` weight rows."""

    name = "base"

    def weights(self, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> Dict[str, Any]:
        return {}


def _one_hot(n, d, slot):
    w = np.zeros((n, d))
    w[:, slot] = 1.0
    return w


class UniformSpread(SpreadPolicy):
    name = "uniform"

    def weights(self, n, d, rng):
        return np.full((n, d), 1.0 / d)


class AllAtStart(SpreadPolicy):
    name = "all-at-start"

    def weights(self, n, d, rng):
        return _one_hot(n, d, 0)


class AllAtEnd(SpreadPolicy):
    name = "all-at-end"

    def weights(self, n, d, rng):
        return _one_hot(n, d, d - 1)


class DirichletSpread(SpreadPolicy):
    name = "dirichlet"

    def __init__(self, alpha: float = 1.0):
        if not alpha > 0:
            raise ConfigurationError(f"dirichlet alpha must be > 0, got {alpha!r}", "spread.alpha")
        self.alpha = float(alpha)

    def weights(self, n, d, rng):
        if d == 1:
            return np.ones((n, 1))
        return rng.dirichlet(np.full(d, self.alpha), size=n)

    def params(self):
        return {"alpha": self.alpha}


class BlockBoundaryAdversary(SpreadPolicy):
    """Alternates all-at-start and all-at-end, one reward at a time.

    Half of the rewards land immediately and half are held back d - 1 steps,
    so every phase boundary both leaks mass out and absorbs stale mass in.
    """

    name = "block-boundary-adversary"

    def __init__(self):
        self._calls = 0

    def weights(self, n, d, rng):
        w = np.zeros((n, d))
        at_start = (self._calls + np.arange(n)) % 2 == 0
        w[at_start, 0] = 1.0
        w[~at_start, d - 1] = 1.0
        self._calls += n
        return w


SPREAD_POLICIES: Dict[str, Callable[..., SpreadPolicy]] = {
    UniformSpread.name: UniformSpread,
    AllAtStart.name: AllAtStart,
    AllAtEnd.name: AllAtEnd,
    DirichletSpread.name: DirichletSpread,
    BlockBoundaryAdversary.name: BlockBoundaryAdversary,
}


@dataclass(frozen=True)
class SpreadSpec:
    """Serializable reference to a spread policy: identifier plus parameters."""

    name: str = "uniform"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SPREAD_POLICIES:
            raise ConfigurationError(
                f"unknown spread policy {self.name!r}; choose from {sorted(SPREAD_POLICIES)}", "spread"
            )
        self.build()

    def build(self) -> SpreadPolicy:
        try:
            return SPREAD_POLICIES[self.name](**self.params)
        except TypeError as exc:
            raise ConfigurationError(f"bad parameters for {self.name!r}: {exc}", "spread") from None

    def to_dict(self):
        return {"name": self.name, **self.params}


def make_spread_policy(name: str, **params) -> SpreadPolicy:
    return SpreadSpec(name, dict(params)).build()


def spread(total: float, d: int, policy: SpreadPolicy | str, rng: np.random.Generator | None = None) -> SpreadAssignment:
    """Split ``total`` into ``d`` components with one call to ``policy``."""
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}", "d")
    if not 0.0 <= total <= 1.0:
        raise ValueError(f"total must lie in [0, 1], got {total!r}")
    if isinstance(policy, str):
        policy = make_spread_policy(policy)
    if rng is None:
        rng = np.random.default_rng()
    w = policy.weights(1, d, rng)[0]
    return SpreadAssignment(total * w, total)
