"""Bandit environment with stochastic, delayed, composite and anonymous feedback.

Every pull draws a total reward from the arm's distribution, splits it into d
components with the instance's spread policy, and queues component s for
delivery s steps later. What the learner sees at time t is only the sum of
everything due at t. The environment additionally keeps a ground-truth ledger
so that verification code can compare the learner's estimates with the
rewards that were actually generated.

Randomness is split per concern: each arm owns a reward stream ("tape") and
the spread policy owns another, all derived from one seed. The j-th pull of an
arm therefore always yields the same reward, whatever the spread policy and
however the pulls are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, HorizonExhausted, UndefinedEstimate
from .spread import SpreadAssignment, SpreadSpec

MEAN_TOLERANCE = 1e-12
FAMILIES = ("bernoulli", "beta", "uniform", "deterministic")

_REWARD_STREAM, _SPREAD_STREAM, _POLICY_STREAM = 0, 1, 2


@dataclass(frozen=True)
class ArmSpec:
    """Reward distribution of one arm, supported on [0, 1].

    ``params`` is ``(p,)`` for bernoulli, ``(alpha, beta)`` for beta,
    ``(lo, hi)`` for uniform and ``(value,)`` for deterministic.
    """

    family: str
    params: tuple
    mean: float = float("nan")

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown arm family {self.family!r}", "arms")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        analytic = self._analytic_mean()
        if math.isnan(self.mean):
            object.__setattr__(self, "mean", analytic)
        elif abs(self.mean - analytic) > MEAN_TOLERANCE:
            raise ConfigurationError(
                f"stated mean {self.mean!r} does not match {self.family}{params} mean {analytic!r}", "arms"
            )

    def _analytic_mean(self) -> float:
        p = self.params
        if self.family in ("bernoulli", "deterministic"):
            if len(p) != 1 or not 0.0 <= p[0] <= 1.0:
                raise ConfigurationError(f"{self.family} needs one parameter in [0, 1], got {p}", "arms")
            return p[0]
        if len(p) != 2:
            raise ConfigurationError(f"{self.family} needs two parameters, got {p}", "arms")
        if self.family == "beta":
            a, b = p
            if not (a > 0 and b > 0):
                raise ConfigurationError(f"beta parameters must be positive, got {p}", "arms")
            return a / (a + b)
        lo, hi = p
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigurationError(f"uniform needs 0 <= lo <= hi <= 1, got {p}", "arms")
        return (lo + hi) / 2

    @classmethod
    def bernoulli(cls, p):
        return cls("bernoulli", (p,))

    @classmethod
    def beta(cls, alpha, beta):
        return cls("beta", (alpha, beta))

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", (lo, hi))

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", (value,))

    @classmethod
    def from_config(cls, obj) -> "ArmSpec":
        """Accept a bare number (a Bernoulli mean) or a mapping with ``family``."""
        if isinstance(obj, ArmSpec):
            return obj
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls.bernoulli(obj)
        if not isinstance(obj, dict) or "family" not in obj:
            raise ConfigurationError(f"cannot interpret arm {obj!r}", "arms")
        fam = obj["family"]
        keys = {
            "bernoulli": ("p",),
            "deterministic": ("value",),
            "beta": ("alpha", "beta"),
            "uniform": ("lo", "hi"),
        }.get(fam)
        if keys is None:
            raise ConfigurationError(f"unknown arm family {fam!r}", "arms")
        try:
            params = tuple(obj[k] for k in keys)
        except KeyError as exc:
            raise ConfigurationError(f"{fam} arm is missing {exc.args[0]!r}", "arms") from None
        return cls(fam, params, obj.get("mean", float("nan")))

    def to_dict(self):
        names = {
            "bernoulli": ("p",),
            "deterministic": ("value",),
            "beta": ("alpha", "beta"),
            "uniform": ("lo", "hi"),
        }[self.family]
        return {"family": self.family, **dict(zip(names, self.params)), "mean": self.mean}

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "bernoulli":
            return (rng.random(n) < self.params[0]).astype(np.float64)
        if self.family == "beta":
            return rng.beta(self.params[0], self.params[1], size=n)
        if self.family == "uniform":
            lo, hi = self.params
            return lo + (hi - lo) * rng.random(n)
        return np.full(n, self.params[0])


def generate_reward(arm: ArmSpec, rng: np.random.Generator) -> float:
    """One fresh sample from ``arm``."""
    return float(arm.sample(rng, 1)[0])


def derive_seed(seed, *key: int) -> np.random.SeedSequence:
    """Child SeedSequence addressed by ``key``; never depends on spawn history."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))


def policy_rng(seed) -> np.random.Generator:
    """The generator reserved for a policy's own randomization in a run."""
    return np.random.default_rng(derive_seed(seed, _POLICY_STREAM))


class RewardTape:
    """Pre-drawn rewards for a single arm, consumed in order."""

    CHUNK = 2048

    def __init__(self, arm: ArmSpec, seed: np.random.SeedSequence):
        self.arm = arm
        self._rng = np.random.default_rng(seed)
        self._buf = np.empty(0)
        self._pos = 0

    def take(self, n: int) -> np.ndarray:
        avail = self._buf.size - self._pos
        if avail < n:
            fresh = self.arm.sample(self._rng, max(n - avail, self.CHUNK))
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        return out


@dataclass(frozen=True)
class Instance:
    arms: tuple
    d: int
    horizon: int
    spread: SpreadSpec = field(default_factory=SpreadSpec)

    def __post_init__(self):
        arms = tuple(ArmSpec.from_config(a) for a in self.arms)
        object.__setattr__(self, "arms", arms)
        if isinstance(self.spread, str):
            object.__setattr__(self, "spread", SpreadSpec(self.spread))
        elif isinstance(self.spread, dict):
            params = dict(self.spread)
            object.__setattr__(self, "spread", SpreadSpec(params.pop("name"), params))
        if len(arms) < 2:
            raise ConfigurationError(f"need at least 2 arms, got {len(arms)}", "arms")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError(f"delay must be a positive integer, got {self.d!r}", "delay")
        if int(self.horizon) != self.horizon or self.horizon < 3:
            raise ConfigurationError(f"horizon must be an integer >= 3, got {self.horizon!r}", "horizon")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms])

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.means))

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    @property
    def gaps(self) -> np.ndarray:
        return self.best_mean - self.means

    def with_horizon(self, horizon: int) -> "Instance":
        return Instance(self.arms, self.d, horizon, self.spread)

    def to_dict(self):
        return {
            "arms": [a.to_dict() for a in self.arms],
            "delay": self.d,
            "horizon": self.horizon,
            "spread": self.spread.to_dict(),
        }


class PendingBuffer:
    """Components already generated but not yet delivered.

    ``slots[s]`` holds everything due at time ``head + s`` for s < d - 1;
    nothing generated before ``head`` can be due at ``head + d - 1`` or later.
    """

    def __init__(self, d: int):
        self.d = d
        self.head = 0
        self.slots = np.zeros(d - 1)

    def mass(self) -> float:
        return float(self.slots.sum())

    def absorb(self, comps: np.ndarray) -> np.ndarray:
        """Add one row of components per consecutive step, deliver and advance.

        Accumulation runs oldest pull first so a batch of n steps produces
        bit-for-bit the same deliveries as n single steps.
        """
        n, d = comps.shape
        out = np.zeros(n + d - 1)
        out[:d - 1] = self.slots
        for s in range(d - 1, -1, -1):
            out[s:s + n] += comps[:, s]
        self.slots = out[n:].copy()
        self.head += n
        return out[:n]


class RewardLedger:
    """Append-only ground truth: chosen arm, realized total, components, delivery."""

    def __init__(self, horizon: int, d: int):
        self.d = d
        self._arms = np.empty(horizon, dtype=np.int64)
        self._totals = np.empty(horizon)
        self._components = np.empty((horizon, d))
        self._x = np.empty(horizon)
        self._n = 0

    def __len__(self):
        return self._n

    def append(self, arms, totals, components, x):
        n = len(totals)
        sl = slice(self._n, self._n + n)
        self._arms[sl] = arms
        self._totals[sl] = totals
        self._components[sl] = components
        self._x[sl] = x
        self._n += n

    @property
    def arms(self) -> np.ndarray:
        return self._arms[:self._n]

    @property
    def totals(self) -> np.ndarray:
        return self._totals[:self._n]

    @property
    def components(self) -> np.ndarray:
        return self._components[:self._n]

    @property
    def x(self) -> np.ndarray:
        return self._x[:self._n]

    def assignment(self, t: int) -> SpreadAssignment:
        if not 0 <= t < self._n:
            raise IndexError(t)
        return SpreadAssignment(self._components[t].copy(), float(self._totals[t]))


def ledger_true_mean_estimate(ledger: RewardLedger, times: Iterable[int]) -> float:
    """Mean of the realized totals over ``times``."""
    idx = np.fromiter(times, dtype=np.int64) if not isinstance(times, np.ndarray) else times
    if idx.size == 0:
        raise UndefinedEstimate("mean over an empty set of time steps")
    if idx.min() < 0 or idx.max() >= len(ledger):
        raise IndexError("time step outside the ledger")
    return float(ledger.totals[idx].sum() / idx.size)


class Environment:
    """One simulated run of an :class:`Instance`."""

    def __init__(self, instance: Instance, seed=0):
        self.instance = instance
        self.d = instance.d
        self.horizon = instance.horizon
        self.n_arms = instance.n_arms
        reward_seed = self._reward_seed = derive_seed(seed, _REWARD_STREAM)
        self._tapes = [RewardTape(arm, derive_seed(reward_seed, i)) for i, arm in enumerate(instance.arms)]
        self._spread = instance.spread.build()
        self._spread_rng = np.random.default_rng(derive_seed(seed, _SPREAD_STREAM))
        self._wbuf = np.empty((0, self.d))
        self._wpos = 0
        self.buffer = PendingBuffer(self.d)
        self._ledger = RewardLedger(self.horizon, self.d)

    @property
    def t(self) -> int:
        return self.buffer.head

    @property
    def ledger(self) -> RewardLedger:
        return self._ledger

    def residual_mass(self) -> float:
        return self.buffer.mass()

    def counterfactual_rewards(self, arm: int, n: int) -> np.ndarray:
        """The first ``n`` rewards ``arm`` would yield in this run, from a fresh copy of its stream."""
        tape = RewardTape(self.instance.arms[arm], derive_seed(self._reward_seed, arm))
        return tape.take(n).copy()

    def _weights(self, n):
        avail = self._wbuf.shape[0] - self._wpos
        if avail < n:
            fresh = self._spread.weights(max(n - avail, RewardTape.CHUNK), self.d, self._spread_rng)
            self._wbuf = np.concatenate([self._wbuf[self._wpos:], fresh])
            self._wpos = 0
        out = self._wbuf[self._wpos:self._wpos + n]
        self._wpos += n
        return out

    def _check_room(self, n):
        if n < 1:
            raise ValueError("must play at least one step")
        if self.t + n > self.horizon:
            raise HorizonExhausted(f"cannot play {n} steps at t={self.t} with horizon {self.horizon}")

    def _deliver(self, arms, totals):
        comps = totals[:, None] * self._weights(totals.size)
        x = self.buffer.absorb(comps)
        self._ledger.append(arms, totals, comps, x)
        return x

    def play(self, arm: int, n: int = 1) -> np.ndarray:
        """Pull ``arm`` for ``n`` consecutive steps and return the n observations."""
        if not 0 <= arm < self.n_arms:
            raise ValueError(f"arm {arm} out of range")
        self._check_room(n)
        return self._deliver(arm, self._tapes[arm].take(n))

    def play_sequence(self, arms: Sequence[int]) -> np.ndarray:
        """Pull the given arms at consecutive steps and return the observations."""
        arms = np.asarray(arms, dtype=np.int64)
        self._check_room(arms.size)
        if arms.min() < 0 or arms.max() >= self.n_arms:
            raise ValueError("arm index out of range")
        totals = np.empty(arms.size)
        for a in np.unique(arms):
            mask = arms == a
            totals[mask] = self._tapes[a].take(int(mask.sum()))
        return self._deliver(arms, totals)

    def step(self, arm: int) -> float:
        return float(self.play(arm, 1)[0])

    def feedback(self) -> "AnonymousFeedback":
        return AnonymousFeedback(self)


class AnonymousFeedback:
    """What a learning policy is allowed to see: its own actions' aggregate feedback.

    Exposes the clock, the horizon and the observation X_t of each step, never
    the realized rewards or their decomposition.
    """

    __slots__ = ("n_arms", "horizon", "d", "_clock", "_play", "_play_sequence")

    def __init__(self, env: Environment):
        self.n_arms = env.n_arms
        self.horizon = env.horizon
        self.d = env.d
        buffer = env.buffer
        self._clock = lambda: buffer.head
        self._play = env.play
        self._play_sequence = env.play_sequence

    @property
    def t(self) -> int:
        return self._clock()

    @property
    def remaining(self) -> int:
        return self.horizon - self._clock()

    def play(self, arm: int, n: int = 1) -> np.ndarray:
        return self._play(arm, n)

    def play_sequence(self, arms) -> np.ndarray:
        return self._play_sequence(arms)

    def step(self, arm: int) -> float:
        return float(self._play(arm, 1)[0])
