"""Learning policies that act on anonymous aggregate feedback only.

Every policy talks to an :class:`~sdcaf.env.AnonymousFeedback` handle, which
exposes the clock and the per-step observations X_t and nothing else.

``ModifiedUCB`` picks an arm by upper confidence bound and then commits to it
for a whole phase of k pulls, so that the components leaking across phase
boundaries are small relative to the phase. ``PhasedElimination`` pulls every
surviving arm up to a cumulative target n_m, drops arms whose estimate trails
the leader by more than the current tolerance, and halves the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError

POLICY_NAMES = ("alg1", "alg2", "vanilla-ucb", "uniform-random")
OVERRIDE_KEYS = ("alg1.k", "alg1.delta", "alg2.delta_tilde_init")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta!r}", "alg1.delta")


def ucb_index(mean: float, count: int, delta: float) -> float:
    """Empirical mean plus sqrt(2 log(1/delta) / count); +inf for an unplayed arm."""
    _check_delta(delta)
    if count == 0:
        return math.inf
    return mean + math.sqrt(2.0 * math.log(1.0 / delta) / count)


def default_log_inv_delta(horizon: int) -> float:
    # delta = T^-8, kept in log form so large horizons cannot underflow
    return 8.0 * math.log(horizon)


def alg1_default_k(horizon: int, d: int) -> int:
    """Phase length ceil((d / 2) * sqrt(T / log T)), at least 1."""
    return max(1, math.ceil(d / 2 * math.sqrt(horizon / math.log(horizon))))


def alg2_nm(m: int, tolerance: float, horizon: int, d: int) -> int:
    """Cumulative per-arm pull target for elimination phase ``m``.

    The log term is clamped at 1 so the target stays positive once
    T * tolerance^2 drops below e.
    """
    L = max(math.log(horizon * tolerance ** 2), 1.0)
    root = math.sqrt(L) + math.sqrt(L + 4.0 * tolerance * m * (d - 1))
    return max(1, math.ceil(root * root / (2.0 * tolerance ** 2)))


def alg2_eliminate(estimates: Mapping[int, float], tolerance: float, active: Iterable[int]) -> set:
    """Drop every arm whose estimate plus ``tolerance`` is strictly below the best."""
    active = set(active)
    best = max(estimates[i] for i in active)
    return {i for i in active if not estimates[i] + tolerance < best}


def _ranges_to_times(ranges):
    if not ranges:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([np.arange(a, b, dtype=np.int64) for a, b in ranges])


class _PolicyBase:
    name = "base"

    def __init__(self, n_arms: int, horizon: int):
        if n_arms < 2:
            raise ConfigurationError(f"need at least 2 arms, got {n_arms}", "arms")
        self.n_arms = n_arms
        self.horizon = horizon
        self.t = 0
        self.counts = np.zeros(n_arms, dtype=np.int64)

    def resolved_params(self) -> dict:
        return {}

    def run(self, feedback) -> "_PolicyBase":
        raise NotImplementedError


@dataclass
class Alg1Phase:
    m: int
    arm: int
    start: int
    stop: int
    observed_sum: float
    estimate: float
    full: bool

    @property
    def length(self):
        return self.stop - self.start


class ModifiedUCB(_PolicyBase):
    """Phased UCB: choose the arm with the largest index, then pull it k times."""

    name = "alg1"

    def __init__(self, n_arms, horizon, d, k=None, delta=None):
        super().__init__(n_arms, horizon)
        self.d = d
        self.k = alg1_default_k(horizon, d) if k is None else int(k)
        if self.k < 1:
            raise ConfigurationError(f"phase length must be >= 1, got {k!r}", "alg1.k")
        if delta is None:
            self.log_inv_delta = default_log_inv_delta(horizon)
            self.delta = math.exp(-self.log_inv_delta)
        else:
            _check_delta(delta)
            self.delta = float(delta)
            self.log_inv_delta = math.log(1.0 / delta)
        self.sums = np.zeros(n_arms)
        self.means = np.full(n_arms, np.nan)
        self.play_ranges: List[List[Tuple[int, int]]] = [[] for _ in range(n_arms)]
        self.phases: List[Alg1Phase] = []
        self.m = 1

    def indices(self) -> np.ndarray:
        idx = np.full(self.n_arms, np.inf)
        played = self.counts > 0
        idx[played] = self.means[played] + np.sqrt(2.0 * self.log_inv_delta / self.counts[played])
        return idx

    def choose(self) -> int:
        # np.argmax returns the first maximizer, so ties go to the lowest index
        return int(np.argmax(self.indices()))

    def run_phase(self, feedback) -> Alg1Phase:
        arm = self.choose()
        n = min(self.k, feedback.remaining)
        start = feedback.t
        x = feedback.play(arm, n)
        observed = float(x.sum())
        self.sums[arm] += observed
        self.counts[arm] += n
        self.means[arm] = self.sums[arm] / self.counts[arm]
        self.t = start + n
        self.play_ranges[arm].append((start, self.t))
        phase = Alg1Phase(self.m, arm, start, self.t, observed, float(self.means[arm]), n == self.k)
        self.phases.append(phase)
        self.m += 1
        return phase

    def run(self, feedback):
        while feedback.remaining > 0:
            self.run_phase(feedback)
        return self

    def play_times(self, arm: int, upto_phase: Optional[int] = None) -> np.ndarray:
        """Time steps at which ``arm`` was played, through phase ``upto_phase``."""
        if upto_phase is None:
            return _ranges_to_times(self.play_ranges[arm])
        return _ranges_to_times([(p.start, p.stop) for p in self.phases if p.arm == arm and p.m <= upto_phase])

    def resolved_params(self):
        return {"k": self.k, "delta": self.delta, "log_inv_delta": self.log_inv_delta}


class VanillaUCB(ModifiedUCB):
    """Phased UCB with k = 1, i.e. standard UCB that ignores the delay."""

    name = "vanilla-ucb"

    def __init__(self, n_arms, horizon, d, delta=None):
        super().__init__(n_arms, horizon, d, k=1, delta=delta)


@dataclass
class Alg2Phase:
    m: int
    tolerance: float
    target: int
    active: Tuple[int, ...]
    blocks: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    estimates: Dict[int, float] = field(default_factory=dict)
    counts: Dict[int, int] = field(default_factory=dict)
    observed_sums: Dict[int, float] = field(default_factory=dict)
    eliminated: Tuple[int, ...] = ()
    complete: bool = False


class PhasedElimination(_PolicyBase):
    """Improved-UCB style elimination with tolerance halving every phase."""

    name = "alg2"

    def __init__(self, n_arms, horizon, d, delta_tilde_init=1.0):
        super().__init__(n_arms, horizon)
        if not delta_tilde_init > 0:
            raise ConfigurationError(
                f"initial tolerance must be > 0, got {delta_tilde_init!r}", "alg2.delta_tilde_init"
            )
        self.d = d
        self.delta_tilde_init = float(delta_tilde_init)
        self.tolerance = self.delta_tilde_init
        self.active: List[int] = list(range(n_arms))
        self.sums = np.zeros(n_arms)
        self.estimates = np.full(n_arms, np.nan)
        self.play_ranges: List[List[Tuple[int, int]]] = [[] for _ in range(n_arms)]
        self.phases: List[Alg2Phase] = []
        self.m = 1

    def target(self) -> int:
        return alg2_nm(self.m, self.tolerance, self.horizon, self.d)

    def play_phase(self, feedback) -> Alg2Phase:
        n_m = self.target()
        phase = Alg2Phase(self.m, self.tolerance, n_m, tuple(self.active))
        self.phases.append(phase)
        for arm in self.active:
            need = n_m - int(self.counts[arm])
            if need <= 0:
                continue
            if feedback.remaining == 0:
                break
            n = min(need, feedback.remaining)
            start = feedback.t
            x = feedback.play(arm, n)
            observed = float(x.sum())
            self.sums[arm] += observed
            self.counts[arm] += n
            self.t = start + n
            self.play_ranges[arm].append((start, self.t))
            phase.blocks[arm] = (start, self.t)
            phase.observed_sums[arm] = observed
        for arm in self.active:
            if self.counts[arm] > 0:
                self.estimates[arm] = self.sums[arm] / self.counts[arm]
                phase.estimates[arm] = float(self.estimates[arm])
            phase.counts[arm] = int(self.counts[arm])
        phase.complete = all(self.counts[arm] >= n_m for arm in self.active)
        return phase

    def end_phase(self, phase: Alg2Phase):
        survivors = alg2_eliminate(phase.estimates, self.tolerance, self.active)
        phase.eliminated = tuple(a for a in self.active if a not in survivors)
        self.active = sorted(survivors)
        self.tolerance /= 2
        self.m += 1

    def run(self, feedback):
        while feedback.remaining > 0:
            phase = self.play_phase(feedback)
            if not phase.complete:
                break
            self.end_phase(phase)
        return self

    def play_times(self, arm: int, upto_phase: Optional[int] = None) -> np.ndarray:
        if upto_phase is None:
            return _ranges_to_times(self.play_ranges[arm])
        return _ranges_to_times([p.blocks[arm] for p in self.phases if p.m <= upto_phase and arm in p.blocks])

    def schedule_prefix(self, n: int = 10) -> List[int]:
        return [alg2_nm(m, self.delta_tilde_init / 2 ** (m - 1), self.horizon, self.d) for m in range(1, n + 1)]

    def resolved_params(self):
        return {"delta_tilde_init": self.delta_tilde_init, "n_m_prefix": self.schedule_prefix()}


class UniformRandom(_PolicyBase):
    """Picks an arm uniformly at random every step, ignoring feedback."""

    name = "uniform-random"
    CHUNK = 8192

    def __init__(self, n_arms, horizon, rng: np.random.Generator):
        super().__init__(n_arms, horizon)
        self.rng = rng

    def run(self, feedback):
        while feedback.remaining > 0:
            n = min(self.CHUNK, feedback.remaining)
            arms = self.rng.integers(self.n_arms, size=n)
            feedback.play_sequence(arms)
            self.counts += np.bincount(arms, minlength=self.n_arms)
            self.t += n
        return self


def baseline_policies():
    return {VanillaUCB.name: VanillaUCB, UniformRandom.name: UniformRandom}


def make_policy(name: str, n_arms: int, horizon: int, d: int, rng=None, overrides=None) -> _PolicyBase:
    """Build a policy by identifier, applying ``alg1.*`` / ``alg2.*`` overrides."""
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(OVERRIDE_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown override(s) {sorted(unknown)}", "overrides")
    if name == "alg1":
        return ModifiedUCB(n_arms, horizon, d, k=overrides.get("alg1.k"), delta=overrides.get("alg1.delta"))
    if name == "vanilla-ucb":
        return VanillaUCB(n_arms, horizon, d, delta=overrides.get("alg1.delta"))
    if name == "alg2":
        return PhasedElimination(n_arms, horizon, d, overrides.get("alg2.delta_tilde_init", 1.0))
    if name == "uniform-random":
        if rng is None:
            rng = np.random.default_rng()
        return UniformRandom(n_arms, horizon, rng)
    raise ConfigurationError(f"unknown policy {name!r}; choose from {list(POLICY_NAMES)}", "algo")
