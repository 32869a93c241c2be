"""Checks that tie a finished run back to the ground-truth ledger.

The estimator-error bounds checked here are deterministic: whatever the spread
policy does, the gap between the mean of observed aggregates and the mean of
realized totals over a set of full phases is bounded by the mass that can leak
across phase boundaries. A single violation is a bug, not bad luck.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .env import Instance, RewardLedger
from .errors import ConfigurationError, VerificationUnavailable
from .policies import ModifiedUCB, PhasedElimination

SLACK = 1e-9


@dataclass
class LemmaRecord:
    phase: int
    arm: int
    observed_estimate: float
    true_estimate: float
    bound: float
    satisfied: bool
    exempt: bool = False

    @property
    def difference(self) -> float:
        return abs(self.observed_estimate - self.true_estimate)

    @property
    def ratio(self) -> float:
        if self.bound > 0:
            return self.difference / self.bound
        return 0.0 if self.difference == 0 else math.inf


@dataclass
class LemmaReport:
    lemma: str
    records: List[LemmaRecord] = field(default_factory=list)
    consistent: bool = True

    def add(self, phase, arm, observed, truth, bound, exempt):
        ok = abs(observed - truth) <= bound + SLACK
        self.records.append(LemmaRecord(phase, arm, observed, truth, bound, ok, exempt))

    @property
    def checked(self) -> int:
        return sum(not r.exempt for r in self.records)

    @property
    def exemptions(self) -> int:
        return sum(r.exempt for r in self.records)

    @property
    def violations(self) -> List[LemmaRecord]:
        return [r for r in self.records if not r.exempt and not r.satisfied]

    @property
    def max_ratio(self) -> float:
        return float(max((r.ratio for r in self.records if not r.exempt), default=0.0))

    @property
    def passed(self) -> bool:
        return self.consistent and not self.violations

    def summary(self) -> dict:
        return {
            "lemma": self.lemma,
            "phases_checked": self.checked,
            "violations": len(self.violations),
            "max_ratio": self.max_ratio,
            "exemptions": self.exemptions,
            "consistent": self.consistent,
        }


def merge_reports(summaries: Iterable[dict]) -> dict:
    """Aggregate per-run ``LemmaReport.summary()`` dicts into one verification block."""
    summaries = list(summaries)
    if not summaries:
        return {}
    merged = {
        "lemma": summaries[0]["lemma"],
        "runs": len(summaries),
        "phases_checked": sum(r["phases_checked"] for r in summaries),
        "violations": sum(r["violations"] for r in summaries),
        "max_ratio": max(r["max_ratio"] for r in summaries),
        "exemptions": sum(r["exemptions"] for r in summaries),
        "consistent": all(r["consistent"] for r in summaries),
    }
    merged["passed"] = merged["violations"] == 0 and merged["consistent"]
    return merged


def _require(ledger):
    if ledger is None:
        raise VerificationUnavailable("a ground-truth ledger is required for this check")


def check_lemma1(policy: ModifiedUCB, ledger: Optional[RewardLedger]) -> LemmaReport:
    """Compare each phase's running estimate with the ledger mean over the same steps.

    Bound is d / k. The final phase cut short by the horizon is reported but
    not asserted.
    """
    _require(ledger)
    report = LemmaReport("phased-ucb")
    bound = policy.d / policy.k
    x_sum = np.zeros(policy.n_arms)
    r_sum = np.zeros(policy.n_arms)
    count = np.zeros(policy.n_arms, dtype=np.int64)
    for p in policy.phases:
        block_x = float(ledger.x[p.start:p.stop].sum())
        if block_x != p.observed_sum or np.any(ledger.arms[p.start:p.stop] != p.arm):
            report.consistent = False
        x_sum[p.arm] += block_x
        r_sum[p.arm] += float(ledger.totals[p.start:p.stop].sum())
        count[p.arm] += p.length
        if x_sum[p.arm] / count[p.arm] != p.estimate:
            report.consistent = False
        report.add(p.m, p.arm, p.estimate, r_sum[p.arm] / count[p.arm], bound, exempt=not p.full)
    return report


def check_lemma2(policy: PhasedElimination, ledger: Optional[RewardLedger]) -> LemmaReport:
    """Per phase and active arm, bound m (d - 1) / n_m on arms holding exactly n_m pulls."""
    _require(ledger)
    report = LemmaReport("phased-elimination")
    x_sum = np.zeros(policy.n_arms)
    r_sum = np.zeros(policy.n_arms)
    for p in policy.phases:
        for arm, (a, b) in p.blocks.items():
            block_x = float(ledger.x[a:b].sum())
            if block_x != p.observed_sums[arm] or np.any(ledger.arms[a:b] != arm):
                report.consistent = False
            x_sum[arm] += block_x
            r_sum[arm] += float(ledger.totals[a:b].sum())
        bound = p.m * (policy.d - 1) / p.target
        for arm in p.active:
            n = p.counts[arm]
            if n == 0:
                continue
            if x_sum[arm] / n != p.estimates[arm]:
                report.consistent = False
            report.add(p.m, arm, p.estimates[arm], r_sum[arm] / n, bound, exempt=n != p.target)
    return report


def pull_count_bound(gap: float, horizon: int, d: int) -> float:
    """Upper bound on the expected pulls of an arm with the given gap under phased UCB."""
    if gap <= 0:
        return math.inf
    log_t = math.log(horizon)
    return 289 * log_t / (4 * gap ** 2) + d / 2 * math.sqrt(horizon / log_t) + 2


@dataclass
class ArmBoundRecord:
    arm: int
    gap: float
    mean_pulls: float
    bound: float
    satisfied: bool
    excluded: Optional[str] = None

    @property
    def slack(self) -> float:
        return self.bound - self.mean_pulls


@dataclass
class PullCountReport:
    replications: int
    arms: List[ArmBoundRecord]

    @property
    def passed(self) -> bool:
        return all(a.satisfied for a in self.arms if a.excluded is None)

    def summary(self) -> dict:
        out = []
        for a in self.arms:
            row = asdict(a)
            row["slack"] = a.slack
            if math.isinf(a.bound):
                row["bound"] = row["slack"] = None
            out.append(row)
        return {"replications": self.replications, "passed": self.passed, "arms": out}


def check_pull_count_bound(pull_counts, instance: Instance, min_replications: int = 100) -> PullCountReport:
    """Mean pull count of every sub-optimal arm against the closed-form bound.

    ``pull_counts`` is an (R, K) array of per-run pull counts under phased UCB
    with default parameters.
    """
    counts = np.asarray(pull_counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[1] != instance.n_arms:
        raise ConfigurationError("pull counts must have shape (replications, arms)", "pull_counts")
    if counts.shape[0] < min_replications:
        raise ConfigurationError(
            f"need at least {min_replications} replications, got {counts.shape[0]}", "replications"
        )
    mean = counts.mean(axis=0)
    best = instance.best_arm
    rows = []
    for i, gap in enumerate(instance.gaps):
        gap = float(gap)
        if i == best:
            rows.append(ArmBoundRecord(i, gap, float(mean[i]), math.inf, True, "optimal arm"))
            continue
        if gap == 0:
            rows.append(ArmBoundRecord(i, gap, float(mean[i]), math.inf, True, "zero gap"))
            continue
        bound = pull_count_bound(gap, instance.horizon, instance.d)
        rows.append(ArmBoundRecord(i, gap, float(mean[i]), bound, bool(mean[i] <= bound)))
    return PullCountReport(counts.shape[0], rows)
