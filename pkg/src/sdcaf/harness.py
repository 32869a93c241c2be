"""Replicated experiment runner: configuration, regret metrics, traces, summaries."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .env import Environment, Instance, derive_seed, policy_rng
from .errors import ConfigurationError, ResourceError
from .policies import OVERRIDE_KEYS, POLICY_NAMES, ModifiedUCB, PhasedElimination, make_policy
from .spread import SpreadSpec
from .verify import check_lemma1, check_lemma2, check_pull_count_bound, merge_reports

log = logging.getLogger(__name__)

TRACE_HEADER = "t,rep,arm,x,cum_reward,cum_pseudo_regret"
MAX_LEDGER_CELLS = 100_000_000  # horizon * d, about 800 MB of float64
MAX_TRACE_ROWS = 50_000_000
SUBLINEAR_MAX = 0.95
LINEAR_MIN = 0.98


@dataclass
class ExperimentConfig:
    instance: Instance
    algo: List[str] = field(default_factory=lambda: ["alg1"])
    overrides: Dict[str, float] = field(default_factory=dict)
    replications: int = 1
    seed: int = 0
    out_dir: Optional[str] = None
    stride: int = 1
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.algo, str):
            self.algo = [a for a in self.algo.split(",") if a]
        if not self.algo:
            raise ConfigurationError("at least one policy is required", "algo")
        for name in self.algo:
            if name not in POLICY_NAMES:
                raise ConfigurationError(f"unknown policy {name!r}; choose from {list(POLICY_NAMES)}", "algo")
        for key in self.overrides:
            if key not in OVERRIDE_KEYS:
                raise ConfigurationError(f"unknown override {key!r}; choose from {list(OVERRIDE_KEYS)}", "overrides")
        for name in ("replications", "stride", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigurationError(f"must be an integer >= 1, got {value!r}", name)
            setattr(self, name, int(value))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"must be a non-negative integer, got {self.seed!r}", "seed")
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {"arms", "delay", "horizon", "spread", "algo", "overrides", "replications",
                 "seed", "out_dir", "stride", "workers"}
        extra = set(raw) - known
        if extra:
            raise ConfigurationError(f"unknown field(s) {sorted(extra)}", sorted(extra)[0])
        for key in ("arms", "delay", "horizon"):
            if key not in raw:
                raise ConfigurationError("missing required field", key)
        spread = raw.get("spread", "uniform")
        if isinstance(spread, str):
            spread = SpreadSpec(spread)
        elif isinstance(spread, dict):
            params = dict(spread)
            if "name" not in params:
                raise ConfigurationError("spread object needs a 'name'", "spread")
            spread = SpreadSpec(params.pop("name"), params)
        else:
            raise ConfigurationError(f"cannot interpret {spread!r}", "spread")
        if not isinstance(raw["arms"], list):
            raise ConfigurationError("must be a list", "arms")
        try:
            instance = Instance(tuple(raw["arms"]), raw["delay"], raw["horizon"], spread)
        except TypeError as exc:
            raise ConfigurationError(str(exc), "instance") from None
        rest = {k: raw[k] for k in ("algo", "overrides", "replications", "seed", "out_dir", "stride", "workers")
                if k in raw}
        return cls(instance, **rest)

    def to_dict(self) -> dict:
        out = self.instance.to_dict()
        out.update(
            algo=list(self.algo),
            overrides=dict(self.overrides),
            replications=self.replications,
            seed=self.seed,
            out_dir=self.out_dir,
            stride=self.stride,
            workers=self.workers,
        )
        return out


@dataclass
class RunResult:
    policy: str
    rep: int
    pull_counts: np.ndarray
    final_pseudo_regret: float
    final_realized_regret: float
    conservation_error: float
    resolved_params: dict
    verification: Optional[dict] = None
    verification_report: Optional[object] = None
    trace: Optional[np.ndarray] = None


def compute_pseudo_regret(arms: Sequence[int], gaps: Sequence[float]) -> np.ndarray:
    """Cumulative sum of gaps of the chosen arms, as sum_i gap_i * pulls_i(t).

    Evaluated from per-arm running counts so the last entry equals
    ``sum(gaps * pull_counts)`` exactly and the sequence never decreases.
    """
    arms = np.asarray(arms, dtype=np.int64)
    gaps = np.asarray(gaps, dtype=np.float64)
    out = np.zeros(arms.size)
    for i, gap in enumerate(gaps):
        out += gap * np.cumsum(arms == i)
    return out


def final_pseudo_regret(pull_counts, gaps) -> float:
    out = 0.0
    for gap, n in zip(np.asarray(gaps, dtype=np.float64), np.asarray(pull_counts)):
        out += gap * n
    return float(out)


def check_resources(instance: Instance):
    cells = instance.horizon * instance.d
    if cells > MAX_LEDGER_CELLS:
        raise ResourceError(f"horizon * delay = {cells} exceeds the ledger guard of {MAX_LEDGER_CELLS}")


def thinned_indices(horizon: int, stride: int) -> np.ndarray:
    idx = np.arange(0, horizon, stride)
    if idx[-1] != horizon - 1:
        idx = np.append(idx, horizon - 1)
    return idx


def simulate(instance: Instance, policy_name: str, seed: int, rep: int, overrides=None,
             stride: int = 1, verify: bool = True, trace: bool = True) -> RunResult:
    """One replication of one policy. The run's streams depend only on (seed, rep)."""
    rep_seed = derive_seed(seed, rep)
    env = Environment(instance, rep_seed)
    policy = make_policy(policy_name, instance.n_arms, instance.horizon, instance.d,
                         rng=policy_rng(rep_seed), overrides=overrides)
    policy.run(env.feedback())
    ledger = env.ledger
    gaps = instance.gaps
    counts = np.bincount(ledger.arms, minlength=instance.n_arms)

    generated = float(ledger.totals.sum())
    delivered = float(ledger.x.sum())
    conservation_error = abs(delivered + env.residual_mass() - generated)

    best_draws = env.counterfactual_rewards(instance.best_arm, instance.horizon)
    realized = float(best_draws.sum()) - generated

    result = RunResult(
        policy=policy_name,
        rep=rep,
        pull_counts=counts,
        final_pseudo_regret=final_pseudo_regret(counts, gaps),
        final_realized_regret=realized,
        conservation_error=conservation_error,
        resolved_params=policy.resolved_params(),
    )
    if verify:
        report = None
        if isinstance(policy, ModifiedUCB):
            report = check_lemma1(policy, ledger)
        elif isinstance(policy, PhasedElimination):
            report = check_lemma2(policy, ledger)
        if report is not None:
            result.verification_report = report
            result.verification = report.summary()
    if trace:
        idx = thinned_indices(instance.horizon, stride)
        cum_regret = compute_pseudo_regret(ledger.arms, gaps)
        cum_reward = np.cumsum(ledger.x)
        result.trace = np.column_stack([
            idx, np.full(idx.size, rep), ledger.arms[idx], ledger.x[idx], cum_reward[idx], cum_regret[idx],
        ])
    return result


def _simulate_job(args):
    instance, policy_name, seed, rep, overrides, stride, verify, trace = args
    result = simulate(instance, policy_name, seed, rep, overrides, stride, verify, trace)
    # full reports stay in the worker; the summary dict is enough downstream
    result.verification_report = None
    return result


def run_replications(instance: Instance, policy_name: str, replications: int, seed: int,
                     overrides=None, stride: int = 1, workers: int = 1,
                     verify: bool = True, trace: bool = True) -> List[RunResult]:
    """Run ``replications`` independent runs, returned in replication order."""
    check_resources(instance)
    jobs = [(instance, policy_name, seed, rep, overrides, stride, verify, trace) for rep in range(replications)]
    if workers <= 1 or replications == 1:
        return [_simulate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_job, jobs))


def _stats(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std, "per_rep": [float(v) for v in arr]}


def summarize_policy(instance: Instance, policy_name: str, results: List[RunResult], overrides=None) -> dict:
    counts = np.array([r.pull_counts for r in results])
    out = {
        "resolved_params": results[0].resolved_params,
        "final_pseudo_regret": _stats([r.final_pseudo_regret for r in results]),
        "final_realized_regret": _stats([r.final_realized_regret for r in results]),
        "pull_counts": {
            "mean": [float(v) for v in counts.mean(axis=0)],
            "per_rep": counts.tolist(),
        },
        "conservation_max_error": max(r.conservation_error for r in results),
    }
    verification = {}
    reports = [r.verification for r in results if r.verification is not None]
    if reports:
        verification["lemma"] = merge_reports(reports)
    tuned = any(k.startswith("alg1.") for k in (overrides or {}))
    if policy_name == "alg1" and len(results) >= 100 and not tuned:
        verification["pull_count_bound"] = check_pull_count_bound(counts, instance).summary()
    if verification:
        verification["passed"] = all(v["passed"] for v in verification.values())
        out["verification"] = verification
    return out


def write_trace(path: Path, results: List[RunResult]):
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in results:
            np.savetxt(fh, r.trace, fmt=["%d", "%d", "%d", "%.12g", "%.12g", "%.12g"], delimiter=",")


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every configured policy and write traces plus ``summary.json`` if ``out_dir`` is set.

    Returns the summary dictionary. Per-policy results are attached under the
    private key ``_results`` only when no output directory is configured.
    """
    instance = config.instance
    check_resources(instance)
    rows = instance.horizon // config.stride * config.replications
    if config.out_dir is not None and rows > MAX_TRACE_ROWS:
        raise ResourceError(f"trace would hold about {rows} rows; raise --stride")
    summary = {
        "config": config.to_dict(),
        "instance": {
            "means": [float(m) for m in instance.means],
            "best_arm": instance.best_arm,
            "gaps": [float(g) for g in instance.gaps],
        },
        "policies": {},
    }
    out_dir = Path(config.out_dir) if config.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    all_results = {}
    for name in config.algo:
        log.info("running %s: %d replication(s), T=%d", name, config.replications, instance.horizon)
        results = run_replications(instance, name, config.replications, config.seed, config.overrides,
                                   config.stride, config.workers, trace=out_dir is not None)
        summary["policies"][name] = summarize_policy(instance, name, results, config.overrides)
        if out_dir is not None:
            write_trace(out_dir / f"trace_{name}.csv", results)
        else:
            all_results[name] = results
    summary["passed"] = all(p.get("verification", {}).get("passed", True) for p in summary["policies"].values())
    if out_dir is not None:
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        summary["_results"] = all_results
    return summary


@dataclass
class ProbeReport:
    policy: str
    horizons: List[int]
    mean_regret: List[float]
    exponent: float
    passed: bool

    def to_dict(self):
        return {
            "policy": self.policy,
            "horizons": self.horizons,
            "mean_regret": self.mean_regret,
            "exponent": self.exponent,
            "passed": self.passed,
        }


def fit_exponent(horizons, regrets) -> float:
    """Least-squares slope of log(regret) against log(horizon)."""
    slope, _ = np.polyfit(np.log(np.asarray(horizons, dtype=float)), np.log(np.asarray(regrets, dtype=float)), 1)
    return float(slope)


def sublinearity_probe(policy_name: str, instance: Instance, horizons: Sequence[int], replications: int = 50,
                       seed: int = 0, overrides=None, workers: int = 1) -> ProbeReport:
    """Fit the growth exponent of mean pseudo-regret over increasing horizons.

    Every horizon reuses the same replication seeds. Phased algorithms pass
    below 0.95; uniform-random passes at or above 0.98.
    """
    horizons = [int(h) for h in horizons]
    if len(horizons) < 3:
        raise ConfigurationError(f"need at least 3 horizons, got {len(horizons)}", "horizons")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ConfigurationError("horizons must be strictly increasing", "horizons")
    means = []
    for horizon in horizons:
        results = run_replications(instance.with_horizon(horizon), policy_name, replications, seed,
                                   overrides, workers=workers, verify=False, trace=False)
        means.append(float(np.mean([r.final_pseudo_regret for r in results])))
    if min(means) <= 0:
        exponent = math.nan
    else:
        exponent = fit_exponent(horizons, means)
    if policy_name == "uniform-random":
        passed = exponent >= LINEAR_MIN
    else:
        passed = exponent < SUBLINEAR_MAX
    return ProbeReport(policy_name, horizons, means, exponent, bool(passed))
