"""Test-set metrics, help-rate curves, ablation surface and FWER Monte Carlo."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Protocol, Sequence

import numpy as np

from .baselines import (
    BaselineParams,
    Method,
    entropy_tune,
    knowno_calibrate,
    knowno_params,
    simple_set_tune,
)
from .calibration import (
    CalibrationConfig,
    CalibrationResult,
    RiskKind,
    RiskSpec,
    calibrate,
    compute_table,
    fixed_sequence_test,
)
from .dataset import PackedDataset, Records, as_packed, theta_stats
from .scoring import FAILURE, action_set, policy_step
from .types import InvalidInputError, ParamPair, PredictionSet, ScenarioRecord, StepContext


class Policy(Protocol):
    def predict(self, step: StepContext) -> PredictionSet: ...


@dataclass(frozen=True)
class RcipPolicy:
    params: ParamPair

    def predict(self, step: StepContext) -> PredictionSet:
        return action_set(step, self.params)


@dataclass(frozen=True)
class MetricsReport:
    """Plan- and step-level success and help, backed by integer tallies.

    Step rates pool all steps of all records; for datasets whose records
    share one length this equals averaging per record first.
    """

    method: str
    params: dict[str, Any]
    num_records: int
    num_steps: int
    plan_successes: int
    plan_helps: int
    step_successes: int
    step_helps: int
    empty_sets: int
    feasible: bool = True

    @property
    def plan_success(self) -> float:
        return self.plan_successes / self.num_records if self.num_records else 0.0

    @property
    def plan_help(self) -> float:
        return self.plan_helps / self.num_records if self.num_records else 0.0

    @property
    def step_success(self) -> float:
        return self.step_successes / self.num_steps if self.num_steps else 0.0

    @property
    def step_help(self) -> float:
        return self.step_helps / self.num_steps if self.num_steps else 0.0

    def check(self, uniform_length: bool = True) -> None:
        """Assert plan/step consistency.

        ``step_success >= plan_success`` and ``plan_help >= step_help`` are
        guaranteed only when every record has the same number of steps.
        """
        assert 0 <= self.plan_successes <= self.num_records
        assert 0 <= self.plan_helps <= self.num_records
        assert 0 <= self.step_successes <= self.num_steps
        assert 0 <= self.step_helps <= self.num_steps
        if uniform_length:
            assert self.step_successes * self.num_records >= self.plan_successes * self.num_steps
            assert self.plan_helps * self.num_steps >= self.step_helps * self.num_records


def rollout(record: ScenarioRecord, policy: Policy) -> tuple[bool, bool, int, int, int]:
    """Deploy ``policy`` on one record with the simulated human answering help requests.

    Returns ``(plan_success, plan_help, step_successes, step_helps, empty_sets)``.
    After an empty set the task has failed: the remaining steps count as
    failures without help.
    """
    halted = False
    ok_steps = help_steps = empties = 0
    all_ok = True
    for step in record.steps:
        if halted:
            all_ok = False
            continue
        executed, helped = policy_step(policy.predict(step), step.true_intent, step.intent_to_action)
        if executed is FAILURE:
            halted = True
            all_ok = False
            empties += 1
            continue
        help_steps += helped
        if executed == step.true_action:
            ok_steps += 1
        else:
            all_ok = False
    return all_ok, help_steps > 0, ok_steps, help_steps, empties


def evaluate(
    records: Sequence[ScenarioRecord],
    policy: Policy,
    method: str = "",
    params: Optional[dict[str, Any]] = None,
) -> MetricsReport:
    if not records:
        raise InvalidInputError("cannot evaluate on an empty dataset")
    tallies = np.zeros(5, dtype=np.int64)
    for r in records:
        tallies += np.array(rollout(r, policy), dtype=np.int64)
    report = MetricsReport(
        method=method or type(policy).__name__,
        params=dict(params or {}),
        num_records=len(records),
        num_steps=sum(len(r.steps) for r in records),
        plan_successes=int(tallies[0]),
        plan_helps=int(tallies[1]),
        step_successes=int(tallies[2]),
        step_helps=int(tallies[3]),
        empty_sets=int(tallies[4]),
    )
    report.check(uniform_length=len({len(r.steps) for r in records}) == 1)
    return report


def infeasible_report(method: str, records: Sequence[ScenarioRecord], params: Optional[dict] = None) -> MetricsReport:
    return MetricsReport(method, dict(params or {}), len(records),
                         sum(len(r.steps) for r in records), 0, 0, 0, 0, 0, feasible=False)


# -- curves ---------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    method: str
    target_success: float
    achieved_success: float
    help_rate: float
    feasible: bool = True
    params: dict[str, Any] = field(default_factory=dict)


def fit_method(
    method: Method | str,
    cal_records: Sequence[ScenarioRecord],
    target: float,
    config: Optional[CalibrationConfig] = None,
) -> tuple[Optional[Policy], dict[str, Any]]:
    """Calibrate or tune ``method`` on ``cal_records`` for plan success ``target``.

    Returns ``(None, info)`` when the target is infeasible.
    """
    method = Method(method)
    alpha = 1.0 - target
    if method is Method.RCIP:
        base = config or CalibrationConfig()
        risks = (RiskSpec(RiskKind.MISCOVERAGE, alpha),) + tuple(
            r for r in base.risks if r.kind is not RiskKind.MISCOVERAGE
        )
        res = calibrate(cal_records, replace(base, risks=risks))
        if res.selected is None:
            return None, {"valid_size": 0}
        p = res.selected
        return RcipPolicy(p), {"lambda": p.lam, "theta": p.theta, "valid_size": len(res.valid_indices)}
    if method is Method.KNOWNO:
        try:
            bp = knowno_calibrate(cal_records, alpha)
        except InvalidInputError as exc:
            return None, {"reason": str(exc)}
        return bp, {"qhat": bp.threshold, "lambda": knowno_params(bp).lam, "theta": bp.theta_fixed}
    if method is Method.SIMPLE:
        bp = simple_set_tune(cal_records, target)
        return bp, {"mass_target": bp.threshold}
    if method is Method.ENTROPY:
        bp = entropy_tune(cal_records, target)
        return bp, {"entropy_cutoff": bp.threshold, "cutoff_selection": "calibration-set sweep"}
    return BaselineParams(Method.NOHELP), {}


def help_rate_curve(
    cal_records: Sequence[ScenarioRecord],
    test_records: Sequence[ScenarioRecord],
    method: Method | str,
    target_grid: Sequence[float],
    config: Optional[CalibrationConfig] = None,
) -> list[CurvePoint]:
    targets = [float(t) for t in target_grid]
    if any(not 0.0 < t < 1.0 for t in targets):
        raise InvalidInputError("targets must lie in (0, 1)")
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise InvalidInputError("targets must be strictly ascending")
    method = Method(method)
    points = []
    for t in targets:
        policy, info = fit_method(method, cal_records, t, config)
        if policy is None:
            points.append(CurvePoint(method.value, t, math.nan, math.nan, False, info))
            continue
        rep = evaluate(test_records, policy, method.value, info)
        points.append(CurvePoint(method.value, t, rep.plan_success, rep.plan_help, True, info))
    return points


# -- ablation -----------------------------------------------------------------

def ablation_surface(
    cal_records: Records,
    alpha_cov_grid: Sequence[float],
    alpha_help_grid: Sequence[float],
    delta: float = 0.01,
    config: Optional[CalibrationConfig] = None,
) -> dict[tuple[float, float], int]:
    """Size of the valid set for every (alpha_cov, alpha_help) cell; infeasible cells are 0."""
    data = as_packed(cal_records)
    base = replace(config or CalibrationConfig(), delta=delta)
    out = {}
    for ac in alpha_cov_grid:
        for ah in alpha_help_grid:
            cfg = replace(base, risks=(RiskSpec(RiskKind.MISCOVERAGE, ac), RiskSpec(RiskKind.HELP, ah)))
            table = compute_table(data, cfg)
            out[(float(ac), float(ah))] = len(fixed_sequence_test(table.combined_p, cfg.delta, cfg.num_chains))
    return out


# -- FWER Monte Carlo -------------------------------------------------------------

class Generator(Protocol):
    name: str

    def sample(self, rng: np.random.Generator, m: int) -> PackedDataset: ...

    def true_risk(self, spec: RiskSpec, lam: np.ndarray, theta: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class TrialLog:
    trial: int
    valid_size: int
    violated: bool
    worst_excess: float  # max over valid members and risks of true risk - alpha


@dataclass(frozen=True)
class FwerReport:
    trials: int
    violations: int
    delta: float
    log: tuple[TrialLog, ...]

    @property
    def observed_fwer(self) -> float:
        return self.violations / self.trials

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.delta * (1.0 - self.delta) / self.trials)

    @property
    def bound(self) -> float:
        """delta plus three Monte Carlo standard errors."""
        return self.delta + 3.0 * self.standard_error

    @property
    def passed(self) -> bool:
        return self.observed_fwer <= self.bound


def fwer_monte_carlo(
    generator: Generator,
    config: CalibrationConfig,
    trials: int,
    num_records: int = 400,
    seed: int = 0,
) -> FwerReport:
    """Fraction of fresh calibration draws whose valid set contains a parameter with true risk above its level."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    logs = []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        res = calibrate(generator.sample(rng, num_records), config)
        idx = np.asarray(res.valid_indices, dtype=np.int64)
        excess = -math.inf
        if idx.size:
            lam, theta = res.table.lam[idx], res.table.theta[idx]
            for spec in config.risks:
                excess = max(excess, float(np.max(generator.true_risk(spec, lam, theta) - spec.alpha)))
        logs.append(TrialLog(t, int(idx.size), excess > 0.0, excess))
    return FwerReport(trials, sum(l.violated for l in logs), config.delta, tuple(logs))


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Two-sided Wilson score interval (95% by default)."""
    if n <= 0:
        raise InvalidInputError("n must be positive")
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def wilson_slack(rate: float, n: int) -> float:
    """Half-width-style slack: distance from ``rate`` to the Wilson upper bound at that rate."""
    lo, hi = wilson_interval(round(rate * n), n)
    return max(hi - rate, rate - lo)


def union_event_rates(
    test: PackedDataset, params: Sequence[ParamPair]
) -> np.ndarray:
    """Empirical P(miscoverage or plan help) on ``test`` for each parameter pair."""
    out = np.empty(len(params))
    cache: dict[float, Any] = {}
    for i, p in enumerate(params):
        if p.theta not in cache:
            cache[p.theta] = theta_stats(test, p.theta)
        st = cache[p.theta]
        out[i] = np.mean((st.seq_conf < p.lam) | (st.help_max >= p.lam))
    return out
