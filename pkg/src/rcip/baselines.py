"""Comparison set-valued predictors at a fixed temperature.

All baselines threshold aggregated *action* scores so that set sizes are
comparable with the calibrated predictor.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scoring import argmax_action, sequence_confidence, step_action_scores, threshold_scores
from .types import InvalidInputError, ParamPair, PredictionSet, ScenarioRecord, StepContext

# Cumulative sums of floating-point scores may fall a few ulps short of 1.
MASS_TOL = 1e-12


class Method(str, enum.Enum):
    RCIP = "rcip"
    KNOWNO = "knowno"
    SIMPLE = "simple"
    ENTROPY = "entropy"
    NOHELP = "nohelp"


@dataclass(frozen=True)
class BaselineParams:
    """``threshold`` is the conformal quantile (KnowNo), the cumulative mass
    target (Simple Set) or the entropy cutoff (Entropy Set); No Help ignores it."""

    method: Method
    threshold: float = 0.0
    theta_fixed: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        t = self.threshold
        if self.method is Method.KNOWNO and not 0.0 <= t <= 1.0:
            raise InvalidInputError(f"conformal quantile must lie in [0, 1], got {t}")
        if self.method is Method.SIMPLE and not 0.0 < t <= 1.0:
            raise InvalidInputError(f"mass target must lie in (0, 1], got {t}")
        if self.method is Method.ENTROPY and not t >= 0.0:
            raise InvalidInputError(f"entropy cutoff must be >= 0, got {t}")
        if self.method is Method.RCIP:
            raise InvalidInputError("rcip is calibrated, not a fixed-temperature baseline")

    def predict(self, step: StepContext) -> PredictionSet:
        if self.method is Method.KNOWNO:
            return threshold_scores(step_action_scores(step, self.theta_fixed), 1.0 - self.threshold)
        if self.method is Method.SIMPLE:
            return simple_set(step, self.threshold, self.theta_fixed)
        if self.method is Method.ENTROPY:
            return entropy_set(step, self.threshold, self.theta_fixed)
        return no_help(step, self.theta_fixed)


def conformal_rank(m: int, alpha: float) -> int:
    """1-based rank ``ceil((m + 1)(1 - alpha))`` of the conformal quantile."""
    return math.ceil((m + 1) * (1.0 - alpha) - 1e-9)


def knowno_scores(records: Sequence[ScenarioRecord], theta: float = 1.0) -> np.ndarray:
    """Nonconformity ``1 - sequence confidence`` of the true intents."""
    out = []
    for r in records:
        conf = sequence_confidence(r, r.true_intents, ParamPair(0.0, theta))
        out.append(1.0 - conf)
    return np.asarray(out)


def knowno_calibrate(records: Sequence[ScenarioRecord], alpha: float, theta: float = 1.0) -> BaselineParams:
    """Split-conformal quantile of the sequence-level nonconformity scores."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    m = len(records)
    rank = conformal_rank(m, alpha)
    if m == 0 or rank > m:
        need = math.ceil(1.0 / alpha - 1.0 - 1e-9)
        raise InvalidInputError(
            f"{m} calibration records are too few for alpha={alpha}; at least {need} are needed"
        )
    scores = np.sort(knowno_scores(records, theta))
    return BaselineParams(Method.KNOWNO, float(scores[rank - 1]), theta)


def knowno_params(params: BaselineParams) -> ParamPair:
    """Equivalent (lambda, theta) point for a KnowNo quantile."""
    return ParamPair(min(max(1.0 - params.threshold, 0.0), 1.0), params.theta_fixed)


def _ranked(scores: dict[int, float]) -> list[int]:
    return sorted(scores, key=lambda a: (-scores[a], a))


def simple_set(step: StepContext, mass_target: float, theta: float = 1.0) -> PredictionSet:
    """Add actions in decreasing score order until their mass reaches ``mass_target``."""
    if not 0.0 < mass_target <= 1.0:
        raise InvalidInputError(f"mass target must lie in (0, 1], got {mass_target}")
    scores = step_action_scores(step, theta)
    chosen, total = [], 0.0
    for a in _ranked(scores):
        if total >= mass_target - MASS_TOL or scores[a] <= 0.0:
            break
        chosen.append(a)
        total += scores[a]
    return PredictionSet.from_actions(chosen, scores)


def entropy(scores: dict[int, float]) -> float:
    return -sum(p * math.log(p) for p in scores.values() if p > 0.0)


def entropy_set(step: StepContext, cutoff: float, theta: float = 1.0) -> PredictionSet:
    """Top action alone when the action entropy is below ``cutoff``, otherwise every action."""
    if cutoff < 0.0:
        raise InvalidInputError(f"entropy cutoff must be >= 0, got {cutoff}")
    scores = step_action_scores(step, theta)
    if entropy(scores) < cutoff:
        return PredictionSet.from_actions([argmax_action(scores)], scores)
    return PredictionSet.from_actions(list(scores), scores)


def no_help(step: StepContext, theta: float = 1.0) -> PredictionSet:
    scores = step_action_scores(step, theta)
    return PredictionSet.from_actions([argmax_action(scores)], scores)


# -- threshold selection for the uncalibrated baselines -------------------------

def _kth_largest(values: np.ndarray, target: float) -> float:
    k = max(math.ceil(target * len(values) - 1e-9), 1)
    return float(np.sort(values)[::-1][k - 1])


def simple_set_tune(records: Sequence[ScenarioRecord], target: float, theta: float = 1.0) -> BaselineParams:
    """Smallest mass target whose empirical plan coverage on ``records`` reaches ``target``.

    The true action joins a step's set exactly when the mass ranked ahead of
    it is below the target, so a record is covered when the target exceeds
    the largest such "mass ahead" over its steps.
    """
    ahead = []
    for r in records:
        worst = 0.0
        for step in r.steps:
            scores = step_action_scores(step, theta)
            cum = 0.0
            for a in _ranked(scores):
                if a == step.true_action:
                    break
                cum += scores[a]
            worst = max(worst, cum)
        ahead.append(worst)
    k = max(math.ceil(target * len(ahead) - 1e-9), 1)
    mass = float(np.sort(ahead)[k - 1]) + 2 * MASS_TOL
    return BaselineParams(Method.SIMPLE, min(mass, 1.0), theta)


def entropy_tune(records: Sequence[ScenarioRecord], target: float, theta: float = 1.0) -> BaselineParams:
    """Largest entropy cutoff whose empirical plan coverage on ``records`` reaches ``target``.

    Coverage can only fall as the cutoff grows, so the largest feasible
    cutoff asks for the least help.
    """
    worst_cut = []
    max_entropy = 0.0
    for r in records:
        w = math.inf
        for step in r.steps:
            scores = step_action_scores(step, theta)
            h = entropy(scores)
            max_entropy = max(max_entropy, math.log(len(scores)))
            if argmax_action(scores) != step.true_action:
                w = min(w, h)
        worst_cut.append(w)
    cut = _kth_largest(np.asarray(worst_cut), target)
    if math.isinf(cut):
        cut = max_entropy + 1.0
    return BaselineParams(Method.ENTROPY, cut, theta)
