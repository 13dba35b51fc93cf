"""Intent scoring and prediction-set construction.

These are the scalar, per-step reference routines.  The calibration sweep
uses vectorised kernels (:mod:`rcip._kernels`) that must agree with them.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .types import InvalidInputError, ParamPair, PredictionSet, ScenarioRecord, StepContext

FAILURE = None


def softmax_with_temperature(logits: Sequence[float], theta: float) -> np.ndarray:
    """Temperature-scaled softmax, ``exp(theta * l_z) / sum exp(theta * l_z')``.

    Small ``theta`` flattens the distribution towards uniform, large
    ``theta`` sharpens it towards the argmax.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("logits must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("logits must be finite")
    if not (theta > 0 and math.isfinite(theta)):
        raise InvalidInputError(f"theta must be positive, got {theta}")
    z = theta * x
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def intent_set(probs: Sequence[float], lam: float) -> set[int]:
    """Intents whose confidence is at least ``lam`` (inclusive)."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"lambda must lie in [0, 1], got {lam}")
    return {z for z, p in enumerate(probs) if p >= lam}


def aggregate_action_scores(probs: Sequence[float], intent_to_action: Sequence[int]) -> dict[int, float]:
    """Sum intent probabilities that lead to the same action."""
    if len(probs) != len(intent_to_action):
        raise InvalidInputError(
            f"probs has length {len(probs)} but intent_to_action has {len(intent_to_action)}"
        )
    scores: dict[int, float] = {}
    for p, a in zip(probs, intent_to_action):
        a = int(a)
        scores[a] = scores.get(a, 0.0) + float(p)
    return scores


def step_action_scores(step: StepContext, theta: float) -> dict[int, float]:
    return aggregate_action_scores(softmax_with_temperature(step.logits, theta), step.intent_to_action)


def threshold_scores(scores: dict[int, float], lam: float) -> PredictionSet:
    keep = [a for a, s in scores.items() if s >= lam]
    return PredictionSet.from_actions(keep, scores)


def action_set(step: StepContext, params: ParamPair) -> PredictionSet:
    """Actions whose aggregated confidence at ``params.theta`` is >= ``params.lam``."""
    return threshold_scores(step_action_scores(step, params.theta), params.lam)


def sequence_confidence(record: ScenarioRecord, intent_sequence: Sequence[int], params: ParamPair) -> float:
    """Minimum over steps of the aggregated score of the action each intent induces."""
    if len(intent_sequence) != len(record.steps):
        raise InvalidInputError(
            f"intent sequence has length {len(intent_sequence)}, record has {len(record.steps)} steps"
        )
    best = math.inf
    for step, z in zip(record.steps, intent_sequence):
        if not 0 <= z < step.num_intents:
            raise InvalidInputError(f"intent {z} outside [0, {step.num_intents})")
        scores = step_action_scores(step, params.theta)
        best = min(best, scores[step.intent_to_action[z]])
    return best


def causal_action_set(record: ScenarioRecord, params: ParamPair) -> list[PredictionSet]:
    """Per-step sets; their Cartesian product is the sequence-level set."""
    return [action_set(step, params) for step in record.steps]


def policy_step(
    pred_set: PredictionSet, oracle_intent: int, intent_to_action: Sequence[int]
) -> tuple[Optional[int], bool]:
    """Deploy one step: execute a singleton, ask the human for a larger set.

    Returns ``(executed_action, help_triggered)``; ``executed_action`` is
    :data:`FAILURE` (``None``) when the set is empty.
    """
    n = len(pred_set.actions)
    if n == 0:
        return FAILURE, False
    if n == 1:
        return next(iter(pred_set.actions)), False
    return int(intent_to_action[oracle_intent]), True


def argmax_action(scores: dict[int, float]) -> int:
    """Highest-scoring action, lowest id on exact ties."""
    return min(scores, key=lambda a: (-scores[a], a))
