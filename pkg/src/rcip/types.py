"""Core value types shared by every module.

All types are frozen dataclasses; construction validates the invariants so
that downstream code can assume well-formed inputs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class SetKind(str, enum.Enum):
    EMPTY = "empty"
    SINGLETON = "singleton"
    HELP = "help"


@dataclass(frozen=True)
class StepContext:
    """One decision step: predictor logits, intent->action map and the label.

    ``num_actions`` defaults to ``max(intent_to_action) + 1``; it may be set
    larger when some actions are not reachable from any intent.
    """

    logits: tuple[float, ...]
    intent_to_action: tuple[int, ...]
    true_intent: int
    num_actions: int = -1

    def __post_init__(self) -> None:
        logits = tuple(float(v) for v in self.logits)
        amap = tuple(int(a) for a in self.intent_to_action)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "intent_to_action", amap)
        if not logits:
            raise InvalidInputError("step has no logits")
        if not all(math.isfinite(v) for v in logits):
            raise InvalidInputError("step logits must be finite")
        if len(amap) != len(logits):
            raise InvalidInputError(
                f"intent_to_action has length {len(amap)}, expected {len(logits)}"
            )
        if any(a < 0 for a in amap):
            raise InvalidInputError("action ids must be non-negative")
        if not 0 <= int(self.true_intent) < len(logits):
            raise InvalidInputError(
                f"true_intent {self.true_intent} outside [0, {len(logits)})"
            )
        object.__setattr__(self, "true_intent", int(self.true_intent))
        n_act = max(amap) + 1 if self.num_actions < 0 else int(self.num_actions)
        if n_act <= max(amap):
            raise InvalidInputError("num_actions smaller than a referenced action id")
        object.__setattr__(self, "num_actions", n_act)

    @property
    def num_intents(self) -> int:
        return len(self.logits)

    @property
    def true_action(self) -> int:
        return self.intent_to_action[self.true_intent]


@dataclass(frozen=True)
class ScenarioRecord:
    scenario_id: str
    steps: tuple[StepContext, ...]

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        if not steps:
            raise InvalidInputError(f"scenario {self.scenario_id!r} has no steps")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def true_intents(self) -> list[int]:
        return [s.true_intent for s in self.steps]


@dataclass(frozen=True, order=True)
class ParamPair:
    """A hypothesis point: confidence threshold ``lam`` and temperature ``theta``."""

    lam: float
    theta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"lambda must lie in [0, 1], got {self.lam}")
        if not (self.theta > 0.0 and math.isfinite(self.theta)):
            raise InvalidInputError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class PredictionSet:
    actions: frozenset[int]
    scores: Mapping[int, float] = field(default_factory=dict)

    @property
    def kind(self) -> SetKind:
        n = len(self.actions)
        if n == 0:
            return SetKind.EMPTY
        return SetKind.SINGLETON if n == 1 else SetKind.HELP

    def __contains__(self, action: object) -> bool:
        return action in self.actions

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_actions(cls, actions: Sequence[int], scores: Mapping[int, float]) -> "PredictionSet":
        return cls(frozenset(actions), {a: scores[a] for a in sorted(actions)})
