"""Synthetic scenario generators whose true risks are known in closed form.

``LogisticGenerator`` draws, per decision step, a feature ``x ~ U(-a, a)``
and the true intent 0 with probability ``sigmoid(x)`` (else 1).  The
predictor emits logits ``scale * [x, 0]`` and each intent is its own action.
With ``scale = 1`` the predictor is calibrated at temperature 1; other
scales model over/under-confidence.  Steps are independent and intents are
re-drawn at every step.

``ConstantGenerator`` has a single intent per step, so every loss is zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import HelpVariant, RiskKind, RiskSpec
from .dataset import PackedDataset


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _logit(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


def _pack(logits, amap, true_intent, num_actions, steps, m) -> PackedDataset:
    S = logits.shape[0]
    return PackedDataset(
        logits=np.ascontiguousarray(logits, dtype=np.float64),
        n_intents=np.full(S, logits.shape[1], dtype=np.int64),
        amap=np.ascontiguousarray(amap, dtype=np.int64),
        num_actions=np.full(S, num_actions, dtype=np.int64),
        true_intent=np.ascontiguousarray(true_intent, dtype=np.int64),
        offsets=np.arange(0, (m + 1) * steps, steps, dtype=np.int64),
        scenario_ids=tuple(f"syn-{i:06d}" for i in range(m)),
    )


@dataclass(frozen=True)
class LogisticGenerator:
    steps: int = 1
    half_width: float = 4.0
    scale: float = 1.0

    name = "logistic"

    def sample(self, rng: np.random.Generator, m: int) -> PackedDataset:
        S = m * self.steps
        x = rng.uniform(-self.half_width, self.half_width, size=S)
        z = (rng.uniform(size=S) >= 1.0 / (1.0 + np.exp(-x))).astype(np.int64)
        logits = np.stack([self.scale * x, np.zeros(S)], axis=1)
        amap = np.tile(np.array([0, 1], dtype=np.int64), (S, 1))
        return _pack(logits, amap, z, 2, self.steps, m)

    def step_miscoverage(self, lam: np.ndarray, theta: np.ndarray) -> np.ndarray:
        a = self.half_width
        with np.errstate(over="ignore", invalid="ignore"):
            c = np.clip(_logit(np.asarray(lam, dtype=np.float64)) / (theta * self.scale), -a, a)
        return np.clip((_softplus(c) - _softplus(-a)) / a, 0.0, 1.0)

    def step_help(self, lam: np.ndarray, theta: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            width = _logit(1.0 - lam) / (theta * self.scale * self.half_width)
        return np.where(lam <= 0.5, np.clip(width, 0.0, 1.0), 0.0)

    def true_risk(self, spec: RiskSpec, lam: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if spec.kind is RiskKind.MISCOVERAGE:
            return 1.0 - (1.0 - self.step_miscoverage(lam, theta)) ** self.steps
        h = self.step_help(lam, theta)
        if spec.help_variant is HelpVariant.STEP:
            return h
        return 1.0 - (1.0 - h) ** self.steps


@dataclass(frozen=True)
class ConstantGenerator:
    steps: int = 1

    name = "constant"

    def sample(self, rng: np.random.Generator, m: int) -> PackedDataset:
        S = m * self.steps
        logits = rng.normal(size=(S, 1))
        return _pack(logits, np.zeros((S, 1)), np.zeros(S), 1, self.steps, m)

    def true_risk(self, spec: RiskSpec, lam: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.zeros(np.broadcast(np.asarray(lam), np.asarray(theta)).shape)


GENERATORS = {
    "bernoulli": lambda: LogisticGenerator(steps=1),
    "multistep": lambda: LogisticGenerator(steps=3),
    "zero": lambda: ConstantGenerator(steps=1),
}
