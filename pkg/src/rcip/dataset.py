"""Flat array view of a list of scenario records, consumed by the kernels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .types import InvalidInputError, ScenarioRecord, StepContext


@dataclass(frozen=True)
class PackedDataset:
    """Steps of all records stacked row-wise; ``offsets`` delimit records.

    Logit rows are right-padded with zeros (and action ids with 0) beyond
    ``n_intents``; kernels ignore the padding.
    """

    logits: np.ndarray  # (S, Nmax) float64
    n_intents: np.ndarray  # (S,) int64
    amap: np.ndarray  # (S, Nmax) int64
    num_actions: np.ndarray  # (S,) int64
    true_intent: np.ndarray  # (S,) int64
    offsets: np.ndarray  # (R + 1,) int64
    scenario_ids: tuple[str, ...] = ()

    @property
    def num_records(self) -> int:
        return len(self.offsets) - 1

    @property
    def num_steps(self) -> int:
        return len(self.true_intent)

    @property
    def steps_per_record(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def record_of_step(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_records), self.steps_per_record)

    @classmethod
    def from_records(cls, records: Sequence[ScenarioRecord]) -> "PackedDataset":
        if not records:
            raise InvalidInputError("dataset is empty")
        steps = [s for r in records for s in r.steps]
        nmax = max(s.num_intents for s in steps)
        S = len(steps)
        logits = np.zeros((S, nmax))
        amap = np.zeros((S, nmax), dtype=np.int64)
        for i, s in enumerate(steps):
            logits[i, : s.num_intents] = s.logits
            amap[i, : s.num_intents] = s.intent_to_action
        lengths = [len(r.steps) for r in records]
        return cls(
            logits=logits,
            n_intents=np.array([s.num_intents for s in steps], dtype=np.int64),
            amap=amap,
            num_actions=np.array([s.num_actions for s in steps], dtype=np.int64),
            true_intent=np.array([s.true_intent for s in steps], dtype=np.int64),
            offsets=np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
            scenario_ids=tuple(r.scenario_id for r in records),
        )

    def to_records(self) -> list[ScenarioRecord]:
        ids = self.scenario_ids or tuple(f"rec-{i:06d}" for i in range(self.num_records))
        out = []
        for r in range(self.num_records):
            steps = []
            for s in range(self.offsets[r], self.offsets[r + 1]):
                n = int(self.n_intents[s])
                steps.append(
                    StepContext(
                        tuple(self.logits[s, :n].tolist()),
                        tuple(self.amap[s, :n].tolist()),
                        int(self.true_intent[s]),
                        int(self.num_actions[s]),
                    )
                )
            out.append(ScenarioRecord(ids[r], tuple(steps)))
        return out


Records = Union[Sequence[ScenarioRecord], PackedDataset]


def as_packed(records: Records) -> PackedDataset:
    if isinstance(records, PackedDataset):
        if records.num_records == 0:
            raise InvalidInputError("dataset is empty")
        return records
    return PackedDataset.from_records(records)


@dataclass(frozen=True)
class ThetaStats:
    """Per-step and per-record score summaries at one temperature.

    ``true_score``, ``top1``, ``top2`` are per step.  ``seq_conf`` is the
    record-level minimum true-action score (miscoverage iff < lambda),
    ``help_max`` the record-level maximum runner-up score (some step needs
    help iff >= lambda).
    """

    theta: float
    true_score: np.ndarray
    top1: np.ndarray
    top2: np.ndarray
    seq_conf: np.ndarray
    help_max: np.ndarray


def theta_stats(data: PackedDataset, theta: float) -> ThetaStats:
    true_score, top1, top2 = _kernels.step_stats(
        data.logits, data.n_intents, data.amap, data.num_actions, data.true_intent, theta
    )
    starts = data.offsets[:-1]
    return ThetaStats(
        theta=float(theta),
        true_score=true_score,
        top1=top1,
        top2=top2,
        seq_conf=np.minimum.reduceat(true_score, starts),
        help_max=np.maximum.reduceat(top2, starts),
    )
