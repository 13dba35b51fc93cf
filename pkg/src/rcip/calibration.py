"""Learn-then-Test calibration over the (lambda, theta) grid.

Each grid point is a null hypothesis "the risk is not controlled".  Per-risk
Hoeffding-Bentkus p-values are combined by their maximum and fed to
fixed-sequence testing along pre-ordered chains, which yields the
FWER-controlling set of parameters.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .concentration import hb_pvalues
from .dataset import PackedDataset, Records, ThetaStats, as_packed, theta_stats
from .scoring import causal_action_set, sequence_confidence
from .types import InvalidInputError, ParamPair, ScenarioRecord


class RiskKind(str, enum.Enum):
    MISCOVERAGE = "miscoverage"
    HELP = "help"


class HelpVariant(str, enum.Enum):
    PLAN = "plan"
    STEP = "step"


@dataclass(frozen=True)
class RiskSpec:
    kind: RiskKind
    alpha: float
    help_variant: HelpVariant = HelpVariant.PLAN

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RiskKind(self.kind))
        object.__setattr__(self, "help_variant", HelpVariant(self.help_variant))
        # Endpoints are allowed so that ablation grids can include 0 and 1.
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in [0, 1], got {self.alpha}")


def default_lambda_grid(size: int = 2000) -> tuple[float, ...]:
    return tuple(np.linspace(0.0, 1.0, size).tolist())


def default_theta_grid(lo: float = 1e-3, hi: float = 10.0, count: int = 5) -> tuple[float, ...]:
    return tuple(np.geomspace(lo, hi, count).tolist())


@dataclass(frozen=True)
class CalibrationConfig:
    delta: float = 0.01
    lambda_grid: tuple[float, ...] = field(default_factory=default_lambda_grid)
    theta_grid: tuple[float, ...] = field(default_factory=default_theta_grid)
    num_chains: Optional[int] = None
    risks: tuple[RiskSpec, ...] = (RiskSpec(RiskKind.MISCOVERAGE, 0.15),)

    def __post_init__(self) -> None:
        lam = tuple(float(v) for v in self.lambda_grid)
        theta = tuple(float(v) for v in self.theta_grid)
        object.__setattr__(self, "lambda_grid", lam)
        object.__setattr__(self, "theta_grid", theta)
        object.__setattr__(self, "risks", tuple(self.risks))
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if not lam or not theta:
            raise InvalidInputError("lambda and theta grids must be non-empty")
        if any(b < a for a, b in zip(lam, lam[1:])) or any(b < a for a, b in zip(theta, theta[1:])):
            raise InvalidInputError("grids must be sorted ascending")
        if lam[0] < 0.0 or lam[-1] > 1.0:
            raise InvalidInputError("lambda grid must lie in [0, 1]")
        if theta[0] <= 0.0:
            raise InvalidInputError("theta grid must be positive")
        if not self.risks:
            raise InvalidInputError("at least one risk is required")
        if len(self.risks) > 1 and self.risks[0].kind is not RiskKind.MISCOVERAGE:
            raise InvalidInputError("miscoverage must be the first risk when several are controlled")
        if self.num_chains is None:
            object.__setattr__(self, "num_chains", len(theta))
        if not 1 <= self.num_chains <= len(lam) * len(theta):
            raise InvalidInputError(
                f"num_chains must lie in [1, {len(lam) * len(theta)}], got {self.num_chains}"
            )

    @property
    def num_hypotheses(self) -> int:
        return len(self.lambda_grid) * len(self.theta_grid)

    @property
    def level(self) -> float:
        """Per-chain rejection level delta / |J|."""
        return self.delta / self.num_chains

    def params(self, index: int) -> ParamPair:
        b, i = divmod(index, len(self.lambda_grid))
        return ParamPair(self.lambda_grid[i], self.theta_grid[b])


@dataclass(frozen=True)
class PValueTable:
    """Hypotheses flattened theta-major, lambda ascending within a block."""

    lam: np.ndarray
    theta: np.ndarray
    empirical_risks: np.ndarray  # (P, K)
    p_values: np.ndarray  # (P, K)
    help_rate: np.ndarray  # (P,) empirical help rate used to pick the operating point

    @property
    def combined_p(self) -> np.ndarray:
        return self.p_values.max(axis=1)

    def __len__(self) -> int:
        return len(self.lam)


@dataclass(frozen=True)
class CalibrationResult:
    config: CalibrationConfig
    table: PValueTable
    valid_indices: tuple[int, ...]
    selected_index: Optional[int]
    num_records: int

    @property
    def valid_params(self) -> list[ParamPair]:
        return [self.config.params(j) for j in self.valid_indices]

    @property
    def selected(self) -> Optional[ParamPair]:
        return None if self.selected_index is None else self.config.params(self.selected_index)

    @property
    def feasible(self) -> bool:
        return bool(self.valid_indices)


# -- losses -----------------------------------------------------------------

def miscoverage_loss(record: ScenarioRecord, params: ParamPair) -> int:
    """1 when the true induced action sequence falls outside the sequence-level set."""
    conf = sequence_confidence(record, record.true_intents, params)
    return int(conf < params.lam)


def help_loss(record: ScenarioRecord, params: ParamPair, variant: HelpVariant | str = HelpVariant.PLAN) -> float:
    """Plan level: 1 if any step's set has more than one action.  Step level: the fraction of such steps."""
    variant = HelpVariant(variant)
    sizes = [len(s) for s in causal_action_set(record, params)]
    flags = [n > 1 for n in sizes]
    if variant is HelpVariant.PLAN:
        return float(any(flags))
    return sum(flags) / len(flags)


LossFn = Callable[[ScenarioRecord, ParamPair], float]


def empirical_risk(records: Sequence[ScenarioRecord], params: ParamPair, loss: LossFn) -> float:
    if not records:
        raise InvalidInputError("empirical risk of an empty dataset")
    return sum(loss(r, params) for r in records) / len(records)


def loss_for(spec: RiskSpec) -> LossFn:
    if spec.kind is RiskKind.MISCOVERAGE:
        return miscoverage_loss
    return lambda rec, p: help_loss(rec, p, spec.help_variant)


# -- vectorised risk sweep ------------------------------------------------------

def _count_below(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """#{v < g} for each g in grid."""
    return np.searchsorted(np.sort(values), grid, side="left")


def risk_sums(data: PackedDataset, stats: ThetaStats, spec: RiskSpec, lam_grid: np.ndarray) -> np.ndarray:
    """Sum over records of the loss at every lambda in ``lam_grid`` (one temperature)."""
    M = data.num_records
    if spec.kind is RiskKind.MISCOVERAGE:
        return _count_below(stats.seq_conf, lam_grid).astype(np.float64)
    if spec.help_variant is HelpVariant.PLAN:
        return (M - _count_below(stats.help_max, lam_grid)).astype(np.float64)
    weights = 1.0 / data.steps_per_record[data.record_of_step]
    order = np.argsort(stats.top2, kind="stable")
    sorted_top2 = stats.top2[order]
    # tail[i] = total weight of steps at sorted position >= i
    tail = np.concatenate([np.cumsum(weights[order][::-1])[::-1], [0.0]])
    return tail[np.searchsorted(sorted_top2, lam_grid, side="left")]


def compute_table(records: Records, config: CalibrationConfig) -> PValueTable:
    data = as_packed(records)
    M = data.num_records
    lam = np.asarray(config.lambda_grid)
    L, K = len(lam), len(config.risks)
    P = config.num_hypotheses
    risks = np.empty((P, K))
    pvals = np.empty((P, K))
    help_rate = np.empty(P)
    selection_help = RiskSpec(RiskKind.HELP, 0.5, _selection_help_variant(config))
    for b, theta in enumerate(config.theta_grid):
        stats = theta_stats(data, theta)
        block = slice(b * L, (b + 1) * L)
        for k, spec in enumerate(config.risks):
            r_hat = np.clip(risk_sums(data, stats, spec, lam) / M, 0.0, 1.0)
            risks[block, k] = r_hat
            pvals[block, k] = hb_pvalues(r_hat, spec.alpha, M)
        help_rate[block] = risk_sums(data, stats, selection_help, lam) / M
    return PValueTable(
        lam=np.tile(lam, len(config.theta_grid)),
        theta=np.repeat(np.asarray(config.theta_grid), L),
        empirical_risks=risks,
        p_values=pvals,
        help_rate=help_rate,
    )


# -- multiple testing ---------------------------------------------------------

def chain_starts(num_hypotheses: int, num_chains: int) -> list[int]:
    """Equally spaced start indices into the flattened grid."""
    return [(j * num_hypotheses) // num_chains for j in range(num_chains)]


def fixed_sequence_test(
    p_values: Sequence[float], delta: float, num_chains: int, starts: Optional[Sequence[int]] = None
) -> list[int]:
    """Indices rejected by fixed-sequence testing with budget ``delta / num_chains`` per chain.

    Each chain walks forward from its start and stops at the first
    hypothesis whose p-value exceeds the per-chain level.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if num_chains < 1:
        raise InvalidInputError("num_chains must be >= 1")
    level = delta / num_chains
    if starts is None:
        starts = chain_starts(len(p), num_chains)
    accepted: set[int] = set()
    above = np.flatnonzero(p > level)
    for s in starts:
        # first failure at or after s ends the chain
        pos = np.searchsorted(above, s, side="left")
        stop = int(above[pos]) if pos < len(above) else len(p)
        accepted.update(range(s, stop))
    return sorted(accepted)


def select_operating_point(table: PValueTable, valid: Sequence[int]) -> Optional[int]:
    """Lowest empirical help rate; ties go to larger theta, then larger lambda."""
    if not valid:
        return None
    return min(valid, key=lambda j: (table.help_rate[j], -table.theta[j], -table.lam[j]))


def calibrate(records: Records, config: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    data = as_packed(records)
    table = compute_table(data, config)
    valid = fixed_sequence_test(table.combined_p, config.delta, config.num_chains)
    return CalibrationResult(
        config=config,
        table=table,
        valid_indices=tuple(valid),
        selected_index=select_operating_point(table, valid),
        num_records=data.num_records,
    )


def _selection_help_variant(config: CalibrationConfig) -> HelpVariant:
    for r in config.risks:
        if r.kind is RiskKind.HELP:
            return r.help_variant
    return HelpVariant.PLAN


def ood_adjust(alpha_target: float, alpha_cov: float) -> float:
    """Level at which to calibrate a secondary risk so the overall risk, distribution shift included, stays below ``alpha_target``."""
    for name, v in (("alpha_target", alpha_target), ("alpha_cov", alpha_cov)):
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
    return max(alpha_target - alpha_cov, 0.0)


def pvalue_floor(alpha: float, m: int) -> float:
    """Smallest attainable p-value, reached when every loss is zero: ``(1 - alpha)^m``."""
    return min(1.0, (1.0 - alpha) ** m)


def min_records_for(alpha: float, level: float) -> int:
    """Smallest calibration size whose p-value floor reaches ``level``."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    return math.ceil(math.log(level) / math.log1p(-alpha))
