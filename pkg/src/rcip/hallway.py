"""Seedable Hallway Navigation scenario generator.

Geometry: lateral coordinate ``x`` spans the arena width, longitudinal
coordinate ``y`` its length.  A wall band across the middle of the arena is
pierced by equally spaced hallways.  The human car starts on the low-``y``
side, picks a hallway uniformly at random (held for the whole episode),
steers to its entrance with proportional heading control and then drives
straight through.  The robot starts on the high-``y`` side and heads for the
hallway chosen by its intent-conditioned planner.

Every ``steps_per_decision`` environment steps the synthetic predictor
emits hallway logits from the human's state and the planner's
intent->action map is recorded; together with the true intent these form
one decision step of a :class:`~rcip.types.ScenarioRecord`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .types import InvalidInputError, ScenarioRecord, StepContext

PRESETS: dict[str, tuple[float, float]] = {
    "weak": (0.5, 2.0),
    "medium": (1.0, 1.0),
    "converged": (8.0, 0.0),
}

# Keeps start poses away from walls and the wall band so steering settles
# before the first decision.
START_MARGIN_M = 0.5
APPROACH_CLEARANCE_M = 1.5


@dataclass(frozen=True)
class WorldConfig:
    arena_length_m: float = 16.0
    arena_width_m: float = 9.0
    num_hallways: int = 5
    hallway_width_m: float = 1.0
    wall_thickness_m: float = 2.0
    env_steps: int = 200
    steps_per_decision: int = 20
    predictor_sharpness: float = 1.0
    predictor_noise_sd: float = 1.0
    seed: int = 0
    logit_scale: float = 1.0
    speed_m: float = 0.1
    heading_gain: float = 0.3

    def __post_init__(self) -> None:
        if self.env_steps < 1 or self.steps_per_decision < 1:
            raise InvalidInputError("env_steps and steps_per_decision must be positive")
        if self.env_steps % self.steps_per_decision:
            raise InvalidInputError("env_steps must be divisible by steps_per_decision")
        if self.num_hallways < 2:
            raise InvalidInputError("at least two hallways are required")
        if self.num_hallways * self.hallway_width_m > self.arena_width_m:
            raise InvalidInputError("hallways do not fit in the arena width")
        if not self.logit_scale > 0:
            raise InvalidInputError("logit_scale must be positive")
        if self.predictor_sharpness < 0 or self.predictor_noise_sd < 0:
            raise InvalidInputError("predictor sharpness and noise must be non-negative")
        if not 0 < self.wall_thickness_m < self.arena_length_m - 4 * APPROACH_CLEARANCE_M:
            raise InvalidInputError("wall band leaves no room for the start regions")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    @classmethod
    def preset(cls, name: str, **kw) -> "WorldConfig":
        try:
            beta, sigma = PRESETS[name]
        except KeyError:
            raise InvalidInputError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
        return cls(predictor_sharpness=beta, predictor_noise_sd=sigma, **kw)

    @property
    def decisions(self) -> int:
        return self.env_steps // self.steps_per_decision

    @property
    def hallway_x(self) -> np.ndarray:
        pitch = self.arena_width_m / self.num_hallways
        return (np.arange(self.num_hallways) + 0.5) * pitch

    @property
    def wall_near(self) -> float:
        """``y`` of the hallway entrances on the human's side."""
        return 0.5 * (self.arena_length_m - self.wall_thickness_m)

    @property
    def wall_far(self) -> float:
        return 0.5 * (self.arena_length_m + self.wall_thickness_m)


@dataclass
class AgentState:
    x: float
    y: float
    heading: float
    phase: int = 0  # 0: approaching the hallway, 1: in or past it

    def copy(self) -> "AgentState":
        return AgentState(self.x, self.y, self.heading, self.phase)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class EpisodeLog:
    record: ScenarioRecord
    human_intents: list[int]
    # (human, robot) before the first env step and after each one
    trajectories: list[tuple[AgentState, AgentState]] = field(default_factory=list)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _advance(state: AgentState, entry: tuple[float, float], direction: float,
             end_y: float, cfg: WorldConfig) -> None:
    """One env step of the scripted driver: steer to ``entry``, then drive straight along ``direction``."""
    if state.phase == 0:
        ex, ey = entry
        dist = math.hypot(ex - state.x, ey - state.y)
        if dist <= cfg.speed_m:
            state.x, state.y, state.heading, state.phase = ex, ey, direction, 1
            return
        bearing = math.atan2(ey - state.y, ex - state.x)
        state.heading = _wrap(state.heading + cfg.heading_gain * _wrap(bearing - state.heading))
        nx = state.x + cfg.speed_m * math.cos(state.heading)
        ny = state.y + cfg.speed_m * math.sin(state.heading)
        lo, hi = (0.0, ey) if direction > 0 else (ey, cfg.arena_length_m)
        state.x = min(max(nx, 0.0), cfg.arena_width_m)
        state.y = min(max(ny, lo), hi)
        return
    state.heading = direction
    if (end_y - state.y) * math.sin(direction) > 0:
        step = min(cfg.speed_m, abs(end_y - state.y))
        state.y += step * math.sin(direction)


def optimal_action(robot_state: AgentState, human_intent: int, config: WorldConfig) -> int:
    """Nearest hallway to the robot's lateral position that the human is not using; lowest index on ties."""
    if not 0 <= human_intent < config.num_hallways:
        raise InvalidInputError(f"intent {human_intent} outside [0, {config.num_hallways})")
    xs = config.hallway_x
    best, best_d = -1, math.inf
    for j in range(config.num_hallways):
        if j == human_intent:
            continue
        d = abs(robot_state.x - xs[j])
        if d < best_d:
            best, best_d = j, d
    return best


def heading_intercept(human_state: AgentState, config: WorldConfig) -> float:
    """Lateral position where the human's heading line meets the entrance line.

    Once the human is in or past the hallway (or heading away from the
    wall) its current lateral position is used.
    """
    s = math.sin(human_state.heading)
    if human_state.phase == 1 or s <= 0.05:
        x = human_state.x
    else:
        x = human_state.x + (config.wall_near - human_state.y) * math.cos(human_state.heading) / s
    return min(max(x, 0.0), config.arena_width_m)


def synthetic_predictor_logits(human_state: AgentState, config: WorldConfig,
                               rng: np.random.Generator) -> list[float]:
    """Hallway logits ``-beta * d_j + eps_j`` with ``d_j`` the distance from the heading intercept to hallway j.

    ``config.logit_scale`` multiplies the result; values other than 1 model
    a predictor whose temperature is misspecified.
    """
    d = np.abs(heading_intercept(human_state, config) - config.hallway_x)
    noise = rng.normal(0.0, 1.0, size=config.num_hallways) * config.predictor_noise_sd
    return (config.logit_scale * (-config.predictor_sharpness * d + noise)).tolist()


def episode_rng(config: WorldConfig, episode_index: int) -> np.random.Generator:
    """Independent stream per (seed, episode index), independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence([config.seed, episode_index]))


def sample_scenario(config: WorldConfig, episode_index: int, keep_trajectory: bool = False) -> EpisodeLog:
    if episode_index < 0:
        raise InvalidInputError("episode_index must be non-negative")
    rng = episode_rng(config, episode_index)
    W, L = config.arena_width_m, config.arena_length_m
    xs = config.hallway_x
    intent = int(rng.integers(config.num_hallways))
    human = AgentState(
        float(rng.uniform(START_MARGIN_M, W - START_MARGIN_M)),
        float(rng.uniform(START_MARGIN_M, config.wall_near - APPROACH_CLEARANCE_M)),
        float(rng.uniform(-math.pi, math.pi)),
    )
    robot = AgentState(
        float(rng.uniform(START_MARGIN_M, W - START_MARGIN_M)),
        float(rng.uniform(config.wall_far + APPROACH_CLEARANCE_M, L - START_MARGIN_M)),
        float(rng.uniform(-math.pi, math.pi)),
    )
    # Before its first decision the robot heads for its nearest hallway.
    robot_target = int(np.argmin(np.abs(robot.x - xs)))

    steps, traj = [], []
    if keep_trajectory:
        traj.append((human.copy(), robot.copy()))
    for t in range(1, config.env_steps + 1):
        _advance(human, (xs[intent], config.wall_near), math.pi / 2,
                 L - START_MARGIN_M, config)
        _advance(robot, (xs[robot_target], config.wall_far), -math.pi / 2,
                 START_MARGIN_M, config)
        if keep_trajectory:
            traj.append((human.copy(), robot.copy()))
        if t % config.steps_per_decision == 0:
            logits = synthetic_predictor_logits(human, config, rng)
            amap = [optimal_action(robot, z, config) for z in range(config.num_hallways)]
            steps.append(StepContext(tuple(logits), tuple(amap), intent))
            if robot.phase == 0:
                robot_target = amap[intent]
    record = ScenarioRecord(f"hallway-s{config.seed}-e{episode_index:06d}", tuple(steps))
    return EpisodeLog(record, [intent] * len(steps), traj)


def generate_dataset(config: WorldConfig, count: int, start_index: int = 0) -> list[ScenarioRecord]:
    """``count`` independent episodes with indices ``start_index, start_index + 1, ...``."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    return [sample_scenario(config, start_index + i).record for i in range(count)]
