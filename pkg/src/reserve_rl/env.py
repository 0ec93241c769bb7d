"""Sequential reserve-setting environment on a loss development triangle.

Each episode replays one accident year: losses start at the year's
first-lag incurred value and develop stochastically under chain-ladder
factors scaled by a macroeconomic shock, while the agent nudges its
carried reserve up or down by a bounded percentage each period.  The
reward penalizes shortfall below realized losses, the conditional tail
of recent shortfalls, capital locked up beyond losses, and breaches of
a volatility-indexed solvency floor.

Step order (fixed; tests rely on it): apply action -> develop losses ->
volatility proxy -> shortfall -> push to buffer -> adaptive alpha ->
tail estimate -> floor check on the new reserve -> violation memory ->
reward.  All reward components therefore describe the post-transition
position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ActionOutOfGrid, ConfigMismatch, EpisodeFinished
from .regimes import (
    DEFAULT_REGIME_TABLE,
    CurriculumSchedule,
    RegimeSpec,
    ShockMode,
    Stochastic,
    effective_params,
    shock_for_step,
)
from .risk import ShortfallBuffer, adaptive_alpha, empirical_cvar
from .triangles import DevelopmentFactors, LossTriangle

#: Discrete reserve adjustments available each period (+/- 10% at most).
ACTION_GRID: tuple[float, ...] = (-0.10, -0.066, -0.033, 0.0, 0.033, 0.066, 0.10)

#: Index of the "hold" action (adjustment 0.0).
HOLD_ACTION = ACTION_GRID.index(0.0)

#: (base, slope) of the solvency floor base + slope * V.
DEFAULT_FLOOR = (0.4, 0.2)
STRICT_FLOOR = (0.5, 0.3)

#: Trace CSV column layout (external interface; short physical names).
TRACE_HEADER = "episode,t,R,L,V,K,nu,M,level,action,reward,shortfall,cvar,violated"


@dataclass(frozen=True)
class RewardWeights:
    """Penalty weights on the four reward components."""

    shortfall: float = 5.0
    cvar: float = 8.0
    inefficiency: float = 1.0
    floor: float = 10.0

    def __post_init__(self) -> None:
        for name in ("shortfall", "cvar", "inefficiency", "floor"):
            if getattr(self, name) < 0.0:
                raise ConfigMismatch(f"reward weight {name} must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    """Environment knobs; defaults reproduce the reference setup.

    Args:
        horizon: Episode length in periods; None means the triangle's
            development depth.
        weights: Reward penalty weights.
        vol_window: Trailing growth observations feeding the volatility
            proxy.
        vol_scale: Growth stddev mapped to volatility 1.0.
        noise_gain: Multiplier on the regime stddev for development
            noise; 0 gives a deterministic environment.
        floor_base / floor_slope: Solvency floor base + slope * V.
        buffer_capacity / warmup_min: Shortfall buffer sizing.
        alpha_override: Pin the tail level instead of adapting it to
            volatility (sensitivity studies).
        shock_mode: Default shock process for episodes.
        seed: Seed for the environment's own generator when no external
            generator is supplied.
        regime_table: Custom severity table; None means the default.
    """

    horizon: int | None = None
    weights: RewardWeights = field(default_factory=RewardWeights)
    vol_window: int = 4
    vol_scale: float = 0.5
    noise_gain: float = 1.0
    floor_base: float = DEFAULT_FLOOR[0]
    floor_slope: float = DEFAULT_FLOOR[1]
    buffer_capacity: int = 1024
    warmup_min: int = 20
    alpha_override: float | None = None
    shock_mode: ShockMode = field(default_factory=lambda: Stochastic(0))
    seed: int = 0
    regime_table: Mapping[int, RegimeSpec] | None = None

    def __post_init__(self) -> None:
        if self.horizon is not None and self.horizon < 2:
            raise ConfigMismatch(f"horizon must be >= 2, got {self.horizon}")
        if self.vol_window < 2:
            raise ConfigMismatch(f"vol_window must be >= 2, got {self.vol_window}")
        if self.vol_scale <= 0.0:
            raise ConfigMismatch(f"vol_scale must be > 0, got {self.vol_scale}")
        if self.noise_gain < 0.0:
            raise ConfigMismatch(f"noise_gain must be >= 0, got {self.noise_gain}")
        if self.floor_base < 0.0 or self.floor_slope < 0.0:
            raise ConfigMismatch("floor base and slope must be >= 0")
        if self.alpha_override is not None and not 0.0 < self.alpha_override < 1.0:
            raise ConfigMismatch(f"alpha_override must be in (0, 1), got {self.alpha_override}")


@dataclass(frozen=True)
class EnvState:
    """Observable state at decision time t."""

    reserve: float           # carried reserve R
    loss: float              # cumulative incurred losses L
    volatility: float        # trailing growth volatility proxy V in [0, 1]
    adequacy: float          # capital adequacy proxy K = 1 - |R - L|
    violation_memory: float  # EMA of solvency-floor breaches
    shock: float             # macro shock M in force for the next transition
    level: int               # regime severity level
    t: int                   # step index, 0-based


@dataclass(frozen=True)
class RewardComponents:
    """Post-transition quantities entering the reward."""

    shortfall: float
    cvar: float
    inefficiency: float
    violated: bool
    floor: float
    alpha: float


@dataclass(frozen=True)
class StepOutcome:
    state: EnvState
    reward: float
    components: RewardComponents
    done: bool
    shock_applied: float
    action_value: float


@dataclass(frozen=True)
class EpisodeInfo:
    """Identity of the accident year an episode replays."""

    accident_year: int
    premium: float
    initial_loss: float


# --- pure transition pieces (unit-testable in isolation) ---------------------

def apply_action(reserve: float, adjustment: float) -> float:
    """New reserve after a proportional adjustment, floored at zero."""
    return max(0.0, reserve * (1.0 + adjustment))


def develop_losses(
    loss: float,
    factor: float,
    shock: float,
    noise_var: float,
    noise_gain: float,
    rng: np.random.Generator,
) -> float:
    """One period of loss development with shock-scaled systematic growth.

    ``L' = max(0, L * (1 + (factor - 1) * shock + eps))`` with
    ``eps ~ Normal(0, (noise_gain * sqrt(noise_var))^2)``.
    """
    eps = float(rng.normal(0.0, noise_gain * math.sqrt(noise_var)))
    return max(0.0, loss * (1.0 + (factor - 1.0) * shock + eps))


def volatility_proxy(growths: Sequence[float], window: int, vol_scale: float) -> float:
    """Trailing population stddev of realized growth, squashed to [0, 1].

    Fewer than two observations give 0 (no dispersion measurable yet).
    """
    recent = np.asarray(growths[-window:], dtype=float)
    if recent.size < 2:
        return 0.0
    return min(1.0, float(recent.std()) / vol_scale)


def solvency_floor(volatility: float, base: float, slope: float) -> float:
    """Regulatory minimum reserve: base + slope * V."""
    return base + slope * volatility


def update_violation_memory(memory: float, violated: bool) -> float:
    """EMA of breach indicators: 0.95 * memory + 0.05 * indicator."""
    return 0.95 * memory + 0.05 * (1.0 if violated else 0.0)


def compute_reward(weights: RewardWeights, components: RewardComponents) -> float:
    """Negative weighted sum of the four penalty components."""
    return -(
        weights.shortfall * components.shortfall
        + weights.cvar * components.cvar
        + weights.inefficiency * components.inefficiency
        + weights.floor * (1.0 if components.violated else 0.0)
    )


class ReserveEnv:
    """Finite-horizon reserving environment over one triangle.

    The shortfall buffer persists across episodes (recent operating
    history); call :meth:`clear_buffer` at curriculum level boundaries.
    The random stream is consumed identically every step regardless of
    the action taken, so runs with a shared seed see identical loss and
    shock paths under any policy (common random numbers).
    """

    def __init__(
        self,
        triangle: LossTriangle,
        factors: DevelopmentFactors,
        config: EnvConfig,
        rng: np.random.Generator | None = None,
    ) -> None:
        # The triangle only seeds episodes (lag-1 starting losses); the
        # horizon may exceed its observed depth as long as the factors
        # cover every development step.
        horizon = config.horizon if config.horizon is not None else triangle.n_dev_lags
        if horizon < 2:
            raise ConfigMismatch(f"horizon must be >= 2, got {horizon}")
        if len(factors) < horizon - 1:
            raise ConfigMismatch(
                f"need at least {horizon - 1} development factors, got {len(factors)}"
            )
        self.triangle = triangle
        self.factors = factors
        self.config = config
        self.horizon = horizon
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.buffer = ShortfallBuffer(config.buffer_capacity, config.warmup_min)
        self.state: EnvState | None = None
        self.episode_info: EpisodeInfo | None = None
        self._growths: list[float] = []
        self._shock_mu = 0.0
        self._shock_var = 0.0
        self._mode: ShockMode = config.shock_mode
        self._done = True

    def clear_buffer(self) -> None:
        self.buffer.clear()

    def reset(
        self,
        episode_progress: float = 1.0,
        schedule: CurriculumSchedule | None = None,
        shock_mode: ShockMode | None = None,
    ) -> EnvState:
        """Start a new episode on a freshly sampled accident year.

        Args:
            episode_progress: Curriculum ramp progress in [0, 1]; 1.0
                (the default) uses the regime's exact parameters.
            schedule: Curriculum schedule supplying the ramp
                predecessor; only consulted when progress < 1.
            shock_mode: Override the configured shock process for this
                episode onward (used by the training loop when walking
                curriculum levels).
        """
        if shock_mode is not None:
            self._mode = shock_mode
        schedule = schedule if schedule is not None else CurriculumSchedule()
        table = self.config.regime_table or DEFAULT_REGIME_TABLE
        self._shock_mu, self._shock_var = effective_params(
            self._mode, episode_progress, schedule, table
        )
        self._ramp_progress = episode_progress
        self._schedule = schedule

        year = self.triangle.years[int(self.rng.integers(self.triangle.n_accident_years))]
        initial_loss = self.triangle.value(year, 1)
        self.episode_info = EpisodeInfo(
            accident_year=year,
            premium=self.triangle.premium(year),
            initial_loss=initial_loss,
        )
        first_shock = shock_for_step(self._mode, episode_progress, schedule, self.rng, table)
        self._growths = []
        self._done = False
        self.state = EnvState(
            reserve=initial_loss,
            loss=initial_loss,
            volatility=0.0,
            adequacy=1.0,
            violation_memory=0.0,
            shock=first_shock,
            level=self._mode.level if isinstance(self._mode, Stochastic) else 0,
            t=0,
        )
        return self.state

    def step(self, action_index: int) -> StepOutcome:
        """Advance one period under the chosen reserve adjustment."""
        if self._done or self.state is None:
            raise EpisodeFinished("reset() must be called before stepping")
        if not isinstance(action_index, (int, np.integer)) or isinstance(action_index, bool):
            raise ActionOutOfGrid(f"action index must be an integer, got {action_index!r}")
        if not 0 <= action_index < len(ACTION_GRID):
            raise ActionOutOfGrid(
                f"action index {action_index} outside grid of size {len(ACTION_GRID)}"
            )
        state = self.state
        adjustment = ACTION_GRID[action_index]
        cfg = self.config
        table = cfg.regime_table or DEFAULT_REGIME_TABLE

        new_reserve = apply_action(state.reserve, adjustment)
        factor = self.factors.factor_for_step(state.t)
        new_loss = develop_losses(
            state.loss, factor, state.shock, self._shock_var, cfg.noise_gain, self.rng
        )
        growth = new_loss / state.loss - 1.0 if state.loss > 0.0 else 0.0
        self._growths.append(growth)
        new_vol = volatility_proxy(self._growths, cfg.vol_window, cfg.vol_scale)

        shortfall = max(0.0, new_loss - new_reserve)
        self.buffer.push(shortfall)
        alpha = cfg.alpha_override if cfg.alpha_override is not None else adaptive_alpha(new_vol)
        estimate = empirical_cvar(self.buffer, alpha)
        floor = solvency_floor(new_vol, cfg.floor_base, cfg.floor_slope)
        violated = new_reserve < floor
        new_memory = update_violation_memory(state.violation_memory, violated)
        inefficiency = abs(new_reserve - new_loss)

        components = RewardComponents(
            shortfall=shortfall,
            cvar=estimate.cvar,
            inefficiency=inefficiency,
            violated=violated,
            floor=floor,
            alpha=alpha,
        )
        reward = compute_reward(cfg.weights, components)

        # Draw the next shock unconditionally so the stream advances the
        # same way every step (keeps common-random-number runs aligned).
        next_shock = shock_for_step(
            self._mode, self._ramp_progress, self._schedule, self.rng, table
        )

        next_t = state.t + 1
        done = next_t == self.horizon
        new_state = EnvState(
            reserve=new_reserve,
            loss=new_loss,
            volatility=new_vol,
            adequacy=1.0 - inefficiency,
            violation_memory=new_memory,
            shock=next_shock,
            level=state.level,
            t=next_t,
        )
        self.state = new_state
        self._done = done
        return StepOutcome(
            state=new_state,
            reward=reward,
            components=components,
            done=done,
            shock_applied=state.shock,
            action_value=adjustment,
        )


# --- per-step traces ----------------------------------------------------------

_TRACE_COLUMNS = (
    "episode", "t", "reserve", "loss", "volatility", "adequacy",
    "violation_memory", "shock", "level", "action", "reward",
    "shortfall", "cvar", "violated",
)


@dataclass
class Trace:
    """Columnar record of environment steps (post-transition snapshots).

    Column ``shock`` is the multiplier that drove the step; all other
    state columns describe the position after the step, i.e. exactly
    the quantities that entered that step's reward.
    """

    episode: np.ndarray
    t: np.ndarray
    reserve: np.ndarray
    loss: np.ndarray
    volatility: np.ndarray
    adequacy: np.ndarray
    violation_memory: np.ndarray
    shock: np.ndarray
    level: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    shortfall: np.ndarray
    cvar: np.ndarray
    violated: np.ndarray

    @property
    def n_steps(self) -> int:
        return int(self.t.size)

    @classmethod
    def concat(cls, traces: Sequence["Trace"]) -> "Trace":
        if not traces:
            raise ValueError("cannot concatenate zero traces")
        return cls(**{
            name: np.concatenate([getattr(tr, name) for tr in traces])
            for name in _TRACE_COLUMNS
        })

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            handle.write(TRACE_HEADER + "\n")
            for i in range(self.n_steps):
                # float() unwraps numpy scalars so repr round-trips as a
                # plain decimal instead of "np.float64(...)"
                handle.write(
                    f"{int(self.episode[i])},{int(self.t[i])},{float(self.reserve[i])!r},"
                    f"{float(self.loss[i])!r},{float(self.volatility[i])!r},"
                    f"{float(self.adequacy[i])!r},{float(self.violation_memory[i])!r},"
                    f"{float(self.shock[i])!r},{int(self.level[i])},"
                    f"{float(self.action[i])!r},{float(self.reward[i])!r},"
                    f"{float(self.shortfall[i])!r},{float(self.cvar[i])!r},"
                    f"{int(self.violated[i])}\n"
                )


class TraceRecorder:
    """Accumulates step outcomes into a columnar :class:`Trace`."""

    def __init__(self) -> None:
        self._rows: dict[str, list] = {name: [] for name in _TRACE_COLUMNS}

    def record(self, episode: int, step_index: int, outcome: StepOutcome) -> None:
        state = outcome.state
        rows = self._rows
        rows["episode"].append(episode)
        rows["t"].append(step_index)
        rows["reserve"].append(state.reserve)
        rows["loss"].append(state.loss)
        rows["volatility"].append(state.volatility)
        rows["adequacy"].append(state.adequacy)
        rows["violation_memory"].append(state.violation_memory)
        rows["shock"].append(outcome.shock_applied)
        rows["level"].append(state.level)
        rows["action"].append(outcome.action_value)
        rows["reward"].append(outcome.reward)
        rows["shortfall"].append(outcome.components.shortfall)
        rows["cvar"].append(outcome.components.cvar)
        rows["violated"].append(1.0 if outcome.components.violated else 0.0)

    def build(self) -> Trace:
        arrays = {}
        for name, values in self._rows.items():
            dtype = int if name in ("episode", "t", "level") else float
            arrays[name] = np.asarray(values, dtype=dtype)
        return Trace(**arrays)
