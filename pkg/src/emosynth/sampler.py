"""Reverse-time generation: probability-flow ODE and reverse SDE solvers.

Both integrators march a uniform grid from the horizon down to 0 with
explicit Euler steps, evaluating a guided score at the top of each step.
Sign conventions (where the 1/2 factor lands) are pinned by the stationary
fixed-point tests: when the data law equals the terminal prior, the ODE
drift vanishes identically and the SDE preserves the prior's moments.

    ODE step:  x_{t-h} = x_t - h (beta_t / 2) (inv(Sigma)(mu - x_t) - score)
    SDE step:  x_{t-h} = x_t - h beta_t ((1/2) inv(Sigma)(mu - x_t) - score)
                         + sqrt(beta_t h) z
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, NumericsError
from .guidance import guided_score, validate_intensity
from .rng import make_rng
from .schedule import NoiseSchedule, PriorField
from .score_model import ConditioningContext, ScoreField

__all__ = ["SamplerConfig", "Trajectory", "terminal_draw", "ode_step", "sde_step", "sample"]

SOLVER_ODE = "ode"
SOLVER_SDE = "sde"

# Floor on the score-evaluation time: conditional scores of near-point data
# laws stiffen as the marginal variance vanishes. The final step still lands
# exactly at t = 0 using the score from the floored time.
T_FLOOR = 1e-4


@dataclass(frozen=True)
class SamplerConfig:
    solver: str = SOLVER_ODE
    steps: int = 100
    intensity: float = 1.0
    temperature: float = 1.0
    seed: int = 0
    keep_trajectory: bool = False

    def __post_init__(self):
        if self.solver not in (SOLVER_ODE, SOLVER_SDE):
            raise InputError(f"solver must be '{SOLVER_ODE}' or '{SOLVER_SDE}', got {self.solver!r}")
        if int(self.steps) < 1:
            raise InputError(f"steps must be >= 1, got {self.steps}")
        if not self.temperature > 0:
            raise InputError(f"temperature must be positive, got {self.temperature}")
        validate_intensity(self.intensity)

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, seed=seed)


@dataclass
class Trajectory:
    """Reverse-pass diagnostic record: states at strictly decreasing times."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def append(self, t: float, x: np.ndarray):
        self.times.append(float(t))
        self.states.append(x.copy())


def terminal_draw(
    prior: PriorField, config: SamplerConfig, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``X_T = mu + temperature * sqrt(Sigma) z``."""
    z = rng.standard_normal(prior.mu.shape)
    return prior.mu + config.temperature * np.sqrt(prior.sigma_diag) * z


def _check_step(t: float, h: float):
    if not 0.0 < h <= t:
        raise InputError(f"step size {h} outside (0, t={t}]")


def ode_step(
    x: np.ndarray,
    t: float,
    h: float,
    score: np.ndarray,
    schedule: NoiseSchedule,
    prior: PriorField,
) -> np.ndarray:
    """One backward Euler step of the probability-flow ODE."""
    _check_step(t, h)
    beta = schedule.beta(t)
    drift = (prior.mu - x) / prior.sigma_diag - score
    return x - h * (0.5 * beta) * drift


def sde_step(
    x: np.ndarray,
    t: float,
    h: float,
    score: np.ndarray,
    schedule: NoiseSchedule,
    prior: PriorField,
    rng: np.random.Generator,
) -> np.ndarray:
    """One backward Euler-Maruyama step of the reverse SDE."""
    _check_step(t, h)
    beta = schedule.beta(t)
    drift = 0.5 * (prior.mu - x) / prior.sigma_diag - score
    z = rng.standard_normal(x.shape)
    return x - h * beta * drift + np.sqrt(beta * h) * z


def sample(
    score_field: ScoreField,
    prior: PriorField,
    ctx: ConditioningContext,
    config: SamplerConfig,
    schedule: NoiseSchedule | None = None,
) -> tuple[np.ndarray, Trajectory | None]:
    """Generate a state by integrating the reverse dynamics from T to 0.

    Deterministic given ``config.seed`` (bitwise for the ODE; the SDE and the
    terminal draw consume the same seeded stream). Raises ``NumericsError``
    naming the step index if the state leaves the finite range.
    """
    if schedule is None:
        schedule = NoiseSchedule()
    rng = make_rng(config.seed, 0xD1F)
    x = terminal_draw(prior, config, rng)
    n = int(config.steps)
    times = np.linspace(schedule.horizon, 0.0, n + 1)
    traj = Trajectory() if config.keep_trajectory else None
    if traj is not None:
        traj.append(times[0], x)
    for k in range(n):
        t_hi, t_lo = times[k], times[k + 1]
        h = t_hi - t_lo
        t_eval = max(t_hi, min(T_FLOOR, schedule.horizon))
        s = guided_score(score_field, x, prior.mu, t_eval, ctx, config.intensity)
        if config.solver == SOLVER_ODE:
            x = ode_step(x, t_eval, h, s, schedule, prior)
        else:
            x = sde_step(x, t_eval, h, s, schedule, prior, rng)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"sampling diverged at step {k} (t={t_hi:.6g})")
        if traj is not None:
            traj.append(t_lo, x)
    return x, traj
