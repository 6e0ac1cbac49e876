# models — where numbers go to be validated

"""
Pydantic records for the model, rewards, agent, training, supervisor and experiments.
Frozen where they describe configuration so nothing mutates a shared run setup.
Numeric working sets (polytopes, grids) are numpy dataclasses in geometry/cis_synth.
"""

from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

from src.cisrl.core.geometry import BoxSet, HPolytope


class ModelParams(BaseModel):
    """CSTR parameters. Defaults are the published table, dt in minutes (6 s)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    q: PositiveFloat = 100.0  # L/min
    V: PositiveFloat = 100.0  # L
    k0: PositiveFloat = 7.2e10  # 1/min
    E_over_R: PositiveFloat = 8750.0  # K
    dH_neg: PositiveFloat = 5.0e4  # -dH, J/mol
    rho: PositiveFloat = 1000.0  # g/L
    cp: PositiveFloat = 0.239  # J/(g K)
    UA: PositiveFloat = 5.0e4  # J/(min K)
    cAf: PositiveFloat = 1.0  # mol/L
    Tf: PositiveFloat = 350.0  # K
    dt: PositiveFloat = 0.1  # min


class State(BaseModel):
    model_config = ConfigDict(frozen=True)

    cA: float  # mol/L
    T: float  # K

    def vec(self) -> np.ndarray:
        return np.array([self.cA, self.T], dtype=float)

    @classmethod
    def from_vec(cls, x) -> "State":
        return cls(cA=float(x[0]), T=float(x[1]))


class ControlInput(BaseModel):
    model_config = ConfigDict(frozen=True)

    Tc: float  # coolant temperature, K

    def vec(self) -> np.ndarray:
        return np.array([self.Tc], dtype=float)


class Disturbance(BaseModel):
    """Additive offsets on the feed: cAf + w_cA, Tf + w_T."""
    model_config = ConfigDict(frozen=True)

    w_cA: float = 0.0
    w_T: float = 0.0

    def vec(self) -> np.ndarray:
        return np.array([self.w_cA, self.w_T], dtype=float)


RewardVariant = Literal["Invariance", "SetPoint", "Economic", "EconomicZone", "Zone"]


class RewardSpec(BaseModel):
    """
    Which r1 we hand out when the next state stays in the set. r2 is the penalty.
    Zone fields double as the EconomicZone band; x_s/p/q serve SetPoint and Zone.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: RewardVariant = "Invariance"
    r1: float = 10_000.0  # Invariance only
    r2: float = -1_000.0
    x_s: tuple[float, float] | None = None
    p: float = Field(default=2.0, ge=1.0)
    q: float = Field(default=2.0, gt=0.0)
    zone_lo: float = 348.0
    zone_hi: float = 352.0
    zone_weight: float = Field(default=300.0, ge=0.0)
    V: PositiveFloat = 100.0  # reactor volume used by the economic stage

    @model_validator(mode="after")
    def _check(self) -> "RewardSpec":
        if self.variant == "SetPoint" and self.x_s is None:
            raise ValueError("SetPoint reward needs x_s")
        if self.zone_lo > self.zone_hi:
            raise ValueError(f"zone band inverted: [{self.zone_lo}, {self.zone_hi}]")
        if self.variant == "Invariance" and self.r1 <= self.r2:
            raise ValueError(f"r1 ({self.r1}) must beat r2 ({self.r2})")
        return self


class Hyper(BaseModel):
    """PPO knobs. lr/gamma/batch from the reference study, the rest standard defaults."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: PositiveFloat = 1e-4
    gamma: float = Field(default=0.99, gt=0.0, le=1.0)
    clip: float = Field(default=0.2, gt=0.0, lt=1.0)
    gae_lambda: float = Field(default=0.95, ge=0.0, le=1.0)
    epochs_per_update: int = Field(default=10, ge=1)
    batch_episodes: int = Field(default=10, ge=1)
    std_floor: PositiveFloat = 0.05  # normalized action units
    std_init: PositiveFloat = 0.5
    value_coef: PositiveFloat = 0.5
    reward_scale: PositiveFloat = 1e-4  # keeps value targets O(1) with 1e4-sized rewards
    hidden: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def _floor(self) -> "Hyper":
        if self.std_init < self.std_floor:
            raise ValueError(f"std_init {self.std_init} below std_floor {self.std_floor}")
        return self


class TrainConfig(BaseModel):
    """One offline run. set is the CIS polytope, or the X box for the no-CIS ablation."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    episodes: int = Field(default=2_000, ge=0)
    steps_per_episode: int = Field(default=200, ge=1)
    batch_episodes: int = Field(default=10, ge=1)
    seed: int = 0
    set: HPolytope
    set_box: BoxSet  # bounding box of set, for rejection sampling
    reward: RewardSpec = RewardSpec()
    hyper: Hyper = Hyper()
    robust: bool = False
    W: BoxSet | None = None
    # offline check without the worst-case solve, see the robust training note in DESIGN.md
    nominal_offline_check: bool = False

    @model_validator(mode="after")
    def _batches(self) -> "TrainConfig":
        if self.episodes % self.batch_episodes:
            raise ValueError(f"episodes ({self.episodes}) must be a multiple of batch_episodes ({self.batch_episodes})")
        if self.robust and self.W is None:
            raise ValueError("robust training needs W")
        return self


class SupervisorConfig(BaseModel):
    """max_itr=None means retrain until the agent proposes something safe. Default 20 then backup."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    max_itr: int | None = Field(default=20, ge=0)
    retrain_samples_per_update: int = Field(default=10, ge=1)
    retrain_lr: PositiveFloat = 1e-3  # fresh Adam per retraining round
    retrain_epochs: int = Field(default=20, ge=1)
    graded_penalty: bool = True  # unsafe retrain samples ranked by how far out they land
    robust: bool = False  # worst-case check over W instead of the nominal prediction
    W: BoxSet | None = None
    reward: RewardSpec = RewardSpec()
    hyper: Hyper = Hyper()
    # M of the big-M worst-case program. the active-row solve never needs a value
    big_m: float = 1e6

    @model_validator(mode="after")
    def _w(self) -> "SupervisorConfig":
        if self.robust and self.W is None:
            raise ValueError("robust supervision needs W")
        return self


class LearningCurve(BaseModel):
    """Raw score per episode; running average over the trailing window."""
    scores: list[float] = Field(default_factory=list)
    window: int = 100

    @property
    def running_avg(self) -> list[float]:
        out: list[float] = []
        total = 0.0
        for i, s in enumerate(self.scores):
            total += s
            if i >= self.window:
                total -= self.scores[i - self.window]
            out.append(total / min(i + 1, self.window))
        return out

    def __len__(self) -> int:
        return len(self.scores)


class SteadyStateOptimum(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_s: State
    u_s: ControlInput
    l_e: float
    residual: float


class RunSummary(BaseModel):
    """What every subcommand hands back. Unused fields stay None."""
    name: str
    failure_rate: float | None = Field(default=None, ge=0.0, le=1.0)
    mean_score: float | None = None
    episodes: int = 0
    violations: int | None = None
    fallback_count: int | None = None
    updates_total: int | None = None
    hard_faults: int | None = None
    le_mean: float | None = None
    le_std: float | None = None
    zone_penalty_mean: float | None = None
    timings_us: dict[str, float] = Field(default_factory=dict)
    extra: dict[str, float | str] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    """The key=value experiment file. Unknown keys are an error, not a shrug."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    model_file: Path | None = None
    set_file: Path | None = None
    grid_file: Path | None = None
    weights_file: Path | None = None
    out_dir: Path = Path("runs")
    seed: int = 0
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    episodes: int = Field(default=2_000, ge=0)
    steps: int = Field(default=200, ge=1)
    batch_episodes: int = Field(default=10, ge=1)
    test_episodes: int = Field(default=1_000, ge=1)
    online_episodes: int = Field(default=500, ge=1)
    econ_episodes: int = Field(default=100, ge=1)
    reward: RewardVariant = "Invariance"
    r1: float = 10_000.0
    r2: float = -1_000.0
    zone_r2: float = -3_000.0  # EconomicZone penalty, below the worst zone stage over X
    robust: bool = False
    mode: Literal["deterministic", "robust", "naive"] = "deterministic"
    grid_resolution: int = Field(default=200, ge=8)
    u_points: int = Field(default=61, ge=2)
    verify_samples: int = Field(default=10_000, ge=1)
    max_itr: int = Field(default=20, ge=0)
    lr: PositiveFloat = 1e-4
    workers: int | None = Field(default=None, ge=1)
    job_timeout: PositiveFloat | None = None  # seconds per pooled seed/variant run

    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seeds(cls, v):
        if isinstance(v, str):
            return [int(s) for s in v.split(",") if s.strip()]
        return v
