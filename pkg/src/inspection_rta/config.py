"""Run configuration: every physical constant, constraint setting and episode option.

Defaults are embedded here and can be overridden from a TOML file. Unknown keys are
rejected so a typo in a config file fails loudly instead of silently using a default.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

__all__ = [
    "ConfigError",
    "VehicleParams",
    "ThermalNodeParams",
    "PowerParams",
    "ConstraintSettings",
    "ConstraintsConfig",
    "EpisodeConfig",
    "LqrParams",
    "PdParams",
    "ControllerConfig",
    "SolverConfig",
    "OutputConfig",
    "RunConfig",
    "load_config",
    "dump_config",
    "CONSTRAINT_IDS",
]

CONSTRAINT_IDS = (
    "Collision",
    "Speed",
    "KIZ",
    "PSM",
    "VxLim",
    "VyLim",
    "VzLim",
    "AttEZ",
    "Temp",
    "Batt",
    "W1Lim",
    "W2Lim",
    "W3Lim",
)


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed or validated."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VehicleParams(_Strict):
    """Deputy mass properties, orbit rate and actuator limits."""

    m: float = Field(12.0, gt=0, description="deputy mass [kg]")
    n: float = Field(0.001027, gt=0, description="chief mean motion [rad/s]")
    J1: float = Field(0.0573, gt=0, description="principal inertia [kg m^2]")
    J2: float = Field(0.0573, gt=0)
    J3: float = Field(0.0573, gt=0)
    D: float = Field(4.1e-5, gt=0, description="reaction wheel spin inertia [kg m^2]")
    F_max: float = Field(1.0, gt=0, description="per-axis thrust limit [N]")
    w_dot_max: float = Field(0.017453, gt=0, description="max body angular acceleration [rad/s^2]")
    psi_dot_max: float = Field(181.3, gt=0, description="max wheel acceleration [rad/s^2]")
    tau_max: Optional[float] = Field(
        None, gt=0, description="per-axis torque limit [N m]; derived from inertia/wheel limits when unset"
    )

    @property
    def torque_limit(self) -> float:
        if self.tau_max is not None:
            return self.tau_max
        # Rounded to the published 0.001 N m; J*w_dot_max = 1.00006e-3, D*psi_dot_max = 7.43e-3.
        return round(min(self.J1 * self.w_dot_max, self.D * self.psi_dot_max), 6)


class ThermalNodeParams(_Strict):
    """Single tracked thermal node (one aluminium face of the deputy)."""

    m_n: float = Field(2.0, gt=0, description="node mass [kg]")
    A: float = Field(0.03, gt=0, description="node area [m^2]")
    c_p: float = Field(900.0, gt=0, description="specific heat [J/(kg K)]")
    alpha_abs: float = Field(0.13, ge=0, le=1)
    eps: float = Field(0.06, ge=0, le=1)
    A_f: float = Field(0.27, ge=0, le=1, description="Earth albedo factor")
    S: float = Field(1367.0, gt=0, description="solar constant [W/m^2]")
    sigma: float = Field(5.67051e-8, gt=0)
    T_E: float = Field(255.0, gt=0, description="Earth temperature [K]")
    view_factor_scale: float = Field(0.8, ge=0, le=1, description="F = scale * cos(theta_EI)")
    n_hat_body: tuple[float, float, float] = (0.0, -1.0, 0.0)


class PowerParams(_Strict):
    """Solar array and battery load.

    ``P_I`` is treated as W/m^2 so that ``P_I * I_d * A`` is a power in W.
    """

    P_I: float = Field(983.3, gt=0)
    I_d: float = Field(0.77, gt=0, le=1)
    P_out: float = Field(15.0, ge=0, description="constant bus load [W]")
    A: float = Field(0.03, gt=0, description="array area [m^2]")
    panel_normal_body: tuple[float, float, float] = (1.0, 0.0, 0.0)


class ConstraintSettings(_Strict):
    """Per-constraint strengthening coefficients, slack weight and constants.

    The strengthening function is ``alpha(h) = c1*h + c3*h**3``; both HOCBF levels share
    it. ``slack_weight = 0`` marks a hard constraint (no slack column in the QP).
    Constants that a constraint does not use are ignored.
    """

    c1: float = Field(ge=0)
    c3: float = Field(0.0, ge=0)
    slack_weight: float = Field(1e12, ge=0)
    enabled: bool = True
    # geometric / physical constants (only the relevant ones are read)
    r_d: float = 5.0
    r_c: float = 10.0
    nu0: float = 0.2
    nu1_over_n: float = 7.5
    r_max: float = 800.0
    horizon: float = 500.0
    grid_step: float = 1.0
    v_max: float = 5.0
    fov_deg: float = 60.0
    beta_deg: float = 10.0
    T_max: float = 10.0
    delta0: float = 0.05
    delta1: float = 0.01
    E_min: float = 1.0
    delta2: float = 0.05
    omega_max_deg: float = 2.0
    boresight_body: tuple[float, float, float] = (1.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _check(self) -> "ConstraintSettings":
        if self.c1 == 0 and self.c3 == 0:
            raise ValueError("strengthening coefficients c1 and c3 cannot both be zero")
        if math.radians(self.fov_deg) / 2 + math.radians(self.beta_deg) >= math.pi / 2:
            raise ValueError("fov/2 + beta must be below 90 deg")
        return self


def _default_constraints() -> dict[str, ConstraintSettings]:
    translational = dict(c1=0.05, c3=0.001)
    return {
        "Collision": ConstraintSettings(**translational, slack_weight=0.0),
        "Speed": ConstraintSettings(**translational),
        "KIZ": ConstraintSettings(**translational),
        "PSM": ConstraintSettings(**translational),
        "VxLim": ConstraintSettings(c1=1.0),
        "VyLim": ConstraintSettings(c1=1.0),
        "VzLim": ConstraintSettings(c1=1.0),
        "AttEZ": ConstraintSettings(c1=0.5),
        "Temp": ConstraintSettings(c1=0.5),
        "Batt": ConstraintSettings(c1=0.5),
        "W1Lim": ConstraintSettings(c1=0.5),
        "W2Lim": ConstraintSettings(c1=0.5),
        "W3Lim": ConstraintSettings(c1=0.5),
    }


class ConstraintsConfig(_Strict):
    """All safety constraints, keyed by constraint id.

    ``a_max`` is the braking acceleration used by the collision and keep-in-zone
    transformations; when unset it is the thrust authority minus the worst natural
    CW drift over the keep-in zone.
    """

    a_max: Optional[float] = Field(None, gt=0)
    Collision: ConstraintSettings = _default_constraints()["Collision"]
    Speed: ConstraintSettings = _default_constraints()["Speed"]
    KIZ: ConstraintSettings = _default_constraints()["KIZ"]
    PSM: ConstraintSettings = _default_constraints()["PSM"]
    VxLim: ConstraintSettings = _default_constraints()["VxLim"]
    VyLim: ConstraintSettings = _default_constraints()["VyLim"]
    VzLim: ConstraintSettings = _default_constraints()["VzLim"]
    AttEZ: ConstraintSettings = _default_constraints()["AttEZ"]
    Temp: ConstraintSettings = _default_constraints()["Temp"]
    Batt: ConstraintSettings = _default_constraints()["Batt"]
    W1Lim: ConstraintSettings = _default_constraints()["W1Lim"]
    W2Lim: ConstraintSettings = _default_constraints()["W2Lim"]
    W3Lim: ConstraintSettings = _default_constraints()["W3Lim"]

    def settings(self, cid: str) -> ConstraintSettings:
        return getattr(self, cid)

    def braking_accel(self, vehicle: VehicleParams) -> float:
        if self.a_max is not None:
            return self.a_max
        n = vehicle.n
        r_max = self.KIZ.r_max
        v_max = self.VxLim.v_max
        a = vehicle.F_max / vehicle.m - (3 * n**2 * r_max + 2 * n * v_max)
        if a <= 0:
            raise ConfigError("derived a_max is not positive; set constraints.a_max explicitly")
        return a


class EpisodeConfig(_Strict):
    """Episode timing, initial-condition ranges, termination and reward settings."""

    seed: int = 0
    rta_enabled: bool = True
    policy_period: float = Field(10.0, gt=0)
    inner_period: float = Field(1.0, gt=0)
    max_time: float = Field(12236.0, gt=0)
    crash_radius: float = Field(15.0, gt=0)
    bound_radius: float = Field(800.0, gt=0)
    success_weight: float = Field(0.95, gt=0, le=1)
    power_floor: float = Field(0.0, description="battery energy at which the episode ends [kJ]")
    r_range: tuple[float, float] = (50.0, 100.0)
    E_range: tuple[float, float] = (5.0, 7.0)
    T_range: tuple[float, float] = (3.0, 7.0)
    max_init_resamples: int = Field(10000, ge=1)
    # inspection points
    n_points: int = Field(100, ge=1)
    sphere_radius: float = Field(10.0, gt=0)
    sensor_fov_deg: float = Field(60.0, gt=0, le=360)
    points_per_cluster: int = Field(20, ge=1, description="k = ceil(N_uninspected / points_per_cluster)")
    # reward coefficients
    reward_points: float = 1.0
    reward_delta_v: float = -0.02
    reward_torque: float = -0.1
    reward_orient_scale: float = 0.0005
    reward_orient_width: float = 0.15
    reward_time: float = 0.001
    reward_time_limit: float = 3000.0
    reward_success: float = 1.0
    reward_crash: float = -1.0
    reward_dist: float = -1.0
    reward_energy: float = -1.0
    success_fft_horizon: float = Field(172800.0, gt=0, description="2 days [s]")
    success_fft_step: float = Field(60.0, gt=0)
    reward_uses_desired_control: bool = True
    # observation normalisation
    obs_norm_p: float = 800.0
    obs_norm_v: float = 5.0
    obs_norm_E: float = 10.0
    obs_norm_T: float = 50.0

    @model_validator(mode="after")
    def _check(self) -> "EpisodeConfig":
        ratio = self.policy_period / self.inner_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("policy_period must be a multiple of inner_period")
        return self

    @property
    def inner_steps(self) -> int:
        return int(round(self.policy_period / self.inner_period))


class LqrParams(_Strict):
    """LQR weights for the translational primary controller."""

    Q_pos: float = Field(1e-4, ge=0)
    Q_vel: float = Field(1.0, ge=0)
    R: float = Field(1e2, gt=0)
    target_p: tuple[float, float, float] = (0.0, 0.0, 0.0)
    target_v: tuple[float, float, float] = (0.0, 0.0, 0.0)


class PdParams(_Strict):
    """PD attitude controller gains and target.

    ``target`` is ``"sun"`` (boresight toward the Sun at scenario start) or an explicit
    scalar-last quaternion.
    """

    kp: float = Field(0.02, gt=0)
    kd: float = Field(0.2, gt=0)
    target: str | tuple[float, float, float, float] = "sun"

    @field_validator("target")
    @classmethod
    def _target(cls, v):
        if isinstance(v, str) and v != "sun":
            raise ValueError("target must be 'sun' or a quaternion [q1, q2, q3, q4]")
        return v


class ControllerConfig(_Strict):
    lqr: LqrParams = LqrParams()
    pd: PdParams = PdParams()
    check_duration: float = Field(2000.0, gt=0, description="check-filter scenario length [s]")
    min_optimal_fraction: float = Field(0.99, ge=0, le=1)


class SolverConfig(_Strict):
    """Operator-splitting QP settings."""

    eps_abs: float = Field(1e-6, gt=0)
    eps_rel: float = Field(1e-5, gt=0)
    max_iter: int = Field(4000, ge=1)
    rho: float = Field(0.1, gt=0)
    sigma: float = Field(1e-6, gt=0)
    relax: float = Field(1.6, gt=0, lt=2)
    scaling_iters: int = Field(10, ge=0)
    polish: bool = True
    warm_start: bool = True
    change_tol: float = Field(1e-9, ge=0, description="report threshold for u_act != u_des")


class OutputConfig(_Strict):
    out_dir: str = "runs"
    write_csv: bool = False


class RunConfig(_Strict):
    """Complete parameter tree for a run."""

    vehicle: VehicleParams = VehicleParams()
    thermal: ThermalNodeParams = ThermalNodeParams()
    power: PowerParams = PowerParams()
    constraints: ConstraintsConfig = ConstraintsConfig()
    episode: EpisodeConfig = EpisodeConfig()
    controller: ControllerConfig = ControllerConfig()
    solver: SolverConfig = SolverConfig()
    output: OutputConfig = OutputConfig()
    seeds: list[int] = Field(default_factory=lambda: [0])

    def with_updates(self, **sections) -> "RunConfig":
        """Return a copy with whole sections or nested fields replaced.

        ``cfg.with_updates(episode={"rta_enabled": False})`` merges into the section.
        """
        data = self.model_dump()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = _merge(data[key], value)
            else:
                data[key] = value
        return RunConfig.model_validate(data)


def _merge(base: dict, upd: dict) -> dict:
    out = dict(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_strip_none(v) for v in obj]
    return obj


def dump_config(cfg: RunConfig) -> str:
    """Serialise to TOML. Unset optional values are omitted (TOML has no null)."""
    return tomli_w.dumps(_strip_none(cfg.model_dump(mode="json")))


def load_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    """Load a config from a TOML file or string, layered over the defaults."""
    if path is None and text is None:
        return RunConfig()
    try:
        if text is None:
            text = Path(path).read_text()
        data = tomli.loads(text)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
