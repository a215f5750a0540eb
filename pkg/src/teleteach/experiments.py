"""Reproducible experiment drivers.

``run_sensitivity`` sweeps one learner hyperparameter on a 1-D toy
sinusoid (the other five dimensions held at zero) and reports weight
convergence and steady-state reproduction error.  ``run_scenario``
executes scripted tele-teaching timelines through the full simulation and
summarizes learning/autonomy transitions and autonomous tracking quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dmp as dmp_mod
from .dmp import GoalEstimator, PdmpConfig, make_state, rls_update, step, target_forcing
from .geometry import (
    IDENTITY,
    Pose,
    geodesic_distance,
    quat_from_rotation_vector,
    quat_mul,
)
from .sim import World, human_arm_wrench

TWO_PI = 2.0 * math.pi
TOY_OMEGA = 2.0 * TWO_PI * 0.3


@dataclass(frozen=True)
class SensitivityConfig:
    """Toy-signal sweep: one hyperparameter varies, everything else fixed."""

    param: str = "h"  # "h" or "lambda_fg"
    values: tuple[float, ...] = (1.0, 3.0, 8.0, 31.0, 100.0)
    offset: float = 0.45
    amplitude: float = 0.05
    angular_freq: float = TOY_OMEGA
    duration_s: float = 40.0
    n_basis: int = 30
    fixed_h: float = 31.0
    fixed_lambda_fg: float = 0.9995
    mu_ramp: tuple[float, float] = (28.0, 30.0)
    weight_window: tuple[float, float] = (20.0, 28.0)
    error_window: tuple[float, float] = (30.0, 40.0)
    fs_hz: float = 500.0

    def __post_init__(self):
        if self.param not in ("h", "lambda_fg"):
            raise ValueError("param must be 'h' or 'lambda_fg'")
        if not self.values:
            raise ValueError("values must be non-empty")
        for window in (self.mu_ramp, self.weight_window, self.error_window):
            if not (0.0 <= window[0] < window[1] <= self.duration_s):
                raise ValueError("windows must lie within the run duration")
        if self.amplitude < 0 or self.fs_hz <= 0:
            raise ValueError("amplitude and sample rate must be positive")


def _mu_ramp(t: float, ramp: tuple[float, float]) -> float:
    t0, t1 = ramp
    if t < t0:
        return 0.0
    if t >= t1:
        return 1.0
    return (t - t0) / (t1 - t0)


def _sensitivity_row(cfg: SensitivityConfig, value: float) -> dict:
    if cfg.param == "h":
        learner_cfg = PdmpConfig(n_basis=cfg.n_basis, h=value, lambda_fg=cfg.fixed_lambda_fg)
    else:
        learner_cfg = PdmpConfig(n_basis=cfg.n_basis, h=cfg.fixed_h, lambda_fg=value)
    omega = cfg.angular_freq
    period = TWO_PI / omega
    dt = 1.0 / cfg.fs_hz
    start = Pose(np.array([cfg.offset, 0.0, 0.0]), IDENTITY)
    state = make_state(learner_cfg, start, omega)
    goal_est = GoalEstimator()

    weight_samples = []
    error_samples = []
    a, w = cfg.amplitude, omega
    try:
        for k in range(int(cfg.duration_s * cfg.fs_hz)):
            t = k * dt
            mu = _mu_ramp(t, cfg.mu_ramp)
            x_d = Pose(np.array([cfg.offset + a * math.sin(w * t), 0.0, 0.0]), IDENTITY)
            xd_d = np.zeros(6)
            xd_d[0] = a * w * math.cos(w * t)
            xdd_d = np.zeros(6)
            xdd_d[0] = -a * w * w * math.sin(w * t)
            if mu < 1.0:
                goal_est.update(t, x_d, period)
                state.g_z = goal_est.goal()
            gamma_d = target_forcing(x_d, xd_d, xdd_d, state.g_z, omega, learner_cfg)
            rls_update(state, gamma_d, mu, learner_cfg)
            if cfg.weight_window[0] <= t <= cfg.weight_window[1]:
                weight_samples.append(state.W[0].copy())
            if cfg.error_window[0] <= t <= cfg.error_window[1]:
                error_samples.append(state.x_ref.p[0] - x_d.p[0])
            step(state, dt, learner_cfg)
            if not np.isfinite(state.x_ref.p[0]) or abs(state.x_ref.p[0]) > 1e3:
                raise FloatingPointError("learner state diverged")
    except FloatingPointError:
        return {"param": cfg.param, "value": value, "weight_std": math.nan,
                "rms_error_mm": math.nan, "diverged": True}

    weights = np.asarray(weight_samples)
    weight_std = float(weights.std(axis=0, ddof=0).mean())
    rms_mm = 1000.0 * float(np.sqrt(np.mean(np.square(error_samples))))
    return {"param": cfg.param, "value": value, "weight_std": weight_std,
            "rms_error_mm": rms_mm, "diverged": False}


def run_sensitivity(cfg: SensitivityConfig) -> list[dict]:
    """One table row per sweep value; deterministic."""
    return [_sensitivity_row(cfg, v) for v in cfg.values]


@dataclass(frozen=True)
class SkillScript:
    """Analytic periodic demonstration in the style of the R1..R5 drills.

    Translation: per-axis amplitude * sin(2*pi*f*mult*t + phase) around the
    base point (frequency multipliers > 1 produce Lissajous/figure-eight
    paths).  Rotation: a rotation vector with per-axis sinusoidal
    components applied on top of the base orientation.
    """

    skill_id: str = "custom"
    base_p: tuple[float, float, float] = (0.4, 0.0, 0.3)
    base_q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    trans_amp: tuple[float, float, float] = (0.0, 0.0, 0.0)
    trans_phase: tuple[float, float, float] = (0.0, 0.0, 0.0)
    trans_freq_mult: tuple[int, int, int] = (1, 1, 1)
    rot_amp: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rot_phase: tuple[float, float, float] = (0.0, 0.0, 0.0)
    freq_hz: float = 0.3
    t_start: float = 0.0
    t_stop: float = math.inf

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise ValueError("freq_hz must be positive")
        if max(self.trans_amp) > 0.5 or max(self.rot_amp) > 1.5:
            raise ValueError("script amplitudes exceed the workspace bounds")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_stop

    @property
    def period_s(self) -> float:
        return 1.0 / self.freq_hz


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _so3_right_jacobian(r: np.ndarray) -> np.ndarray:
    """Maps rotation-vector rate to body angular velocity for R0*Exp(r(t))."""
    theta = float(np.linalg.norm(r))
    rx = _skew(r)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * rx + (rx @ rx) / 6.0
    return (
        np.eye(3)
        - ((1.0 - math.cos(theta)) / theta**2) * rx
        + ((theta - math.sin(theta)) / theta**3) * (rx @ rx)
    )


def skill_trajectory(script: SkillScript, t: float):
    """Pose and twist [v, omega] of the scripted demonstration at time t."""
    w0 = TWO_PI * script.freq_hz
    tau = t - script.t_start
    p = np.array(script.base_p, dtype=float)
    v = np.zeros(3)
    for i in range(3):
        wi = w0 * script.trans_freq_mult[i]
        arg = wi * tau + script.trans_phase[i]
        p[i] += script.trans_amp[i] * math.sin(arg)
        v[i] = script.trans_amp[i] * wi * math.cos(arg)
    r = np.zeros(3)
    rdot = np.zeros(3)
    for i in range(3):
        arg = w0 * tau + script.rot_phase[i]
        r[i] = script.rot_amp[i] * math.sin(arg)
        rdot[i] = script.rot_amp[i] * w0 * math.cos(arg)
    q = quat_mul(np.array(script.base_q, dtype=float), quat_from_rotation_vector(r))
    omega = _so3_right_jacobian(r) @ rdot
    twist = np.concatenate([v, omega])
    return Pose(p, q / np.linalg.norm(q)), twist


def r1_script(t_start: float = 0.0, t_stop: float = math.inf) -> SkillScript:
    """Push-pull along X with rotation about Y."""
    return SkillScript(
        skill_id="R1",
        trans_amp=(0.05, 0.0, 0.0),
        rot_amp=(0.0, 0.3, 0.0),
        t_start=t_start,
        t_stop=t_stop,
    )


def r2_script(t_start: float = 0.0, t_stop: float = math.inf) -> SkillScript:
    """Wave along Y with rotation about X."""
    return SkillScript(
        skill_id="R2",
        trans_amp=(0.0, 0.05, 0.0),
        rot_amp=(0.3, 0.0, 0.0),
        t_start=t_start,
        t_stop=t_stop,
    )


def r3_script(t_start: float = 0.0, t_stop: float = math.inf) -> SkillScript:
    """Up-down along Z with rotation about Y."""
    return SkillScript(
        skill_id="R3",
        trans_amp=(0.0, 0.0, 0.05),
        rot_amp=(0.0, 0.3, 0.0),
        t_start=t_start,
        t_stop=t_stop,
    )


def r4_script(t_start: float = 0.0, t_stop: float = math.inf) -> SkillScript:
    """Figure-eight along Y (X at twice the rate) with rotation about all axes."""
    return SkillScript(
        skill_id="R4",
        trans_amp=(0.03, 0.05, 0.0),
        trans_freq_mult=(2, 1, 1),
        rot_amp=(0.15, 0.15, 0.15),
        rot_phase=(0.0, 1.0, 2.0),
        t_start=t_start,
        t_stop=t_stop,
    )


def r5_script(t_start: float = 0.0, t_stop: float = math.inf) -> SkillScript:
    """Figure-eight along X (Z at twice the rate) with rotation about all axes."""
    return SkillScript(
        skill_id="R5",
        trans_amp=(0.05, 0.0, 0.05),
        trans_freq_mult=(1, 1, 2),
        rot_amp=(0.2, 0.2, 0.2),
        rot_phase=(0.0, 1.0, 2.0),
        t_start=t_start,
        t_stop=t_stop,
    )


NAMED_SCRIPTS = {
    "R1": r1_script,
    "R2": r2_script,
    "R3": r3_script,
    "R4": r4_script,
    "R5": r5_script,
}


def script_demo_source(scripts, arm_gains, arm_f_max):
    """Demonstration wrench source for :class:`World`: during each script's
    window the scripted arm pulls the therapist robot along the skill."""

    def source(t, tr):
        for sc in scripts:
            if sc.active(t):
                x_demo, xd_demo = skill_trajectory(sc, t)
                return human_arm_wrench(x_demo, xd_demo, tr, arm_gains, arm_f_max)
        return None

    return source


@dataclass
class PhaseSummary:
    skill_id: str
    t_start: float
    t_mu_one: float = math.nan
    t_eta_one: float = math.nan
    t_reinjection: float = math.nan
    t_eta_dropped: float = math.nan
    periods_to_mu_one: float = math.nan
    periods_mu_to_eta: float = math.nan
    pos_rms_mm: float = math.nan
    rot_rms_rad: float = math.nan
    ref_pos_rms_mm: float = math.nan

    def as_row(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "t_start": self.t_start,
            "t_mu_one": self.t_mu_one,
            "t_eta_one": self.t_eta_one,
            "t_reinjection": self.t_reinjection,
            "t_eta_dropped": self.t_eta_dropped,
            "periods_to_mu_one": self.periods_to_mu_one,
            "periods_mu_to_eta": self.periods_mu_to_eta,
            "pos_rms_mm": self.pos_rms_mm,
            "rot_rms_rad": self.rot_rms_rad,
            "ref_pos_rms_mm": self.ref_pos_rms_mm,
        }


@dataclass
class ScenarioResult:
    world: World
    phases: list[PhaseSummary] = field(default_factory=list)

    @property
    def telemetry(self):
        return self.world.telemetry


def run_scenario(
    scripts: list[SkillScript],
    duration_s: float,
    world: World | None = None,
    observe_margin_s: float = 2.0,
    reinjection_force: float | None = None,
) -> ScenarioResult:
    """Run the scripted timeline and summarize each teaching phase.

    Tracking metrics are computed over the autonomous window of each
    script: from ``t_eta_one + observe_margin_s`` to the script's stop
    time, comparing the patient robot (and the generated reference)
    against the analytic script trajectory.
    """
    scripts = sorted(scripts, key=lambda sc: sc.t_start)
    if world is None:
        base = Pose(np.array(scripts[0].base_p), np.array(scripts[0].base_q))
        world = World(start_pose=base)
    world.demo_source = script_demo_source(scripts, world.arm_gains, world.arm_f_max)

    n_ticks = int(round(duration_s / world.cfg.dt))
    phases = [PhaseSummary(skill_id=sc.skill_id, t_start=sc.t_start) for sc in scripts]
    track: dict[int, list] = {i: [] for i in range(len(scripts))}
    # at a later script's start the levels are still saturated from the
    # previous skill; its transition only counts after re-learning begins
    armed = [i == 0 for i in range(len(scripts))]

    for _ in range(n_ticks):
        world.sim_tick()
        t = world.t
        mu, eta = world.allocation.mu, world.allocation.eta
        for i, sc in enumerate(scripts):
            ph = phases[i]
            if not sc.active(t):
                continue
            if i > 0 and math.isnan(ph.t_reinjection) and reinjection_force is not None:
                f = world.telemetry[-1].f_h_th if world.telemetry else None
                f_norm = float(np.linalg.norm(f.f)) if f is not None else 0.0
                if f_norm >= reinjection_force:
                    ph.t_reinjection = t
            if not armed[i] and mu < 0.5 and eta < 0.5:
                armed[i] = True
            if not armed[i]:
                continue
            if math.isnan(ph.t_mu_one) and mu >= 1.0:
                ph.t_mu_one = t
            if math.isnan(ph.t_eta_one) and not math.isnan(ph.t_mu_one) and eta >= 1.0:
                ph.t_eta_one = t
            if not math.isnan(ph.t_eta_one) and t >= ph.t_eta_one + observe_margin_s:
                x_demo, _ = skill_trajectory(sc, t)
                track[i].append(
                    (
                        float(np.linalg.norm(world.pr.pose.p - x_demo.p)),
                        geodesic_distance(world.pr.pose.q, x_demo.q),
                        float(np.linalg.norm(world.pdmp.x_ref.p - x_demo.p)),
                    )
                )
        # time when eta collapses after a re-injection
        for ph in phases:
            if (
                not math.isnan(ph.t_reinjection)
                and math.isnan(ph.t_eta_dropped)
                and eta < 0.1
                and t >= ph.t_reinjection
            ):
                ph.t_eta_dropped = t

    for i, sc in enumerate(scripts):
        ph = phases[i]
        if not math.isnan(ph.t_mu_one):
            ph.periods_to_mu_one = (ph.t_mu_one - sc.t_start) / sc.period_s
        if not math.isnan(ph.t_eta_one):
            ph.periods_mu_to_eta = (ph.t_eta_one - ph.t_mu_one) / sc.period_s
        if track[i]:
            arr = np.asarray(track[i])
            ph.pos_rms_mm = 1000.0 * float(np.sqrt(np.mean(arr[:, 0] ** 2)))
            ph.rot_rms_rad = float(np.sqrt(np.mean(arr[:, 1] ** 2)))
            ph.ref_pos_rms_mm = 1000.0 * float(np.sqrt(np.mean(arr[:, 2] ** 2)))
    return ScenarioResult(world=world, phases=phases)
