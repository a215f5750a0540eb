"""Fixed-step simulation of the bilateral teleoperation loop.

Two surrogate Cartesian robots (constant diagonal mass/inertia, small
passive damping, no configuration-dependent terms) exchange poses over a
position-position channel every millisecond.  The therapist robot is
driven by an external hand wrench (scripted arm or live pointer input)
and by a PD toward the patient robot, scaled by the autonomy level; the
patient robot blends a PD toward the therapist with an impedance
controller toward the learned reference whose stiffness rises with
autonomy.  Learning (frequency estimation, weight regression, allocation)
runs on every second tick, at half the control rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import afo as afo_mod
from . import autonomy as alloc_mod
from . import dmp as dmp_mod
from .geometry import Pose, Twist, Wrench, integrate_quat, tracking_error
from .telemetry import TelemetryFrame

DIVERGENCE_LIMIT = 1e3


class DivergenceError(RuntimeError):
    """A state component left the plausible range; the run is aborted."""


@dataclass(frozen=True)
class RobotParams:
    # passive damping must stay small next to controller authority or it
    # phase-lags every tracking stage (worst for the light rotation axes)
    mass_trans: float = 3.0
    inertia_rot: float = 0.05
    damping_trans: float = 2.0
    damping_rot: float = 0.05

    def __post_init__(self):
        if min(self.mass_trans, self.inertia_rot, self.damping_trans, self.damping_rot) <= 0:
            raise ValueError("robot parameters must be positive")

    @property
    def mass6(self) -> np.ndarray:
        return np.array([self.mass_trans] * 3 + [self.inertia_rot] * 3)

    @property
    def damping6(self) -> np.ndarray:
        return np.array([self.damping_trans] * 3 + [self.damping_rot] * 3)


@dataclass(frozen=True)
class GainSet:
    """Diagonal stiffness/damping over the 6-D pose error."""

    k: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if k.shape != (6,) or d.shape != (6,):
            raise ValueError("gains must be 6-vectors")
        if np.any(k < 0) or np.any(d < 0):
            raise ValueError("gains must be non-negative")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "d", d)

    def scaled(self, factor: float) -> "GainSet":
        return GainSet(self.k * factor, self.d * factor)


def damping_for(k6, params: RobotParams) -> np.ndarray:
    """Near-critical damping for the given stiffness on the surrogate body.

    Rotation rows act on the half-angle error, hence the factor-2 shift.
    """
    k6 = np.asarray(k6, dtype=float)
    out = np.empty(6)
    out[:3] = 2.0 * np.sqrt(k6[:3] * params.mass_trans)
    out[3:] = np.sqrt(2.0 * k6[3:] * params.inertia_rot)
    return out


def default_gainset(params: RobotParams, k_trans: float = 500.0, k_rot: float = 20.0) -> GainSet:
    k = np.array([k_trans] * 3 + [k_rot] * 3)
    return GainSet(k, damping_for(k, params))


def default_arm_gainset(params: RobotParams) -> GainSet:
    k = np.array([600.0] * 3 + [25.0] * 3)
    return GainSet(k, damping_for(k, params))


DEFAULT_ARM_F_MAX = np.array([60.0] * 3 + [15.0] * 3)


@dataclass
class RobotState:
    pose: Pose
    twist: Twist
    applied_wrench: Wrench = field(default_factory=Wrench.zero)

    @staticmethod
    def at_rest(pose: Pose) -> "RobotState":
        return RobotState(pose=pose, twist=Twist.zero())


def tr_control(x_p_received: Pose, xdot_p_received: np.ndarray, tr: RobotState, gains: GainSet) -> Wrench:
    """PD toward the received patient-side state."""
    err = tracking_error(x_p_received, tr.pose)
    vel_err = xdot_p_received - tr.twist.as_array()
    return Wrench.from_array(gains.k * err + gains.d * vel_err)


def _deriv_to_twist(xd6: np.ndarray) -> np.ndarray:
    """Reference derivatives carry [v, omega/2]; controllers use [v, omega]."""
    out = xd6.copy()
    out[3:] *= 2.0
    return out


def pr_control(
    pr: RobotState,
    x_th_received: Pose,
    xdot_th_received: np.ndarray,
    x_ref: Pose,
    xdot_ref: np.ndarray,
    xdd_ref: np.ndarray,
    eta: float,
    local0: GainSet,
    remote: GainSet,
    params: RobotParams,
):
    """Blended follower command; returns (u_p, u_imp, u_th_p).

    The impedance controller's gains scale with eta (variable stiffness)
    and the blend scales its share with eta again, exactly as composed in
    the control law.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    pr_vel = pr.twist.as_array()
    k_p = eta * local0.k
    d_p = eta * local0.d
    u_imp = (
        params.mass6 * _deriv_to_twist(xdd_ref)
        + k_p * tracking_error(x_ref, pr.pose)
        + d_p * (_deriv_to_twist(xdot_ref) - pr_vel)
    )
    u_th_p = remote.k * tracking_error(x_th_received, pr.pose) + remote.d * (
        xdot_th_received - pr_vel
    )
    u_p = eta * u_imp + (1.0 - eta) * u_th_p
    return Wrench.from_array(u_p), Wrench.from_array(u_imp), Wrench.from_array(u_th_p)


def human_arm_wrench(
    x_demo: Pose,
    xdot_demo: np.ndarray,
    tr: RobotState,
    arm: GainSet,
    f_max: np.ndarray = DEFAULT_ARM_F_MAX,
) -> Wrench:
    """Scripted stand-in for the demonstrator's hand: a saturated PD pulling
    the therapist robot toward the demonstration trajectory."""
    err = tracking_error(x_demo, tr.pose)
    u = arm.k * err + arm.d * (xdot_demo - tr.twist.as_array())
    return Wrench.from_array(np.clip(u, -f_max, f_max))


def robot_step(state: RobotState, u: Wrench, f_h: Wrench, params: RobotParams, dt: float) -> RobotState:
    """Semi-implicit Euler step of the surrogate rigid-body dynamics."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v = state.twist.v
    w = state.twist.omega
    a_lin = (u.f + f_h.f - params.damping_trans * v) / params.mass_trans
    a_ang = (u.m + f_h.m - params.damping_rot * w) / params.inertia_rot
    v_new = v + a_lin * dt
    w_new = w + a_ang * dt
    p_new = state.pose.p + v_new * dt
    q_new = integrate_quat(state.pose.q, w_new, dt)
    worst = max(
        np.max(np.abs(p_new)), np.max(np.abs(v_new)), np.max(np.abs(w_new))
    )
    if worst > DIVERGENCE_LIMIT or not math.isfinite(worst):
        raise DivergenceError(
            f"robot state diverged: |component| reached {worst:.3g} "
            f"(p={p_new}, v={v_new}, omega={w_new})"
        )
    return RobotState(
        pose=Pose(p_new, q_new),
        twist=Twist(v_new, w_new),
        applied_wrench=f_h,
    )


class Channel:
    """Position-position exchange with integer tick delay and optional
    packet drop; a dropped packet repeats the last delivered sample."""

    def __init__(self, delay_ticks: int = 0, drop_prob: float = 0.0, rng: np.random.Generator | None = None):
        if delay_ticks < 0:
            raise ValueError("delay_ticks must be >= 0")
        if not 0.0 <= drop_prob < 1.0:
            raise ValueError("drop_prob must lie in [0, 1)")
        self._delay = delay_ticks
        self._drop = drop_prob
        self._rng = rng or np.random.default_rng(0)
        self._queue: list = []
        self._last = None

    def send(self, sample):
        self._queue.append(sample)

    def receive(self):
        if len(self._queue) > self._delay:
            sample = self._queue.pop(0)
            if self._drop > 0.0 and self._rng.random() < self._drop:
                sample = self._last if self._last is not None else sample
            self._last = sample
        return self._last


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 1e-3
    learn_every: int = 2  # learning at half the control rate
    params: RobotParams = field(default_factory=RobotParams)
    channel_delay_ticks: int = 0
    channel_drop_prob: float = 0.0
    seed: int = 0
    scale_tr_gains_with_eta: bool = False  # gains stay fixed; only Eq-level eta scaling
    reset_gains_on_reteach: bool = True
    demo_filter_cutoff_hz: float = 10.0
    # learning/allocation stay idle until the demonstrator first pushes;
    # otherwise the escape constant would raise mu with no demonstration
    activation_force_threshold: float = 0.5
    # the instantaneous pose-error norm oscillates within every period;
    # the allocation reacts to its running average instead
    err_filter_tau_s: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or self.learn_every < 1:
            raise ValueError("invalid timing configuration")


class World:
    """Owns all simulation state and advances it tick by tick.

    External inputs cross in through one bounded queue (wrench injections,
    drained once per tick) plus an optional demonstration source callable;
    telemetry leaves as immutable frames.
    """

    def __init__(
        self,
        cfg: WorldConfig | None = None,
        dmp_cfg: dmp_mod.PdmpConfig | None = None,
        afo_cfg: afo_mod.AfoConfig | None = None,
        alloc_cfg: alloc_mod.AllocationConfig | None = None,
        gains_tr: GainSet | None = None,
        gains_pr_remote: GainSet | None = None,
        gains_pr_local: GainSet | None = None,
        arm_gains: GainSet | None = None,
        arm_f_max: np.ndarray | None = None,
        start_pose: Pose | None = None,
        demo_source=None,
        collect_telemetry: bool = True,
    ):
        self.cfg = cfg or WorldConfig()
        self.dmp_cfg = dmp_cfg or dmp_mod.PdmpConfig()
        self.afo_cfg = afo_cfg or afo_mod.AfoConfig()
        self.alloc_cfg = alloc_cfg or alloc_mod.AllocationConfig()
        params = self.cfg.params
        self.gains_tr = gains_tr or default_gainset(params)
        self.gains_pr_remote = gains_pr_remote or default_gainset(params)
        self.gains_pr_local = gains_pr_local or default_gainset(params)
        self.arm_gains = arm_gains or default_arm_gainset(params)
        self.arm_f_max = DEFAULT_ARM_F_MAX if arm_f_max is None else np.asarray(arm_f_max, dtype=float)
        start = start_pose or Pose.identity()

        self.tr = RobotState.at_rest(start)
        self.pr = RobotState.at_rest(start)
        rng = np.random.default_rng(self.cfg.seed)
        self.chan_tr_to_pr = Channel(self.cfg.channel_delay_ticks, self.cfg.channel_drop_prob, rng)
        self.chan_pr_to_tr = Channel(self.cfg.channel_delay_ticks, self.cfg.channel_drop_prob, rng)

        self.pdmp = dmp_mod.make_state(self.dmp_cfg, start, self.afo_cfg.omega0)
        self.afo = afo_mod.make_state(self.afo_cfg)
        fs_learn = 1.0 / (self.cfg.dt * self.cfg.learn_every)
        self.selector = afo_mod.InputSelector(self.afo_cfg.variance_window_s, fs_learn)
        self.differentiator = dmp_mod.DemoDifferentiator(fs_learn, self.cfg.demo_filter_cutoff_hz)
        self.goal_estimator = dmp_mod.GoalEstimator()
        self.allocation = alloc_mod.AutonomyState()

        self.demo_source = demo_source
        self.inject_queue: list[Wrench] = []  # drained once per tick
        self.telemetry: list[TelemetryFrame] = []
        self.collect_telemetry = collect_telemetry
        self.t = 0.0
        self.tick_count = 0

        self.learning_active = False
        self._mu_reached_one = False
        self._err_norm = 0.0
        self._i_s = 0.0
        self._i_h = 0.0
        self._xdd_ref = np.zeros(6)
        self._last_u_p = Wrench.zero()
        self._last_f_h_th = Wrench.zero()

    def inject_wrench(self, wrench: Wrench, max_queue: int = 1024) -> None:
        if len(self.inject_queue) < max_queue:
            self.inject_queue.append(wrench)

    def _demo_wrench(self) -> Wrench:
        total = np.zeros(6)
        if self.demo_source is not None:
            w = self.demo_source(self.t, self.tr)
            if w is not None:
                total += w.as_array()
        if self.inject_queue:
            # one command per tick keeps the socket path and the scripted
            # path time-aligned
            total += self.inject_queue.pop(0).as_array()
        return Wrench.from_array(total)

    def _learning_block(self, x_th_received: Pose, f_h_th: Wrench) -> None:
        dt_learn = self.cfg.dt * self.cfg.learn_every
        mu = self.allocation.mu

        # frequency adaptation on the patient robot's pose components,
        # rescaled onto the oscillator's calibration envelope
        comps = self.pr.pose.components()
        y = self.selector.normalized_sample(
            comps, mu, period_hint_s=2.0 * math.pi / self.afo.omega
        )
        self.afo.input_dim = self.selector.dim
        if y is not None:
            afo_mod.afo_step(self.afo, y, mu, dt_learn, self.afo_cfg)
        self.pdmp.omega = self.afo.omega_avg
        if mu < 1.0:
            # the oscillator phase is entrained to the demonstration;
            # driving the canonical phase with it keeps the weight profile
            # aligned while the frequency estimate is still settling.  A
            # converged skill free-runs on the averaged frequency instead.
            self.pdmp.s = self.afo.phi

        # weight regression toward the received demonstration
        xd, xdd = self.differentiator.update(x_th_received)
        if mu < 1.0:
            self.goal_estimator.update(self.t, x_th_received, 2.0 * math.pi / self.pdmp.omega)
            self.pdmp.g_z = self.goal_estimator.goal()
        gamma_d = dmp_mod.target_forcing(
            x_th_received, xd, xdd, self.pdmp.g_z, self.pdmp.omega, self.dmp_cfg
        )
        dmp_mod.rls_update(self.pdmp, gamma_d, mu, self.dmp_cfg)

        # allocation: learning level from tracking error, autonomy from wrench.
        # The error is always measured against the received therapist pose:
        # during clean autonomy the therapist robot follows the loop anyway,
        # and during a re-teach only this signal exposes the new motion
        # (the follower keeps tracking the reference regardless).
        raw_err = alloc_mod.weighted_error_norm(
            tracking_error(self.pdmp.x_ref, x_th_received), self.alloc_cfg
        )
        # fast attack, slow release: a genuine deviation (re-teach) must
        # register promptly, while the within-period oscillation of the
        # norm is still averaged away
        tau = self.cfg.err_filter_tau_s
        if raw_err > self._err_norm:
            tau *= 0.15
        alpha = min(1.0, dt_learn / tau)
        self._err_norm += alpha * (raw_err - self._err_norm)
        # the pose error cannot see a residual frequency mismatch (the
        # regression keeps refitting the slipping phase), so an unsettled
        # frequency estimate also withholds confidence
        i_s_freq = (self.afo.freq_dispersion / self.afo_cfg.freq_settle_tol) ** 4
        self._i_s = max(
            alloc_mod.skill_confidence(self._err_norm, self.alloc_cfg), i_s_freq
        )
        alloc_mod.mu_step(self.allocation, self._i_s, dt_learn, self.alloc_cfg)
        self._i_h = alloc_mod.intervention_index(f_h_th, self.alloc_cfg)
        alloc_mod.eta_step(self.allocation, self._i_h, dt_learn, self.alloc_cfg)

        if self.allocation.mu >= 1.0 - alloc_mod.MU_ONE_TOL:
            self._mu_reached_one = True
        elif (
            self._mu_reached_one
            and self.cfg.reset_gains_on_reteach
            and self.allocation.mu < 0.05
            and self._i_h >= 1.0
        ):
            # a converged skill collapsed under operator force: this is a
            # re-teach, so restore learning agility and re-pick the drive
            dmp_mod.reset_gains(self.pdmp)
            self._mu_reached_one = False
            self.selector.unfreeze()

    def sim_tick(self) -> None:
        """One 1 kHz tick; raises DivergenceError when a state runs away."""
        cfg = self.cfg
        # position-position exchange (current states, subject to delay/drop)
        self.chan_tr_to_pr.send((self.tr.pose, self.tr.twist.as_array()))
        self.chan_pr_to_tr.send((self.pr.pose, self.pr.twist.as_array()))
        # before the first delivery arrives (delayed channel warm-up), each
        # side tracks itself, which produces zero commands
        received = self.chan_tr_to_pr.receive()
        x_th_received, xdot_th_received = (
            received if received is not None else (self.pr.pose, self.pr.twist.as_array())
        )
        received = self.chan_pr_to_tr.receive()
        x_p_received, xdot_p_received = (
            received if received is not None else (self.tr.pose, self.tr.twist.as_array())
        )

        f_h_th = self._demo_wrench()
        self._last_f_h_th = f_h_th
        if not self.learning_active and (
            np.linalg.norm(f_h_th.f) > cfg.activation_force_threshold
            or np.linalg.norm(f_h_th.m) > cfg.activation_force_threshold
        ):
            self.learning_active = True

        if self.learning_active and self.tick_count % cfg.learn_every == 0:
            self._learning_block(x_th_received, f_h_th)

        xdd_ref, xdot_ref, x_ref = dmp_mod.step(self.pdmp, cfg.dt, self.dmp_cfg)
        self._xdd_ref = xdd_ref

        eta = self.allocation.eta
        gains_tr = self.gains_tr.scaled(eta) if cfg.scale_tr_gains_with_eta else self.gains_tr
        u_th = tr_control(x_p_received, xdot_p_received, self.tr, gains_tr)
        u_th_eff = Wrench.from_array(eta * u_th.as_array())  # authority scales with autonomy
        u_p, _, _ = pr_control(
            self.pr,
            x_th_received,
            xdot_th_received,
            x_ref,
            xdot_ref,
            xdd_ref,
            eta,
            self.gains_pr_local,
            self.gains_pr_remote,
            cfg.params,
        )
        self._last_u_p = u_p

        try:
            self.tr = robot_step(self.tr, u_th_eff, f_h_th, cfg.params, cfg.dt)
            self.pr = robot_step(self.pr, u_p, Wrench.zero(), cfg.params, cfg.dt)
        except DivergenceError as exc:
            raise DivergenceError(f"t={self.t:.3f}s: {exc}") from exc

        self.t += cfg.dt
        self.tick_count += 1
        if self.collect_telemetry:
            self.telemetry.append(self._frame())

    def _frame(self) -> TelemetryFrame:
        return TelemetryFrame(
            t=self.t,
            tr_pose=self.tr.pose,
            pr_pose=self.pr.pose,
            x_ref=self.pdmp.x_ref,
            tr_twist=self.tr.twist,
            pr_twist=self.pr.twist,
            f_h_th=self._last_f_h_th,
            u_p=self._last_u_p,
            mu=self.allocation.mu,
            eta=self.allocation.eta,
            omega=self.pdmp.omega,
            s=self.pdmp.s,
            err_norm=self._err_norm,
            i_s=self._i_s,
            i_h=self._i_h,
        )

    def run(self, duration_s: float) -> None:
        for _ in range(int(round(duration_s / self.cfg.dt))):
            self.sim_tick()
