"""Periodic movement primitive on R^3 x S^3 with online weight adaptation.

A phase oscillator drives a normalized weighted sum of von Mises basis
functions (the forcing term), which shapes a second-order attractor toward
a goal pose.  Translation rows integrate linearly; rotation rows carry the
half-angular-velocity convention of the trivialized quaternion rate, so
the derivative stored in ``xdot_ref`` is ``[v, omega/2]``.

Weights adapt per basis with a scalar-gain recursive least-squares rule
discounted by a forgetting factor; the learning level ``mu`` scales the
regression error with ``(1 - mu)`` so a converged skill (mu = 1) stops
moving, leaving the weights bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .geometry import Pose, integrate_quat, quat_error, tracking_error

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PdmpConfig:
    """Hyperparameters of the periodic primitive.

    ``h_rot`` lets the rotation rows use a different kernel width than the
    translation rows; the basis count is shared so the weight matrix stays
    a single 6 x N block.
    """

    n_basis: int = 30
    h: float = 31.0
    h_rot: float | None = None
    alpha_z: float = 25.0
    beta_z: float = 6.25
    r: float = 1.0
    lambda_fg: float = 0.9995

    def __post_init__(self):
        if self.n_basis < 2:
            raise ValueError("n_basis must be >= 2")
        if not (0.9 < self.lambda_fg <= 1.0):
            raise ValueError("lambda_fg must lie in (0.9, 1.0]")
        if self.h <= 0 or (self.h_rot is not None and self.h_rot <= 0):
            raise ValueError("kernel widths must be positive")

    @property
    def centers(self) -> np.ndarray:
        """Basis centers, evenly spaced on [0, 2*pi)."""
        return np.arange(self.n_basis) * (TWO_PI / self.n_basis)

    @property
    def rotation_width(self) -> float:
        return self.h if self.h_rot is None else self.h_rot


@dataclass
class PdmpState:
    """Mutable learner state advanced by a single owner.

    W and P are 6 x N: rows 0-2 translational (meters), rows 3-5
    rotational (radians).  P entries stay strictly positive.
    """

    s: float
    omega: float
    W: np.ndarray
    P: np.ndarray
    x_ref: Pose
    xdot_ref: np.ndarray
    g_z: Pose

    def snapshot(self) -> "PdmpState":
        return PdmpState(
            s=self.s,
            omega=self.omega,
            W=self.W.copy(),
            P=self.P.copy(),
            x_ref=self.x_ref,
            xdot_ref=self.xdot_ref.copy(),
            g_z=self.g_z,
        )


def make_state(cfg: PdmpConfig, x0: Pose, omega0: float) -> PdmpState:
    """Fresh learner anchored at the current pose with zero weights."""
    n = cfg.n_basis
    return PdmpState(
        s=0.0,
        omega=float(omega0),
        W=np.zeros((6, n)),
        P=np.ones((6, n)),
        x_ref=x0,
        xdot_ref=np.zeros(6),
        g_z=x0,
    )


def reset_gains(state: PdmpState) -> None:
    """Restore the RLS gains to their initial value (re-teach)."""
    state.P.fill(1.0)


def basis_activations(s: float, cfg: PdmpConfig, h: float | None = None) -> np.ndarray:
    """Von Mises activations exp(h * (cos(s - c_i) - 1)), each in (0, 1]."""
    width = cfg.h if h is None else h
    return np.exp(width * (np.cos(s - cfg.centers) - 1.0))


def _activation_rows(s: float, cfg: PdmpConfig) -> np.ndarray:
    """Per-dimension activations as a 6 x N block (rotation rows may differ)."""
    psi_t = basis_activations(s, cfg)
    if cfg.h_rot is None:
        return np.broadcast_to(psi_t, (6, cfg.n_basis))
    psi_r = basis_activations(s, cfg, h=cfg.rotation_width)
    out = np.empty((6, cfg.n_basis))
    out[:3] = psi_t
    out[3:] = psi_r
    return out


def forcing(s: float, W: np.ndarray, cfg: PdmpConfig) -> np.ndarray:
    """Normalized weighted basis sum, per dimension (6-vector)."""
    psi = _activation_rows(s, cfg)
    return cfg.r * (W * psi).sum(axis=1) / psi.sum(axis=1)


def target_forcing(
    x_d: Pose,
    xd_d: np.ndarray,
    xdd_d: np.ndarray,
    g_z: Pose,
    omega: float,
    cfg: PdmpConfig,
) -> np.ndarray:
    """Forcing value the primitive would need to reproduce a demonstration
    sample (pose, velocity, acceleration in the [v, omega/2] convention)."""
    if omega <= 0.0:
        raise ValueError("omega must be positive")
    err = tracking_error(g_z, x_d)
    return xdd_d / omega**2 - cfg.alpha_z * (cfg.beta_z * err - xd_d / omega)


def rls_update(state: PdmpState, gamma_d: np.ndarray, mu: float, cfg: PdmpConfig) -> PdmpState:
    """One recursive least-squares step toward the target forcing.

    The gain recursion always advances; the weight update is scaled by
    (1 - mu) and skipped entirely at mu = 1 so a frozen skill stays
    bit-identical.
    """
    psi = _activation_rows(state.s, cfg)
    r2 = cfg.r * cfg.r
    lam = cfg.lambda_fg
    P = state.P
    # algebraically  (P - P^2 r^2 / (lam/psi + P r^2)) / lam,  multiplied
    # through by psi so vanishing activations stay finite
    p_psi = P * r2 * psi
    P_new = (P - P * p_psi / (lam + p_psi)) / lam
    state.P = P_new
    if mu < 1.0:
        err = (1.0 - mu) * (gamma_d[:, None] - state.W)
        state.W = state.W + psi * err * P_new * cfg.r
    return state


def step(state: PdmpState, dt: float, cfg: PdmpConfig):
    """Advance the reference trajectory one control tick.

    Returns (xdd_ref, xdot_ref, x_ref); the state is updated in place with
    a semi-implicit Euler step and the phase wraps modulo 2*pi.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    omega = state.omega
    gamma = forcing(state.s, state.W, cfg)
    err = tracking_error(state.g_z, state.x_ref)
    xdd = omega**2 * (cfg.alpha_z * (cfg.beta_z * err - state.xdot_ref / omega) + gamma)
    xdot = state.xdot_ref + xdd * dt
    p = state.x_ref.p + xdot[:3] * dt
    q = integrate_quat(state.x_ref.q, 2.0 * xdot[3:], dt)
    state.xdot_ref = xdot
    state.x_ref = Pose(p, q)
    state.s = math.fmod(state.s + omega * dt, TWO_PI)
    return xdd, xdot, state.x_ref


class SecondOrderLowPass:
    """Streaming 2nd-order Butterworth low-pass over a fixed-size vector.

    State is primed on the first sample so the output starts at the input
    value instead of ringing up from zero.
    """

    def __init__(self, cutoff_hz: float, fs_hz: float, dims: int):
        b, a = signal.butter(2, cutoff_hz, fs=fs_hz)
        self._b = b
        self._a = a
        self._zi_unit = signal.lfilter_zi(b, a)
        self._z = None
        self._dims = dims

    def reset(self) -> None:
        self._z = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._z is None:
            self._z = np.outer(self._zi_unit, x)
        b, a, z = self._b, self._a, self._z
        y = b[0] * x + z[0]
        z[0] = b[1] * x - a[1] * y + z[1]
        z[1] = b[2] * x - a[2] * y
        return y


class DemoDifferentiator:
    """Velocity and acceleration of a sampled pose stream.

    Finite differences followed by a 2nd-order low-pass per stage; output
    uses the primitive's derivative convention [v, omega/2].
    """

    def __init__(self, fs_hz: float, cutoff_hz: float = 10.0):
        self._dt = 1.0 / fs_hz
        self._lp_vel = SecondOrderLowPass(cutoff_hz, fs_hz, dims=6)
        self._lp_acc = SecondOrderLowPass(cutoff_hz, fs_hz, dims=6)
        self._prev_pose: Pose | None = None
        self._prev_vel: np.ndarray | None = None

    def reset(self) -> None:
        self._lp_vel.reset()
        self._lp_acc.reset()
        self._prev_pose = None
        self._prev_vel = None

    def update(self, pose: Pose):
        """Feed one pose sample; returns (xdot, xdd) 6-vectors."""
        dt = self._dt
        if self._prev_pose is None:
            self._prev_pose = pose
            self._prev_vel = np.zeros(6)
            return np.zeros(6), np.zeros(6)
        raw_v = np.empty(6)
        raw_v[:3] = (pose.p - self._prev_pose.p) / dt
        raw_v[3:] = quat_error(self._prev_pose.q, pose.q) / dt
        v = self._lp_vel(raw_v)
        a = self._lp_acc((v - self._prev_vel) / dt)
        self._prev_pose = pose
        self._prev_vel = v
        return v, a


class GoalEstimator:
    """Running mean of the demonstrated pose over the trailing period.

    Translation averages arithmetically; orientation uses the normalized
    mean of sign-aligned quaternions.  Samples older than one period (at
    the current frequency estimate) are dropped.
    """

    def __init__(self):
        self._t: list[float] = []
        self._p: list[np.ndarray] = []
        self._q: list[np.ndarray] = []
        self._p_sum = np.zeros(3)
        self._q_sum = np.zeros(4)

    def update(self, t: float, pose: Pose, period: float) -> None:
        q = pose.q
        if self._q_sum @ q < 0.0:
            q = -q
        self._t.append(t)
        self._p.append(pose.p)
        self._q.append(q)
        self._p_sum = self._p_sum + pose.p
        self._q_sum = self._q_sum + q
        while self._t and t - self._t[0] > period:
            self._t.pop(0)
            self._p_sum = self._p_sum - self._p.pop(0)
            self._q_sum = self._q_sum - self._q.pop(0)

    def has_samples(self) -> bool:
        return bool(self._t)

    def goal(self) -> Pose:
        if not self._t:
            raise ValueError("no samples in the goal window")
        n = len(self._t)
        q = self._q_sum / np.linalg.norm(self._q_sum)
        return Pose(self._p_sum / n, q)
