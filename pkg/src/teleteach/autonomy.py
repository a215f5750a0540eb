"""Two-level autonomy allocation.

The learning level ``mu`` rises while the generated reference tracks the
demonstration within tolerance (skill confidence) and collapses when the
error grows; the control autonomy ``eta`` blends the follower from
therapist-tracking to autonomous reference-tracking, may only rise once
learning has converged (mu = 1), and collapses under operator wrench
(intervention).  Both levels obey saturated rate dynamics with an escape
constant so they never stick at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# mu counts as converged-to-one within this tolerance; clamping makes the
# boundary value exactly 1.0, the tolerance absorbs any upstream rounding
MU_ONE_TOL = 1e-9


@dataclass(frozen=True)
class AllocationConfig:
    """Thresholds and rate parameters (all strictly positive).

    ``lambda_err`` is a combined norm over the 6-D pose difference
    (meters and radians summed in one Euclidean norm); ``error_weights``
    optionally rescales the 6 components before taking that norm.
    """

    rho: float = 0.8
    epsilon: float = 0.03
    lambda_err: float = 0.015
    lambda_f: float = 8.0
    lambda_m: float = 2.0
    error_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        for name in ("rho", "epsilon", "lambda_err", "lambda_f", "lambda_m"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if len(self.error_weights) != 6 or any(w < 0 for w in self.error_weights):
            raise ValueError("error_weights must be 6 non-negative values")


@dataclass
class AutonomyState:
    mu: float = 0.0
    eta: float = 0.0

    def snapshot(self) -> "AutonomyState":
        return AutonomyState(mu=self.mu, eta=self.eta)


def weighted_error_norm(diff6: np.ndarray, cfg: AllocationConfig) -> float:
    return float(np.linalg.norm(np.asarray(diff6) * np.asarray(cfg.error_weights)))


def skill_confidence(err_norm: float, cfg: AllocationConfig) -> float:
    """Quartic confidence index: 1 at the error tolerance, >1 beyond it."""
    if err_norm < 0.0:
        raise ValueError("err_norm must be non-negative")
    return (err_norm / cfg.lambda_err) ** 4


def intervention_index(wrench, cfg: AllocationConfig) -> float:
    """Quartic operator-intervention index, force and moment parts summed."""
    f = float(np.linalg.norm(wrench.f))
    m = float(np.linalg.norm(wrench.m))
    return (f / cfg.lambda_f) ** 4 + (m / cfg.lambda_m) ** 4


def mu_step(state: AutonomyState, i_s: float, dt: float, cfg: AllocationConfig) -> AutonomyState:
    """Advance the learning level one step.

    At the saturation boundaries only rates pointing back into [0, 1] act.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    mu = state.mu
    mu_r = (mu / cfg.rho + cfg.epsilon) * (1.0 - i_s)
    if mu <= 0.0:
        mu_dot = max(mu_r, 0.0)
    elif mu >= 1.0:
        mu_dot = min(mu_r, 0.0)
    else:
        mu_dot = mu_r
    state.mu = float(np.clip(mu + mu_dot * dt, 0.0, 1.0))
    return state


def eta_step(state: AutonomyState, i_h: float, dt: float, cfg: AllocationConfig) -> AutonomyState:
    """Advance the control autonomy one step.

    Positive rates are admitted only while mu has converged to one;
    negative rates (operator intervention) act regardless.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    eta = state.eta
    eta_r = (eta / cfg.rho + cfg.epsilon) * (1.0 - i_h)
    gate = 1.0 if state.mu >= 1.0 - MU_ONE_TOL else 0.0
    if eta <= 0.0:
        eta_dot = max(eta_r * gate, 0.0)
    elif eta >= 1.0:
        eta_dot = min(eta_r, 0.0)
    else:
        eta_dot = min(eta_r, 0.0) + max(eta_r, 0.0) * gate
    state.eta = float(np.clip(eta + eta_dot * dt, 0.0, 1.0))
    return state
