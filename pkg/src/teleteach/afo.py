"""Adaptive frequency oscillator: entrains a phase oscillator to one scalar
component of the demonstrated motion and reads off its fundamental frequency.

The oscillator predicts the input with an adaptive truncated Fourier series
in its own phase; the prediction error drives phase, frequency, and
coefficient adaptation.  The learning level ``mu`` gates frequency and
coefficient adaptation with a factor (1 - mu), so a converged skill keeps
its frequency exactly constant while the phase keeps advancing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AfoConfig:
    # Dimensionless gains: the effective rates scale with the current
    # frequency estimate (k_phase*omega, k_freq*omega^2, k_coeff*omega),
    # so entrainment behaves the same across the clamp band.  k_coeff is
    # deliberately slow relative to k_freq: fast Fourier fitting masks a
    # frequency mismatch before the pull-in can correct it.
    harmonics: int = 5
    k_phase: float = 20.0
    k_freq: float = 15.0
    k_coeff: float = 0.2
    omega0: float = TWO_PI * 0.5
    omega_min: float = 0.1
    omega_max: float = 20.0
    variance_window_s: float = 2.0
    # relative frequency dispersion below which the estimate counts as
    # settled for the learning-confidence gate
    freq_settle_tol: float = 0.015

    def __post_init__(self):
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        if not (0.0 < self.omega_min < self.omega_max):
            raise ValueError("need 0 < omega_min < omega_max")


@dataclass
class AfoState:
    """Oscillator phase, frequency estimate, and Fourier coefficients.

    ``fourier_alpha[c]``/``fourier_beta[c]`` multiply cos(c*phi)/sin(c*phi)
    for c = 0..M; ``input_dim`` is the index of the pose component driving
    adaptation.
    """

    phi: float
    omega: float
    fourier_alpha: np.ndarray
    fourier_beta: np.ndarray
    input_dim: int = 0
    primed: bool = False
    # cycle-averaged frequency: the instantaneous estimate wobbles around
    # the true value while adapting, the running mean is much tighter
    omega_avg: float = 0.0
    # relative dispersion of the instantaneous estimate around the mean;
    # moderate prior, pushed up or down by the observed hunting
    freq_dispersion: float = 0.1

    def snapshot(self) -> "AfoState":
        return AfoState(
            phi=self.phi,
            omega=self.omega,
            fourier_alpha=self.fourier_alpha.copy(),
            fourier_beta=self.fourier_beta.copy(),
            input_dim=self.input_dim,
            primed=self.primed,
            omega_avg=self.omega_avg,
            freq_dispersion=self.freq_dispersion,
        )


def make_state(cfg: AfoConfig) -> AfoState:
    m = cfg.harmonics
    omega0 = float(np.clip(cfg.omega0, cfg.omega_min, cfg.omega_max))
    return AfoState(
        phi=0.0,
        omega=omega0,
        fourier_alpha=np.zeros(m + 1),
        fourier_beta=np.zeros(m + 1),
        omega_avg=omega0,
    )


def predict(state: AfoState) -> float:
    """Current Fourier-series estimate of the input sample."""
    c = np.arange(state.fourier_alpha.size)
    angles = c * state.phi
    return float(state.fourier_alpha @ np.cos(angles) + state.fourier_beta @ np.sin(angles))


def afo_step(state: AfoState, y: float, mu: float, dt: float, cfg: AfoConfig) -> AfoState:
    """Advance the oscillator one sample of the scalar input ``y``.

    Euler integration of the phase/frequency/coefficient dynamics; the
    frequency is then clamped to its configured band and the phase wrapped.
    The state is updated in place and returned.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if not state.primed:
        # seed the constant term with the first sample so the unlearned
        # signal offset cannot slam the frequency into its clamp
        state.fourier_alpha[0] = y
        state.primed = True
    c = np.arange(state.fourier_alpha.size)
    angles = c * state.phi
    cos_c = np.cos(angles)
    sin_c = np.sin(angles)
    e = y - float(state.fourier_alpha @ cos_c + state.fourier_beta @ sin_c)
    # a hard gate: adaptation runs at full rate until learning converges,
    # then freezes exactly.  Throttling smoothly with (1 - mu) starves the
    # final frequency refinement during the convergence ramp and freezes a
    # still-trending estimate.
    gate = 0.0 if mu >= 1.0 else 1.0
    sin_phi = math.sin(state.phi)
    om = state.omega
    # the phase correction is gated too, so a frozen oscillator advances
    # at exactly its stored frequency
    phi_dot = om - gate * cfg.k_phase * om * e * sin_phi
    omega_dot = -gate * cfg.k_freq * om * om * e * sin_phi
    # two-regime fitting rate: slow while acquiring (a fast fit masks the
    # frequency mismatch), fast once the estimate has stopped hunting so
    # the residual ripple dies out quickly
    k_c = cfg.k_coeff * om
    if state.freq_dispersion < 0.03:
        k_c *= 8.0
    state.fourier_alpha = state.fourier_alpha + dt * gate * k_c * e * cos_c
    state.fourier_beta = state.fourier_beta + dt * gate * k_c * e * sin_c
    state.phi = math.fmod(state.phi + phi_dot * dt, TWO_PI)
    if state.phi < 0.0:
        state.phi += TWO_PI
    state.omega = float(np.clip(state.omega + omega_dot * dt, cfg.omega_min, cfg.omega_max))
    # the instantaneous estimate hunts around the true frequency while
    # adapting; export a ~1.5-cycle running mean instead, and track how far
    # the raw estimate strays from it as a settledness measure
    alpha = min(gate * dt * state.omega / (3.0 * math.pi), 1.0)
    state.omega_avg += alpha * (state.omega - state.omega_avg)
    rel = abs(state.omega - state.omega_avg) / max(state.omega_avg, 1e-9)
    alpha_disp = min(gate * dt * state.omega / (2.0 * math.pi), 1.0)
    state.freq_dispersion += alpha_disp * (rel - state.freq_dispersion)
    return state


class InputSelector:
    """Picks the pose component with the largest variance over a sliding
    window; the choice is only revisited while learning is starting up
    (mu < 0.1) so the drive never switches mid-adaptation."""

    def __init__(self, window_s: float, fs_hz: float, dims: int = 7, max_window_s: float = 30.0):
        self._fs = fs_hz
        self._n_min = max(2, int(window_s * fs_hz))
        self._cap = max(self._n_min, int(max_window_s * fs_hz))
        self._n = self._n_min
        self._buf = np.zeros((self._cap, dims))
        self._count = 0
        self._dim = 0
        self._mid = 0.0
        self._halfrange = 1.0
        self._frozen = False

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def frozen(self) -> bool:
        return self._frozen

    def unfreeze(self) -> None:
        """Allow re-selection, e.g. when a new skill is being taught."""
        self._frozen = False

    def update(self, components: np.ndarray, mu: float) -> int:
        self.normalized_sample(components, mu)
        return self._dim

    def normalized_sample(
        self,
        components: np.ndarray,
        mu: float,
        amp: float = 0.05,
        offset: float = 0.45,
        period_hint_s: float | None = None,
    ) -> float | None:
        """Selected component rescaled to a fixed drive envelope.

        Returns None until the window has filled once.  The oscillator's
        gains are tuned for one amplitude scale; mapping whichever pose
        component is selected onto that scale keeps entrainment behavior
        independent of the motion's physical units.  A ``period_hint_s``
        widens the effective window to cover at least one motion period
        (a sub-period window would modulate the estimated range).
        Selection and scale latch once learning is underway (mu >= 0.1
        with a full window) and stay latched until :meth:`unfreeze`, so
        transient dips of the learning level cannot switch the drive
        mid-skill.
        """
        if period_hint_s is not None:
            wanted = int(period_hint_s * self._fs)
            self._n = int(np.clip(wanted, self._n_min, self._cap))
        self._buf[self._count % self._cap] = components
        self._count += 1
        if 2 * self._count < self._n:
            return None
        if not self._frozen:
            # stats drift slowly; refreshing a few times per second is enough
            stride = max(1, self._n // 16)
            if self._count % stride == 0 or self._halfrange == 1.0:
                m = min(self._n, self._count)
                idx = np.arange(self._count - m, self._count) % self._cap
                window = self._buf[idx]
                variances = window.var(axis=0)
                best = int(np.argmax(variances))
                # commitment: each switch re-seeds the normalization and
                # hands the oscillator a drive with an unrelated phase, so
                # keep the current component while it still carries signal
                if best != self._dim and variances[self._dim] < 0.1 * variances[best]:
                    self._dim = best
                col = window[:, self._dim]
                lo, hi = float(col.min()), float(col.max())
                mid = 0.5 * (hi + lo)
                halfrange = max(0.5 * (hi - lo), 1e-6)
                # latch once the envelope estimate has stabilized over a
                # full window: re-seeding it every refresh keeps perturbing
                # the oscillator drive
                if (
                    self._count >= self._n
                    and abs(mid - self._mid) < 0.02 * self._halfrange
                    and abs(halfrange - self._halfrange) < 0.02 * self._halfrange
                ):
                    self._frozen = True
                self._mid = mid
                self._halfrange = halfrange
        y = float(components[self._dim])
        out = offset + amp * (y - self._mid) / self._halfrange
        # a part-filled window under-estimates the range; bound the excess
        lo, hi = offset - 1.5 * amp, offset + 1.5 * amp
        return min(max(out, lo), hi)
