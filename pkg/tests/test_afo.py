import math

import numpy as np
import pytest

from teleteach.afo import (
    AfoConfig,
    AfoState,
    InputSelector,
    afo_step,
    make_state,
    predict,
)

TOY_OMEGA = 2.0 * 2.0 * math.pi * 0.3  # rad/s


def toy_signal(t):
    return 0.45 + 0.05 * math.sin(TOY_OMEGA * t)


def run_toy(cfg, duration_s, mu_fn=lambda t: 0.0, fs=500.0):
    st = make_state(cfg)
    dt = 1.0 / fs
    for k in range(int(duration_s * fs)):
        t = k * dt
        afo_step(st, toy_signal(t), mu_fn(t), dt, cfg)
    return st


class TestAfoStep:
    def test_zero_error_leaves_frequency(self):
        cfg = AfoConfig()
        st = make_state(cfg)
        st.primed = True
        st.fourier_alpha[0] = 0.45  # predicts the constant input exactly
        before = st.omega
        afo_step(st, 0.45, mu=0.0, dt=2e-3, cfg=cfg)
        assert st.omega == before

    def test_mu_one_freezes_adaptation_but_not_phase(self):
        cfg = AfoConfig()
        st = make_state(cfg)
        st.primed = True
        st.omega = 3.0
        phi0 = st.phi
        a0 = st.fourier_alpha.copy()
        b0 = st.fourier_beta.copy()
        for k in range(100):
            afo_step(st, toy_signal(k * 2e-3), mu=1.0, dt=2e-3, cfg=cfg)
        assert st.omega == 3.0
        assert np.array_equal(st.fourier_alpha, a0)
        assert np.array_equal(st.fourier_beta, b0)
        assert st.phi == pytest.approx(math.fmod(phi0 + 3.0 * 0.2, 2 * math.pi), abs=1e-12)

    def test_converges_on_toy_signal_within_20s(self):
        st = run_toy(AfoConfig(), 20.0)
        assert abs(st.omega - TOY_OMEGA) / TOY_OMEGA < 0.05

    @pytest.mark.parametrize("ratio", [0.5, 0.7, 1.4, 2.0])
    def test_basin_within_factor_two(self, ratio):
        cfg = AfoConfig(omega0=ratio * TOY_OMEGA)
        st = run_toy(cfg, 20.0)
        assert abs(st.omega - TOY_OMEGA) / TOY_OMEGA < 0.05

    def test_clamped_for_wild_input(self, rng):
        cfg = AfoConfig()
        st = make_state(cfg)
        for _ in range(5000):
            afo_step(st, float(rng.uniform(-100, 100)), mu=0.0, dt=2e-3, cfg=cfg)
            assert cfg.omega_min <= st.omega <= cfg.omega_max

    def test_exactly_constant_after_freeze(self):
        cfg = AfoConfig()
        mu_fn = lambda t: 1.0 if t >= 10.0 else 0.0
        st = run_toy(cfg, 12.0, mu_fn)
        frozen = st.omega
        dt = 1.0 / 500.0
        for k in range(2000):
            afo_step(st, toy_signal(12.0 + k * dt), mu=1.0, dt=dt, cfg=cfg)
        assert st.omega == frozen

    def test_rejects_bad_arguments(self):
        cfg = AfoConfig()
        st = make_state(cfg)
        with pytest.raises(ValueError):
            afo_step(st, 0.0, mu=0.0, dt=0.0, cfg=cfg)
        with pytest.raises(ValueError):
            afo_step(st, 0.0, mu=1.5, dt=1e-3, cfg=cfg)

    def test_prediction_matches_series(self):
        cfg = AfoConfig(harmonics=2)
        st = AfoState(
            phi=0.7,
            omega=3.0,
            fourier_alpha=np.array([0.4, 0.1, -0.2]),
            fourier_beta=np.array([0.0, 0.3, 0.05]),
        )
        expected = (
            0.4
            + 0.1 * math.cos(0.7)
            - 0.2 * math.cos(1.4)
            + 0.3 * math.sin(0.7)
            + 0.05 * math.sin(1.4)
        )
        assert predict(st) == pytest.approx(expected, abs=1e-12)


class TestInputSelector:
    def test_picks_largest_variance_component(self, rng):
        sel = InputSelector(window_s=2.0, fs_hz=500.0, dims=7)
        for k in range(1200):
            t = k / 500.0
            comp = np.zeros(7)
            comp[1] = 0.01 * math.sin(3.0 * t)
            comp[4] = 0.2 * math.sin(3.0 * t)  # dominant
            sel.update(comp, mu=0.0)
        assert sel.dim == 4

    def test_holds_selection_once_learning_underway(self):
        sel = InputSelector(window_s=0.1, fs_hz=100.0, dims=3)
        for k in range(100):
            comp = np.array([math.sin(k / 5.0), 0.0, 0.0])
            sel.update(comp, mu=0.0)
        assert sel.dim == 0
        # a louder component appears, but mu is already past the gate
        for k in range(100):
            comp = np.array([math.sin(k / 5.0), 10.0 * math.sin(k / 3.0), 0.0])
            sel.update(comp, mu=0.5)
        assert sel.dim == 0


class TestConfig:
    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            AfoConfig(omega_min=5.0, omega_max=1.0)
        with pytest.raises(ValueError):
            AfoConfig(harmonics=0)
