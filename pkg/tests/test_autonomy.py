import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teleteach.autonomy import (
    MU_ONE_TOL,
    AllocationConfig,
    AutonomyState,
    eta_step,
    intervention_index,
    mu_step,
    skill_confidence,
    weighted_error_norm,
)
from teleteach.geometry import Wrench

DT = 2e-3  # allocation runs at the learning rate


class TestSkillConfidence:
    def test_zero_error(self):
        assert skill_confidence(0.0, AllocationConfig()) == 0.0

    def test_threshold_point(self):
        cfg = AllocationConfig()
        assert skill_confidence(cfg.lambda_err, cfg) == pytest.approx(1.0, abs=1e-12)

    def test_quartic_growth(self):
        cfg = AllocationConfig()
        assert skill_confidence(2.0 * cfg.lambda_err, cfg) == pytest.approx(16.0, rel=1e-12)

    def test_negative_error_rejected(self):
        with pytest.raises(ValueError):
            skill_confidence(-1.0, AllocationConfig())


class TestInterventionIndex:
    def test_zero_wrench(self):
        assert intervention_index(Wrench.zero(), AllocationConfig()) == 0.0

    def test_force_threshold_point(self):
        cfg = AllocationConfig()
        w = Wrench(np.array([cfg.lambda_f, 0.0, 0.0]), np.zeros(3))
        assert intervention_index(w, cfg) == pytest.approx(1.0, rel=1e-12)

    def test_force_and_moment_sum(self):
        cfg = AllocationConfig()
        w = Wrench(
            np.array([0.0, cfg.lambda_f, 0.0]),
            np.array([0.0, 0.0, cfg.lambda_m]),
        )
        assert intervention_index(w, cfg) == pytest.approx(2.0, rel=1e-12)


class TestMuStep:
    def test_escapes_zero(self):
        cfg = AllocationConfig()
        state = AutonomyState(mu=0.0)
        mu_step(state, i_s=0.0, dt=DT, cfg=cfg)
        assert state.mu == pytest.approx(cfg.epsilon * DT, rel=1e-12)

    def test_pinned_at_zero_under_high_error(self):
        state = AutonomyState(mu=0.0)
        mu_step(state, i_s=16.0, dt=DT, cfg=AllocationConfig())
        assert state.mu == 0.0

    def test_interior_rate_value(self):
        cfg = AllocationConfig(rho=1.0, epsilon=0.01)
        state = AutonomyState(mu=0.5)
        mu_step(state, i_s=0.0, dt=DT, cfg=cfg)
        assert (state.mu - 0.5) / DT == pytest.approx(0.51, rel=1e-9)

    def test_pinned_at_one_under_low_error(self):
        state = AutonomyState(mu=1.0)
        mu_step(state, i_s=0.0, dt=DT, cfg=AllocationConfig())
        assert state.mu == 1.0

    def test_reaches_one_within_settling_bound(self):
        cfg = AllocationConfig()
        state = AutonomyState(mu=0.0)
        bound_s = cfg.rho * np.log(1.0 / (cfg.rho * cfg.epsilon)) + 2.0
        steps = int(bound_s / DT)
        for _ in range(steps):
            mu_step(state, i_s=0.0, dt=DT, cfg=cfg)
        assert state.mu == 1.0

    def test_collapses_under_sustained_error(self):
        cfg = AllocationConfig()
        state = AutonomyState(mu=1.0)
        for _ in range(int(2.0 / DT)):
            mu_step(state, i_s=16.0, dt=DT, cfg=cfg)
        assert state.mu == 0.0


class TestEtaStep:
    def test_gate_closed_below_mu_one(self):
        state = AutonomyState(mu=0.9, eta=0.0)
        eta_step(state, i_h=0.0, dt=DT, cfg=AllocationConfig())
        assert state.eta == 0.0

    def test_interior_rise_with_gate_open(self):
        cfg = AllocationConfig(rho=1.0, epsilon=0.01)
        state = AutonomyState(mu=1.0, eta=0.5)
        eta_step(state, i_h=0.0, dt=DT, cfg=cfg)
        assert (state.eta - 0.5) / DT == pytest.approx(0.51, rel=1e-9)

    def test_decays_regardless_of_gate(self):
        cfg = AllocationConfig(rho=1.0, epsilon=0.01)
        state = AutonomyState(mu=0.3, eta=0.5)
        eta_step(state, i_h=16.0, dt=DT, cfg=cfg)
        assert (state.eta - 0.5) / DT == pytest.approx(-7.65, rel=1e-9)

    def test_mu_one_tolerance_opens_gate(self):
        state = AutonomyState(mu=1.0 - 0.5 * MU_ONE_TOL, eta=0.5)
        eta_step(state, i_h=0.0, dt=DT, cfg=AllocationConfig())
        assert state.eta > 0.5

    def test_full_intervention_drops_eta_fast(self):
        cfg = AllocationConfig()
        state = AutonomyState(mu=1.0, eta=1.0)
        t = 0.0
        while state.eta > 0.1:
            eta_step(state, i_h=16.0, dt=DT, cfg=cfg)
            t += DT
        assert t < 1.0


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_levels_stay_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    cfg = AllocationConfig()
    state = AutonomyState(mu=float(rng.uniform(0, 1)), eta=float(rng.uniform(0, 1)))
    for _ in range(60):
        i_s = float(rng.uniform(0, 40))
        i_h = float(rng.uniform(0, 40))
        mu_step(state, i_s, DT, cfg)
        eta_step(state, i_h, DT, cfg)
        assert 0.0 <= state.mu <= 1.0
        assert 0.0 <= state.eta <= 1.0


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_eta_never_rises_while_gate_closed(seed):
    rng = np.random.default_rng(seed)
    cfg = AllocationConfig()
    state = AutonomyState(mu=float(rng.uniform(0, 0.999)), eta=float(rng.uniform(0, 1)))
    for _ in range(60):
        i_h = float(rng.uniform(0, 40))
        before = state.eta
        if state.mu < 1.0 - MU_ONE_TOL:
            eta_step(state, i_h, DT, cfg)
            assert state.eta <= before
        else:
            eta_step(state, i_h, DT, cfg)
        mu_step(state, float(rng.uniform(0, 40)), DT, cfg)
