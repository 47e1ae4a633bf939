import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preadaptive_control import (
    ConfigError,
    DivergenceError,
    PlantConfig,
    ReferenceConfig,
    ThetaSchedule,
    plant_derivative,
    reference_derivative,
    rk4_step,
    scenario_schedule,
    theta_at,
)
from preadaptive_control.dynamics import check_bounded, controllability_matrix


# --------------------------------------------------------------------------
# configs

def test_plant_config_validates_dimensions():
    with pytest.raises(ConfigError):
        PlantConfig(A=np.eye(2), B=[1.0, 0.0, 0.0], B1r=[0.0, 0.0], output_index=1)


def test_plant_config_rejects_uncontrollable_pair():
    # B in the kernel of every power of A beyond reach: A = 0, B = e1 spans 1 dim
    with pytest.raises(ConfigError):
        PlantConfig(A=np.zeros((2, 2)), B=[1.0, 0.0], B1r=[0.0, 0.0], output_index=1)


def test_plant_config_rejects_bad_output_index():
    with pytest.raises(ConfigError):
        PlantConfig(A=[[0.0, 1.0], [-1.0, -1.0]], B=[0.0, 1.0], B1r=[0.0, 0.0],
                    output_index=3)


def test_b747_controllable(b747):
    assert np.linalg.matrix_rank(controllability_matrix(b747.A, b747.B)) == 3


def test_b747_matrix_entries(b747):
    assert np.array_equal(b747.A[1], [0.0, -0.32, 0.86])
    assert np.array_equal(b747.B1r, [-1.0, 0.0, 0.0])


def test_reference_config_requires_hurwitz():
    with pytest.raises(ConfigError):
        ReferenceConfig(Ar=np.eye(2), B1r=np.zeros(2), B2r=np.zeros(2))


# --------------------------------------------------------------------------
# schedules

def test_scenario1_lookup_mid_pieces():
    sched = scenario_schedule(1)
    assert np.array_equal(theta_at(sched, 10.0), np.ones(3))
    assert np.array_equal(theta_at(sched, 50.0), 4.0 * np.ones(3))


def test_constant_schedule_lookup():
    sched = ThetaSchedule(pieces=[(0.0, np.zeros(3))], horizon=10.0)
    assert np.array_equal(theta_at(sched, 3.0), np.zeros(3))


def test_theta_at_right_continuous_at_boundary():
    sched = scenario_schedule(1)
    dt = 1e-3
    for tb in sched.jump_times:
        new = theta_at(sched, tb)
        old = theta_at(sched, tb - dt / 2.0)
        assert not np.array_equal(new, old)
        assert np.array_equal(new, theta_at(sched, tb + dt / 2.0))


def test_theta_at_rejects_out_of_range():
    sched = scenario_schedule(1)
    with pytest.raises(ValueError):
        theta_at(sched, -0.1)
    with pytest.raises(ValueError):
        theta_at(sched, 60.1)


def test_schedule_rejects_nonzero_first_piece():
    with pytest.raises(ConfigError):
        ThetaSchedule(pieces=[(1.0, np.zeros(3))], horizon=10.0)


def test_schedule_rejects_decreasing_starts():
    with pytest.raises(ConfigError):
        ThetaSchedule(
            pieces=[(0.0, np.zeros(3)), (5.0, np.ones(3)), (5.0, np.ones(3))],
            horizon=10.0,
        )


def test_schedule_enforces_bounds_box():
    with pytest.raises(ConfigError):
        ThetaSchedule(
            pieces=[(0.0, np.zeros(3)), (1.0, 11.0 * np.ones(3))],
            horizon=10.0,
            bounds=(-10.0 * np.ones(3), 10.0 * np.ones(3)),
        )


# --------------------------------------------------------------------------
# derivatives

def test_plant_derivative_equilibrium(b747):
    out = plant_derivative(b747, np.zeros(3), 0.0, np.zeros(3), 0.0)
    assert np.array_equal(out, np.zeros(3))


def test_plant_derivative_b747_column(b747):
    out = plant_derivative(b747, np.array([0.0, 1.0, 0.0]), 0.0, np.zeros(3), 0.0)
    assert np.allclose(out, [1.0, -0.32, -0.93])


def test_plant_derivative_control_cancels_uncertainty(b747):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(3)
    theta = rng.standard_normal(3)
    out = plant_derivative(b747, x, -(theta @ x), theta, 0.0)
    assert np.allclose(out, b747.A @ x, atol=1e-14)


def test_reference_derivative_diagonal_decay():
    ref = ReferenceConfig(Ar=-np.eye(2), B1r=np.zeros(2), B2r=np.zeros(2))
    out = reference_derivative(ref, np.array([1.0, 2.0]), 0.0)
    assert np.array_equal(out, [-1.0, -2.0])


def test_reference_derivative_k0_zero_drops_b2r():
    ref = ReferenceConfig(Ar=-np.eye(2), B1r=np.array([1.0, 0.0]),
                          B2r=0.0 * np.array([1.0, 1.0]))
    out = reference_derivative(ref, np.zeros(2), 0.3)
    assert np.allclose(out, [0.3, 0.0])


# --------------------------------------------------------------------------
# integration

def test_rk4_constant_derivative_exact():
    out = rk4_step(lambda t, y: np.zeros_like(y), np.array([5.0]), 0.0, 1e-3)
    assert out[0] == 5.0


def test_rk4_linear_growth_exact():
    out = rk4_step(lambda t, y: np.ones_like(y), np.array([0.0]), 0.0, 0.5)
    assert out[0] == 0.5


def test_rk4_exponential_decay_accuracy():
    out = rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)
    assert abs(out[0] - np.exp(-0.1)) < 1e-7


def test_rk4_fourth_order_convergence():
    # integrate y' = -y over [0, 1]; halving dt should cut the error ~16x
    def integrate(dt):
        y = np.array([1.0])
        for k in range(int(round(1.0 / dt))):
            y = rk4_step(lambda t, v: -v, y, k * dt, dt)
        return abs(y[0] - np.exp(-1.0))

    ratio = integrate(0.02) / integrate(0.01)
    assert 8.0 <= ratio <= 32.0


def test_rk4_raises_on_nonfinite():
    with pytest.raises(DivergenceError):
        rk4_step(lambda t, y: y * np.inf, np.array([1.0]), 0.0, 1e-3)


def test_check_bounded_flags_component():
    with pytest.raises(DivergenceError) as exc:
        check_bounded(np.array([0.0, 2e6, 0.0]), 1.5)
    assert exc.value.component == 1


@settings(max_examples=25, deadline=None)
@given(st.floats(-5.0, 5.0), st.floats(1e-4, 0.1))
def test_rk4_linear_ode_matches_exponential(x0, dt):
    out = rk4_step(lambda t, y: -2.0 * y, np.array([x0]), 0.0, dt)
    assert abs(out[0] - x0 * np.exp(-2.0 * dt)) < 1e-4 * max(1.0, abs(x0))
