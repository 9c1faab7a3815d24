"""Tests for the open-loop geometric baseline controller."""

import math

import numpy as np
import pytest

from softdeepc.baseline import BaselineController, baseline_control
from softdeepc.kinematics import ArmGeometry, cable_lengths, cc_forward, cc_inverse
from softdeepc.plants import DisturbanceConfig, SoftArmPlant


@pytest.fixture
def ctrl():
    return BaselineController(geometry=ArmGeometry())


class TestBaselineControl:
    def test_straight_target_zero_command(self, ctrl):
        cmd = baseline_control([0.0, 0.0, 90.0], ctrl)
        np.testing.assert_allclose(cmd.u, np.zeros(3), atol=1e-12)
        assert not cmd.projected
        assert not cmd.saturated

    def test_composed_oracle_value(self, ctrl):
        # compose the module's own inverse/cable oracles for phi=pi/3, gamma=0:
        # raw commands (41.89, -20.94, -20.94); equal pretension lifts the
        # slack cables to zero, putting cable 1 at 62.83
        target = cc_forward(math.pi / 3, 0.0, 90.0)
        cmd = baseline_control(target, ctrl)
        inv = cc_inverse(target, 90.0)
        lengths = cable_lengths(inv.phi_b, inv.gamma_g, ctrl.geometry)
        raw = (90.0 - lengths) / 0.25
        expected = raw - np.min(raw)
        np.testing.assert_allclose(cmd.u, expected, rtol=1e-12)
        assert cmd.u[0] == pytest.approx(20.0 * math.pi, rel=1e-12)
        assert cmd.u[1] == pytest.approx(0.0, abs=1e-12)
        assert cmd.u[2] == pytest.approx(0.0, abs=1e-12)

    def test_slackest_cable_sits_on_lower_bound(self, ctrl):
        rng = np.random.default_rng(0)
        for _ in range(50):
            phi = rng.uniform(0.05, 1.2)
            gamma = rng.uniform(0.0, 2 * math.pi)
            cmd = baseline_control(cc_forward(phi, gamma, 90.0), ctrl)
            if not cmd.saturated:
                assert np.min(cmd.u) == pytest.approx(0.0, abs=1e-9)

    def test_commands_always_within_bounds(self, ctrl):
        rng = np.random.default_rng(1)
        for _ in range(200):
            phi = rng.uniform(0.0, math.pi * 0.9)
            gamma = rng.uniform(0.0, 2 * math.pi)
            cmd = baseline_control(cc_forward(phi, gamma, 90.0), ctrl)
            assert np.all(cmd.u >= 0.0)
            assert np.all(cmd.u <= 90.0)

    def test_extreme_bend_saturates(self, ctrl):
        cmd = baseline_control(cc_forward(2.5, 0.3, 90.0), ctrl)
        assert cmd.saturated
        assert np.max(cmd.u) == 90.0

    def test_off_surface_target_flagged(self, ctrl):
        tip = cc_forward(0.8, 0.2, 90.0) * 0.8
        cmd = baseline_control(tip, ctrl)
        assert cmd.projected

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError, match="u_lower"):
            BaselineController(geometry=ArmGeometry(), u_lower=5.0, u_upper=5.0)


class TestNominalPlantExactness:
    def test_steady_state_reaches_target_exactly(self, ctrl):
        # the geometric model is exact for the nominal plant: after the lag
        # settles, tracking error collapses to numerical noise
        rng = np.random.default_rng(2)
        plant = SoftArmPlant(disturbances=DisturbanceConfig.none(), seed=0)
        for _ in range(20):
            phi = rng.uniform(0.05, 1.2)
            gamma = rng.uniform(0.0, 2 * math.pi)
            target = cc_forward(phi, gamma, 90.0)
            cmd = baseline_control(target, ctrl)
            if cmd.saturated:
                continue
            plant.reset()
            tip = None
            for _ in range(400):
                tip = plant.step(cmd.u)
            assert np.linalg.norm(tip - target) <= 0.1

    def test_disturbed_plant_misses_target(self, ctrl):
        # with curvature-model violations on, the same open-loop command
        # lands visibly off target
        plant = SoftArmPlant(
            disturbances=DisturbanceConfig(gravity_sag=0.06, stiffness_eps=0.08,
                                           noise_std=0.0),
            seed=0,
        )
        target = cc_forward(0.8, 0.5, 90.0)
        cmd = baseline_control(target, ctrl)
        tip = None
        for _ in range(400):
            tip = plant.step(cmd.u)
        assert np.linalg.norm(tip - target) > 1.0
