import numpy as np
import pytest

from teleosim.geometry import Transform, quat_about_z
from teleosim.hands import Calibration, TargetSet, hand_template, map_hand_to_targets
from teleosim.ik import (
    INFEASIBLE_RELAXED,
    IkParams,
    integrate,
    solve_velocity,
    tracking_error,
    velocity_bounds,
)
from teleosim.kinematics import forward_kinematics, min_self_distance
from teleosim.parsing import parse_robot

from conftest import ASSETS


def tip_target(theta, aperture=1.0):
    return TargetSet([("tip", np.array([np.cos(theta), np.sin(theta), 0.0]))],
                     aperture)


# ---------------------------------------------------------------------------
# velocity bounds
# ---------------------------------------------------------------------------

def test_bounds_inactive_at_midrange(planar2):
    params = IkParams(dt=0.005).validate()
    v_lo, v_hi = velocity_bounds(planar2, np.zeros(2), params)
    assert np.allclose(v_lo, [-2.0, -2.0]) and np.allclose(v_hi, [2.0, 2.0])


def test_bound_is_zero_exactly_at_limit(planar2):
    params = IkParams(dt=0.005)
    lo, hi = planar2.joint_limits()
    q = np.array([hi[0], 0.0])
    _, v_hi = velocity_bounds(planar2, q, params)
    assert v_hi[0] == 0.0


def test_shield_arithmetic():
    text = (ASSETS / "planar1.robot").read_text()
    model = parse_robot(text.replace("limits -3.141592653589793 3.141592653589793",
                                     "limits -1 1"))
    params = IkParams(dt=0.005, limit_horizon=1.0)
    q = np.array([1.0 - 0.001])
    _, v_hi = velocity_bounds(model, q, params)
    assert v_hi[0] == pytest.approx(0.2, abs=1e-12)


def test_bounds_bracket_zero_inside_limits(dualarm7):
    rng = np.random.default_rng(5)
    params = IkParams()
    lo, hi = dualarm7.joint_limits()
    for _ in range(50):
        q = rng.uniform(lo, hi)
        v_lo, v_hi = velocity_bounds(dualarm7, q, params)
        assert np.all(v_lo <= 0.0) and np.all(v_hi >= 0.0)


# ---------------------------------------------------------------------------
# solve_velocity
# ---------------------------------------------------------------------------

def test_zero_error_gives_zero_velocity(planar2):
    params = IkParams()
    fk = forward_kinematics(planar2, np.array([0.3, -0.4]))
    targets = TargetSet([("tip", fk.site_position("tip")),
                         ("mid", fk.site_position("mid"))])
    cmd = solve_velocity(planar2, np.array([0.3, -0.4]), targets, params)
    assert np.all(cmd.v == 0.0)
    assert cmd.status == "converged"


def test_planar1_closed_form(planar1):
    # 1-DoF: v = alpha * sin(theta) / (1 + damping), theta small
    theta = 0.01
    params = IkParams(alpha=10.0, damping=1e-6)
    cmd = solve_velocity(planar1, np.zeros(1), tip_target(theta), params)
    closed_form = params.alpha * np.sin(theta) / (1.0 + params.damping)
    assert abs(cmd.v[0] - closed_form) <= 1e-9
    assert abs(cmd.v[0] - 0.09999) <= 1e-4


def test_planar1_velocity_limit_clamps():
    text = (ASSETS / "planar1.robot").read_text()
    model = parse_robot(text.replace("vlimit 1.0", "vlimit 0.05"))
    cmd = solve_velocity(model, np.zeros(1), tip_target(0.01), IkParams())
    assert cmd.v[0] == pytest.approx(0.05, abs=0)
    assert cmd.status == "converged"
    assert ("hi", 0) in cmd.active_constraints


def test_nan_input_rejected(planar1):
    with pytest.raises(ValueError):
        solve_velocity(planar1, np.array([np.nan]), tip_target(0.1), IkParams())
    with pytest.raises(ValueError):
        solve_velocity(planar1, np.zeros(1),
                       TargetSet([("tip", np.array([np.nan, 0, 0]))]), IkParams())


def test_unknown_target_site_rejected(planar1):
    with pytest.raises(KeyError):
        solve_velocity(planar1, np.zeros(1),
                       TargetSet([("slartibartfast", np.zeros(3))]), IkParams())


def test_descent_property(planar2):
    params = IkParams(dt=0.01)
    rng = np.random.default_rng(77)
    lo, hi = planar2.joint_limits()
    for _ in range(100):
        q = rng.uniform(lo * 0.9, hi * 0.9)
        radius = rng.uniform(0.2, 1.8)
        angle = rng.uniform(-np.pi, np.pi)
        targets = TargetSet([("tip", np.array([radius * np.cos(angle),
                                               radius * np.sin(angle), 0.0]))])
        before = tracking_error(planar2, q, targets)
        cmd = solve_velocity(planar2, q, targets, params)
        q_next = integrate(planar2, q, cmd.v, params.dt)
        after = tracking_error(planar2, q_next, targets)
        assert after <= before + 1e-12


def test_planar2_converges_within_two_seconds(planar2):
    params = IkParams(dt=0.005)
    q = np.array([0.3, 0.2])
    targets = TargetSet([("tip", np.array([0.5, 1.0, 0.0]))])
    for _ in range(400):  # 2 s at 5 ms
        cmd = solve_velocity(planar2, q, targets, params)
        q = integrate(planar2, q, cmd.v, params.dt)
    fk = forward_kinematics(planar2, q)
    err = np.linalg.norm(fk.site_position("tip") - targets.entries[0][1])
    assert err <= 1e-3


def test_bound_compliance_random_sweep(planar2, dualarm7):
    rng = np.random.default_rng(123)
    params = IkParams()
    for model, count in ((planar2, 1500), (dualarm7, 200)):
        lo, hi = model.joint_limits()
        site_names = [s.name for s in model.sites]
        for _ in range(count):
            q = rng.uniform(lo, hi)
            entries = [(name, rng.uniform(-1.5, 1.5, size=3))
                       for name in rng.choice(site_names,
                                              size=min(3, len(site_names)),
                                              replace=False)]
            cmd = solve_velocity(model, q, TargetSet(entries), params)
            v_lo, v_hi = velocity_bounds(model, q, params)
            assert np.all(cmd.v >= v_lo) and np.all(cmd.v <= v_hi)


def hands_together_targets(dualarm7, separation):
    """Both palms commanded toward facing poses `separation` apart in y."""
    left = hand_template(Transform((0.45, separation / 2, 0.35),
                                   quat_about_z(-np.pi / 2)), 0.0)
    right = hand_template(Transform((0.45, -separation / 2, 0.35),
                                    quat_about_z(np.pi / 2)), 0.0)
    return [map_hand_to_targets(left, dualarm7, gripper_index=0),
            map_hand_to_targets(right, dualarm7, gripper_index=1)]


def test_safety_invariant_near_collision(dualarm7):
    params = IkParams(dt=0.005)
    q = dualarm7.home_q()
    assert min_self_distance(dualarm7, q).min_distance >= params.d_margin
    separations = np.linspace(0.6, 0.0, 300)  # command palms into each other
    for sep in separations:
        targets = hands_together_targets(dualarm7, sep)
        cmd = solve_velocity(dualarm7, q, targets, params)
        q = integrate(dualarm7, q, cmd.v, params.dt)
        if cmd.status != INFEASIBLE_RELAXED:
            d = min_self_distance(dualarm7, q).min_distance
            assert d >= params.d_margin - 1e-6, f"clearance {d} at sep {sep}"


def test_aperture_joint_left_alone_by_tracker(dualarm7):
    # Tracking must not command the gripper slide joints.
    params = IkParams()
    q = dualarm7.home_q()
    targets = hands_together_targets(dualarm7, 0.5)
    cmd = solve_velocity(dualarm7, q, targets, params)
    aperture_dofs = [dualarm7.joints[g.aperture_joint].dof_index
                     for g in dualarm7.grippers]
    assert np.all(cmd.v[aperture_dofs] == 0.0)
    assert np.any(cmd.v != 0.0)


OVERLAPPING = """
robot stuck {
  link base {}
  link mid {}
  link far {}
  joint j1 { kind hinge; parent base; child mid;
             origin 0.05 0 0  1 0 0 0; axis 0 0 1; limits -3 3; vlimit 0.1; }
  joint j2 { kind hinge; parent mid; child far;
             origin 0.05 0 0  1 0 0 0; axis 0 0 1; limits -3 3; vlimit 0.1; }
  site tip { link far; offset 0.05 0 0; }
  sphere { link base; center 0 0 0; radius 0.08; }
  sphere { link far; center 0 0 0; radius 0.08; }
}
"""


def test_infeasible_collision_is_relaxed_within_box():
    # Spheres start interpenetrating; the clearance jump needed in one tick
    # exceeds what the velocity box allows, so the row must be relaxed.
    model = parse_robot(OVERLAPPING)
    params = IkParams(dt=0.005)
    d0 = min_self_distance(model, np.zeros(2)).min_distance
    assert d0 < 0  # penetrating at rest
    cmd = solve_velocity(model, np.zeros(2),
                         TargetSet([("tip", np.array([0.15, 0.0, 0.0]))]), params)
    assert cmd.status == INFEASIBLE_RELAXED
    v_lo, v_hi = velocity_bounds(model, np.zeros(2), params)
    assert np.all(cmd.v >= v_lo) and np.all(cmd.v <= v_hi)


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

def test_integrate_identity(planar2):
    q = np.array([0.5, -0.5])
    assert np.array_equal(integrate(planar2, q, np.zeros(2), 0.005), q)


def test_integrate_arithmetic(planar2):
    q_next = integrate(planar2, np.zeros(2), np.array([1.0, -1.0]), 0.005)
    assert np.allclose(q_next, [0.005, -0.005], atol=0)


def test_integrate_hold_at_limit(planar2):
    lo, hi = planar2.joint_limits()
    q = hi.copy()
    params = IkParams()
    _, v_hi = velocity_bounds(planar2, q, params)
    q_next = integrate(planar2, q, v_hi, params.dt)
    assert np.array_equal(q_next, hi)


# ---------------------------------------------------------------------------
# hand retargeting
# ---------------------------------------------------------------------------

def test_coincident_tips_close_gripper(dualarm7):
    frame = hand_template(Transform.identity(), 1.0)  # fully closed
    ts = map_hand_to_targets(frame, dualarm7)
    assert ts.aperture_command == 0.0


def test_open_hand_full_aperture(dualarm7):
    frame = hand_template(Transform.identity(), 0.0)
    ts = map_hand_to_targets(frame, dualarm7)
    assert ts.aperture_command == pytest.approx(1.0)


def test_grip_to_aperture_is_linear(dualarm7):
    for grip in np.linspace(0, 1, 11):
        frame = hand_template(Transform.identity(), grip)
        ts = map_hand_to_targets(frame, dualarm7)
        assert ts.aperture_command == pytest.approx(1.0 - grip, abs=1e-12)


def test_identity_calibration_maps_keypoints_exactly(dualarm7):
    frame = hand_template(Transform((0.4, 0.1, 0.3)), 0.3)
    ts = map_hand_to_targets(frame, dualarm7, Calibration())
    from teleosim.hands import PARALLEL_JAW_KEYPOINTS
    for (site, target), kp in zip(ts.entries, PARALLEL_JAW_KEYPOINTS):
        assert np.array_equal(target, frame.positions[kp])


def test_affine_calibration_example(dualarm7):
    frame = hand_template(Transform.identity(), 0.0)
    frame.positions[:] = 0.0
    frame.positions[4] = (0.1, 0.0, 0.0)  # thumb tip
    cal = Calibration(Transform((1.0, 0.0, 0.0)), scale=2.0)
    ts = map_hand_to_targets(frame, dualarm7, cal)
    assert np.allclose(ts.entries[0][1], [1.2, 0.0, 0.0], atol=1e-15)


def test_scale_equivariance(dualarm7):
    frame = hand_template(Transform((0.2, -0.1, 0.4), quat_about_z(0.7)), 0.4)
    origin = np.array([0.5, 0.5, 0.0])
    cal1 = Calibration(Transform(origin), 1.3)
    cal2 = Calibration(Transform(origin), 2.6)
    for kp in range(25):
        p = frame.positions[kp]
        # displacement from the calibration origin doubles bit-exactly
        assert np.array_equal(2.0 * cal1.displacement(p), cal2.displacement(p))
        # and the mapped targets agree up to one addition rounding
        assert np.allclose(2.0 * (cal1.apply(p) - origin),
                           cal2.apply(p) - origin, rtol=0, atol=1e-15)
    one = map_hand_to_targets(frame, dualarm7, cal1)
    two = map_hand_to_targets(frame, dualarm7, cal2)
    assert one.aperture_command == two.aperture_command  # scale-independent


def test_gripperless_model_rejected(planar2):
    frame = hand_template(Transform.identity(), 0.0)
    with pytest.raises(ValueError):
        map_hand_to_targets(frame, planar2)


def test_dexterous_scheme_uses_six_keypoints(dualarm7):
    text = (ASSETS / "dualarm7.robot").read_text()
    text = text.replace(
        "gripper { kind parallel_jaw;\n    sites l_thumb_tip l_thumb_in l_index_tip l_index_in;",
        "site l_mid { link l_palm; offset 0.1 0 0; }\n"
        "  site l_ring { link l_palm; offset 0.1 0.01 0; }\n"
        "  gripper { kind dexterous;\n"
        "    sites l_thumb_tip l_index_tip l_mid l_ring l_index_in l_thumb_in;")
    model = parse_robot(text)
    frame = hand_template(Transform.identity(), 0.2)
    ts = map_hand_to_targets(frame, model, gripper_index=0)
    assert len(ts.entries) == 6
    # wrist keypoint is the last entry
    assert np.array_equal(ts.entries[5][1], frame.positions[0])
