import json

import numpy as np
import pytest

from sleap_sim.errors import (
    IkNoConvergence,
    JointLimitError,
    MorphologyError,
    NonFiniteInput,
    ParseError,
)
from sleap_sim.geometry import Frame, axis_angle_mat, rotation_angle, so3_log
from sleap_sim.hand import (
    FINGER_ORDER,
    FINGER_SLICES,
    clamp_joints,
    canonical_hand_path,
    distal_axis_world,
    forward_kinematics,
    jacobian,
    link_segments,
    load_hand_model,
    self_collision_pairs,
    solve_ik,
)


@pytest.fixture(scope="module")
def model():
    return load_hand_model()


def hand_doc():
    return json.loads(canonical_hand_path().read_text())


def random_config(model, rng, margin=0.0):
    lo = model.limits_low() + margin
    hi = model.limits_high() - margin
    return rng.uniform(lo, hi)


# ---------------------------------------------------------------------------
# loading / validation


def test_load_canonical(model):
    assert set(model.fingers) == set(FINGER_ORDER)
    for f in FINGER_ORDER:
        assert len(model.fingers[f].joints) == 5


def test_reject_two_fingers():
    doc = hand_doc()
    doc["fingers"] = doc["fingers"][:2]
    with pytest.raises(MorphologyError):
        load_hand_model(doc)


def test_reject_four_fingers():
    doc = hand_doc()
    extra = json.loads(json.dumps(doc["fingers"][1]))
    extra["name"] = "pinky"
    doc["fingers"].append(extra)
    with pytest.raises(MorphologyError):
        load_hand_model(doc)


def test_reject_wrong_joint_count():
    doc = hand_doc()
    doc["fingers"][0]["joints"] = doc["fingers"][0]["joints"][:4]
    with pytest.raises(MorphologyError):
        load_hand_model(doc)


def test_reject_non_unit_axis():
    doc = hand_doc()
    doc["fingers"][0]["joints"][0]["axis"] = [0.0, 0.0, 2.0]
    with pytest.raises(MorphologyError):
        load_hand_model(doc)


def test_reject_bad_limits():
    doc = hand_doc()
    doc["fingers"][0]["joints"][2]["limits"] = [1.0, -1.0]
    with pytest.raises(MorphologyError):
        load_hand_model(doc)


def test_reject_parallel_thumb():
    # remount the thumb like the index: joint-5 axes become parallel
    doc = hand_doc()
    idx_mount = doc["fingers"][1]["joints"][0]["origin"]["quat"]
    doc["fingers"][0]["joints"][0]["origin"]["quat"] = list(idx_mount)
    with pytest.raises(MorphologyError, match="orthogonal"):
        load_hand_model(doc)


def test_parse_error_on_garbage(tmp_path):
    p = tmp_path / "hand.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_hand_model(p)
    with pytest.raises(ParseError):
        load_hand_model(tmp_path / "missing.json")


def test_thumb_axis_orthogonal_at_zero(model):
    q0 = np.zeros(15)
    t = distal_axis_world(model, "thumb", q0)
    for other in ("index", "ring"):
        assert abs(t @ distal_axis_world(model, other, q0)) < 1e-9


# ---------------------------------------------------------------------------
# forward kinematics

# home cup poses derived by hand from the description: each finger is a
# straight 0.132 m chain from its base along the mount direction
HOME_POS = {
    "thumb": (-0.085, 0.0, 0.112),
    "index": (-0.067, 0.035, 0.095),
    "ring": (0.132, -0.14, 0.05),
    "palm": (0.0, 0.0, 0.0),
}
HOME_AXIS = {
    "thumb": (0, 0, 1),
    "index": (-1, 0, 0),
    "ring": (1, 0, 0),
    "palm": (0, 0, 1),
}


def test_fk_home_pose(model):
    fk = forward_kinematics(model, np.zeros(15))
    assert set(fk) == {"thumb", "index", "ring", "palm"}
    for unit, pos in HOME_POS.items():
        assert np.allclose(fk[unit].pos, pos, atol=1e-12), unit
        assert np.allclose(fk[unit].rot @ [0, 0, 1], HOME_AXIS[unit], atol=1e-12), unit


def test_fk_rotations_orthonormal(model):
    rng = np.random.default_rng(0)
    for _ in range(20):
        fk = forward_kinematics(model, random_config(model, rng))
        for f in fk.values():
            assert np.all(np.abs(f.rot.T @ f.rot - np.eye(3)) < 1e-9)
            assert abs(np.linalg.det(f.rot) - 1) < 1e-9


def test_fk_joint5_pure_spin(model):
    """Rotating only joint 5 spins the cup in place about the joint-5 axis."""
    q = np.zeros(15)
    home = forward_kinematics(model, q)["index"]
    axis = distal_axis_world(model, "index", q)
    q2 = q.copy()
    q2[FINGER_SLICES["index"].start + 4] = np.pi / 2
    spun = forward_kinematics(model, q2)["index"]
    assert np.allclose(spun.pos, home.pos, atol=1e-12)
    expect = axis_angle_mat(axis, np.pi / 2) @ home.rot
    assert rotation_angle(spun.rot.T @ expect) < 1e-12


def test_fk_palm_constant(model):
    rng = np.random.default_rng(1)
    palm0 = forward_kinematics(model, np.zeros(15))["palm"]
    for _ in range(10):
        palm = forward_kinematics(model, random_config(model, rng))["palm"]
        assert palm.almost_equal(palm0, 1e-15, 1e-15)


def test_fk_other_fingers_independent(model):
    """A finger's cup frame depends only on its own five joints."""
    rng = np.random.default_rng(2)
    q = random_config(model, rng)
    base = forward_kinematics(model, q)["ring"]
    q2 = q.copy()
    q2[FINGER_SLICES["thumb"]] = random_config(model, rng)[FINGER_SLICES["thumb"]]
    q2[FINGER_SLICES["index"]] = 0.3
    assert forward_kinematics(model, q2)["ring"].almost_equal(base, 1e-15, 1e-15)


def test_fk_rejects_non_finite(model):
    q = np.zeros(15)
    q[3] = np.nan
    with pytest.raises(NonFiniteInput):
        forward_kinematics(model, q)
    with pytest.raises(NonFiniteInput):
        forward_kinematics(model, np.zeros(14))


def test_fk_and_jacobian_reject_out_of_limit(model):
    q = np.zeros(15)
    q[2] = model.limits_high()[2] + 0.1
    with pytest.raises(JointLimitError):
        forward_kinematics(model, q)
    with pytest.raises(JointLimitError):
        jacobian(model, "thumb", q)
    # exactly at the limit is legal
    forward_kinematics(model, model.limits_high())


# ---------------------------------------------------------------------------
# jacobian (finite-difference oracle)


def fd_jacobian(model, finger, q, eps=1e-7):
    fk0 = forward_kinematics(model, q)[finger]
    J = np.zeros((6, 5))
    sl = FINGER_SLICES[finger]
    for i in range(5):
        qp = q.copy()
        qp[sl.start + i] += eps
        fk1 = forward_kinematics(model, qp)[finger]
        J[0:3, i] = (fk1.pos - fk0.pos) / eps
        J[3:6, i] = so3_log(fk1.rot @ fk0.rot.T) / eps
    return J


def test_jacobian_matches_finite_difference(model):
    rng = np.random.default_rng(42)
    for _ in range(100):
        q = random_config(model, rng, margin=0.01)
        finger = FINGER_ORDER[rng.integers(3)]
        J = jacobian(model, finger, q)
        assert np.linalg.norm(J - fd_jacobian(model, finger, q)) < 1e-5


def test_jacobian_joint5_column(model):
    """Joint-5 translational column is axis x lever from joint to cup rim."""
    rng = np.random.default_rng(5)
    q = random_config(model, rng)
    from sleap_sim.hand import chain_frames

    for finger in FINGER_ORDER:
        frames = chain_frames(model, finger, q[FINGER_SLICES[finger]])
        axis = frames[4].rot @ model.fingers[finger].joints[4].axis
        lever = frames[5].pos - frames[4].pos
        J = jacobian(model, finger, q)
        assert np.allclose(J[0:3, 4], np.cross(axis, lever), atol=1e-12)
        assert np.allclose(J[3:6, 4], axis, atol=1e-12)


def test_jacobian_singular_when_extended(model):
    # straight chain: the three parallel pitch joints lose a direction
    s = np.linalg.svd(jacobian(model, "index", np.zeros(15)), compute_uv=False)
    assert s[-1] < 1e-10


# ---------------------------------------------------------------------------
# clamp


def test_clamp_props(model):
    rng = np.random.default_rng(9)
    q = rng.uniform(-10, 10, size=15)
    c = clamp_joints(model, q)
    assert np.all(c >= model.limits_low()) and np.all(c <= model.limits_high())
    assert np.allclose(clamp_joints(model, c), c)
    inside = random_config(model, rng)
    assert np.allclose(clamp_joints(model, inside), inside)
    with pytest.raises(NonFiniteInput):
        clamp_joints(model, np.full(15, np.inf))


# ---------------------------------------------------------------------------
# inverse kinematics


def test_ik_round_trip_100(model):
    rng = np.random.default_rng(2024)
    n_ok = 0
    for _ in range(100):
        finger = FINGER_ORDER[rng.integers(3)]
        q_star = random_config(model, rng, margin=0.05)
        target = forward_kinematics(model, q_star)[finger]
        seed = np.clip(
            q_star + rng.uniform(-0.1, 0.1, size=15), model.limits_low(), model.limits_high()
        )
        q_sol = solve_ik(model, finger, target, seed=seed)
        got = forward_kinematics(model, q_sol)[finger]
        assert np.linalg.norm(got.pos - target.pos) <= 1e-4
        assert rotation_angle(got.rot.T @ target.rot) <= 1e-3
        assert np.all(q_sol >= model.limits_low()) and np.all(q_sol <= model.limits_high())
        n_ok += 1
    assert n_ok == 100


def test_ik_exact_seed_is_fixed_point(model):
    rng = np.random.default_rng(55)
    seed = random_config(model, rng, margin=0.05)
    target = forward_kinematics(model, seed)["ring"]
    assert np.array_equal(solve_ik(model, "ring", target, seed=seed), seed)


def test_ik_unreachable_raises(model):
    target = Frame(np.eye(3), [1.0, 1.0, 1.0])
    with pytest.raises(IkNoConvergence):
        solve_ik(model, "index", target)


def test_ik_leaves_other_fingers_alone(model):
    rng = np.random.default_rng(77)
    seed = random_config(model, rng, margin=0.3)
    q_star = random_config(model, rng, margin=0.05)
    target = forward_kinematics(model, q_star)["thumb"]
    sol = solve_ik(model, "thumb", target, seed=seed, pos_tol=1e-3, rot_tol=1e-2)
    for f in ("index", "ring"):
        assert np.allclose(sol[FINGER_SLICES[f]], seed[FINGER_SLICES[f]])


def test_ik_axis_only_mode(model):
    """Position + cup-axis targets converge far below the full-pose tolerance."""
    rng = np.random.default_rng(31)
    for _ in range(10):
        q_star = random_config(model, rng, margin=0.2)
        cup = forward_kinematics(model, q_star)["index"]
        q_sol = solve_ik(
            model, "index", cup, seed=None, axis_only=True,
            pos_tol=1e-9, rot_tol=1e-9, max_iters=300,
        )
        got = forward_kinematics(model, q_sol)["index"]
        assert np.linalg.norm(got.pos - cup.pos) <= 1e-9
        cos = np.clip((got.rot @ [0, 0, 1]) @ (cup.rot @ [0, 0, 1]), -1, 1)
        assert np.arccos(cos) <= 1e-8


# ---------------------------------------------------------------------------
# self collision


def test_no_collision_at_home(model):
    assert self_collision_pairs(model, np.zeros(15)) == []


def test_collision_when_fingers_share_a_point(model):
    """Drive index and ring cups to the same spot: capsules must overlap."""
    target_pos = np.array([0.0, -0.02, 0.05])
    qa = solve_ik(model, "index", Frame(axis_angle_mat([0, 1, 0], np.pi), target_pos),
                  axis_only=True, pos_tol=1e-6, rot_tol=1e-3, max_iters=300)
    qb = solve_ik(model, "ring", Frame(axis_angle_mat([1, 0, 0], -np.pi / 2), target_pos),
                  seed=qa, axis_only=True, pos_tol=1e-6, rot_tol=1e-3, max_iters=300)
    hits = self_collision_pairs(model, qb)
    assert any({a, b} == {"index", "ring"} for a, b, _ in hits)
    for _, _, clearance in hits:
        assert clearance < 0


def test_link_segments_shape(model):
    segs = link_segments(model, "index", np.zeros(15))
    assert len(segs) == 3
    # chain is straight at home: total segment length = 0.12 m + cup offset
    total = sum(np.linalg.norm(b - a) for a, b in segs)
    assert total == pytest.approx(0.05 + 0.04 + 0.03 + 0.012, abs=1e-12)
