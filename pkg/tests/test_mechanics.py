import math
import types

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sleap_sim.errors import DegenerateNormal, NonFiniteInput, ParseError
from sleap_sim.mechanics import (
    Adhesive,
    Contact,
    Frictional,
    GraspClass,
    classify_grasp,
    linearize_friction_cone,
    load_contact_set,
    mixed_wrench_norm,
    required_pull,
    wrench_feasible,
)
from wrench_oracle import oracle_feasible

G_STD = 9.81


def hang_contact(f_max=6.5):
    """Seal on the top face of a small object: cup above, pull is +z."""
    return Contact([0, 0, 0.02], [0, 0, -1], Adhesive(f_max), source="index")


def weight_wrench(mass):
    return np.array([0.0, 0.0, -mass * G_STD, 0.0, 0.0, 0.0])


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_instance(rng, max_contacts=3, p_adhesive=0.5):
    n = int(rng.choice([1, 1, 2, 2, 3]))
    adh_at = int(rng.integers(n)) if rng.random() < p_adhesive else -1
    contacts = []
    for i in range(n):
        kind = Adhesive(float(rng.uniform(1, 8))) if i == adh_at \
            else Frictional(float(rng.uniform(0.3, 1.0)))
        src = ("thumb", "index", "ring", "palm", "environment")[int(rng.integers(5))]
        contacts.append(Contact(rng.uniform(-0.05, 0.05, 3), random_unit(rng), kind, src))
    force = random_unit(rng) * rng.uniform(0, 8)
    torque = random_unit(rng) * rng.uniform(0, 0.3)
    return contacts, np.concatenate([force, torque])


def compare_with_oracle(n_instances, seed=0, band=1e-3):
    """Run both deciders; returns (n_compared, mismatches). Instances whose
    margin sits inside the linearization-ambiguous band are not compared."""
    rng = np.random.default_rng(seed)
    compared = 0
    mismatches = []
    for k in range(n_instances):
        contacts, wrench = random_instance(rng)
        res = wrench_feasible(contacts, wrench, m=8)
        if math.isfinite(res.margin) and abs(res.margin) < band:
            continue
        truth = oracle_feasible(contacts, wrench, m=8)
        compared += 1
        if truth != res.feasible:
            mismatches.append((k, res.feasible, truth, res.margin))
    return compared, mismatches


# ---------------------------------------------------------------------------
# cone linearization


def test_zero_friction_collapses_to_normal():
    c = Contact([0, 0, 0], [0, 0, 1], Frictional(0.0))
    gens = linearize_friction_cone(c, 4)
    assert gens.shape == (4, 3)
    assert np.allclose(gens, [[0, 0, 1]] * 4)


def test_unit_friction_four_sides():
    c = Contact([0, 0, 0], [0, 0, 1], Frictional(1.0))
    gens = linearize_friction_cone(c, 4)
    assert np.allclose(gens[:, 2], 1 / math.sqrt(2))
    xy = gens[:, :2]
    assert np.allclose(np.linalg.norm(xy, axis=1), 1 / math.sqrt(2))
    # 90 degree spacing: consecutive tangential parts are orthogonal
    for i in range(4):
        assert abs(xy[i] @ xy[(i + 1) % 4]) < 1e-12


def test_generators_unit_and_on_cone_surface():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mu = rng.uniform(0.1, 1.5)
        n = random_unit(rng)
        gens = linearize_friction_cone(Contact([0, 0, 0], n, Frictional(mu)), 8)
        assert np.allclose(np.linalg.norm(gens, axis=1), 1.0)
        assert np.allclose(gens @ n, math.cos(math.atan(mu)))


def test_adhesive_gains_pull_direction():
    n = np.array([0, 1, 0.0])
    gens = linearize_friction_cone(Contact([0, 0, 0], n, Adhesive(5.0)), 8)
    assert gens.shape == (9, 3)
    assert np.allclose(gens[-1], -n)


def test_side_count_minimum():
    c = Contact([0, 0, 0], [0, 0, 1], Frictional(0.5))
    with pytest.raises(ValueError):
        linearize_friction_cone(c, 2)


def test_degenerate_normal_rejected():
    with pytest.raises(DegenerateNormal):
        Contact([0, 0, 0], [0, 0, 0.5], Frictional(0.5))
    fake = types.SimpleNamespace(normal=np.zeros(3), kind=Frictional(0.5))
    with pytest.raises(DegenerateNormal):
        linearize_friction_cone(fake, 4)


# ---------------------------------------------------------------------------
# wrench feasibility


def test_empty_world_at_rest():
    res = wrench_feasible([], np.zeros(6))
    assert res.feasible and res.contact_forces == () and res.margin == math.inf


def test_empty_contacts_cannot_hold_weight():
    w = weight_wrench(0.3)
    res = wrench_feasible([], w)
    assert not res.feasible
    assert res.margin == pytest.approx(-mixed_wrench_norm(w))


def test_seal_holds_light_object():
    res = wrench_feasible([hang_contact()], weight_wrench(0.3))
    assert res.feasible
    total = np.sum(res.contact_forces, axis=0)
    assert np.allclose(total, [0, 0, 0.3 * G_STD], atol=1e-6)
    # slack before the 6.5 N pull cap binds
    assert res.margin == pytest.approx(6.5 - 0.3 * G_STD, abs=1e-6)


def test_seal_drops_heavy_object():
    res = wrench_feasible([hang_contact()], weight_wrench(0.7))
    assert not res.feasible and res.contact_forces is None
    assert res.margin == pytest.approx(6.5 - 0.7 * G_STD, abs=1e-6)


def test_press_onto_support_unbounded_margin():
    support = Contact([0, 0, -0.02], [0, 0, 1], Frictional(0.6), source="palm")
    res = wrench_feasible([support], weight_wrench(1.0))
    assert res.feasible and res.margin == math.inf


def test_rejects_non_finite_wrench():
    with pytest.raises(NonFiniteInput):
        wrench_feasible([], [0, 0, np.nan, 0, 0, 0])


def test_force_certificate_frictional_only():
    """Without torque-only generators the returned forces reproduce the
    full wrench, torques included, by direct summation."""
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        contacts, wrench = random_instance(rng, p_adhesive=0.0)
        res = wrench_feasible(contacts, wrench, m=8)
        if not res.feasible:
            continue
        total = np.zeros(6)
        for c, f in zip(contacts, res.contact_forces):
            total[:3] += f
            total[3:] += np.cross(c.location, f)
        assert np.allclose(total, -wrench, atol=1e-6)
        checked += 1


def test_force_part_certificate_with_adhesive():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 20:
        contacts, wrench = random_instance(rng, p_adhesive=1.0)
        res = wrench_feasible(contacts, wrench, m=8)
        if not res.feasible:
            continue
        assert np.allclose(np.sum(res.contact_forces, axis=0), -wrench[:3], atol=1e-6)
        checked += 1


def test_adding_contact_preserves_feasibility():
    rng = np.random.default_rng(13)
    for _ in range(40):
        contacts, wrench = random_instance(rng)
        before = wrench_feasible(contacts, wrench, m=8)
        extra = Contact(rng.uniform(-0.05, 0.05, 3), random_unit(rng),
                        Frictional(float(rng.uniform(0.3, 1.0))))
        after = wrench_feasible(contacts + [extra], wrench, m=8)
        if before.feasible:
            assert after.feasible
        assert after.margin >= before.margin - 1e-6


def test_scaling_down_feasible_wrench_stays_feasible():
    rng = np.random.default_rng(14)
    checked = 0
    while checked < 15:
        contacts, wrench = random_instance(rng)
        res = wrench_feasible(contacts, wrench, m=8)
        if not res.feasible or res.margin < 1e-3:
            continue
        for alpha in (0.25, 0.5, 1.0):
            assert wrench_feasible(contacts, alpha * wrench, m=8).feasible
        checked += 1


def test_matches_brute_force_oracle_sample():
    compared, mismatches = compare_with_oracle(60, seed=101)
    assert compared >= 40
    assert mismatches == []


# ---------------------------------------------------------------------------
# grasp classification


def fc(source, mu=0.6):
    return Contact([0, 0, 0], [0, 0, 1], Frictional(mu), source=source)


def test_classify_empty():
    assert classify_grasp([]) is GraspClass.NONE


def test_classify_single_seal():
    assert classify_grasp([hang_contact()]) is GraspClass.ADHESIVE_SINGLE_POINT


def test_classify_finger_palm():
    assert classify_grasp([fc("index"), fc("palm")]) is GraspClass.FINGER_PALM


def test_classify_finger_finger():
    assert classify_grasp([fc("index"), fc("thumb")]) is GraspClass.FINGER_FINGER
    assert classify_grasp([fc("index"), fc("ring"), fc("thumb")]) is GraspClass.FINGER_FINGER


def test_classify_hybrid_mixes():
    assert classify_grasp([hang_contact(), fc("palm")]) is GraspClass.HYBRID
    # a lone frictional contact fits no named family
    assert classify_grasp([fc("index")]) is GraspClass.HYBRID
    assert classify_grasp([fc("environment"), fc("environment")]) is GraspClass.HYBRID


@given(st.lists(
    st.tuples(st.sampled_from(["thumb", "index", "ring", "palm", "environment"]),
              st.booleans()),
    max_size=6,
))
@settings(max_examples=200)
def test_classify_total_partition(spec):
    contacts = [
        Contact([0, 0, 0], [0, 0, 1], Adhesive(3.0) if adh else Frictional(0.6), src)
        for src, adh in spec
    ]
    got = classify_grasp(contacts)
    assert got in GraspClass
    # re-derive membership independently; exactly one class may claim the set
    claims = [
        (GraspClass.NONE, len(contacts) == 0),
        (GraspClass.ADHESIVE_SINGLE_POINT,
         len(contacts) == 1 and isinstance(contacts[0].kind, Adhesive)),
        (GraspClass.FINGER_PALM,
         len(contacts) > 0
         and all(isinstance(c.kind, Frictional) for c in contacts)
         and any(c.source in ("thumb", "index", "ring") for c in contacts)
         and any(c.source == "palm" for c in contacts)),
        (GraspClass.FINGER_FINGER,
         sum(c.source in ("thumb", "index", "ring") for c in contacts) >= 2
         and all(isinstance(c.kind, Frictional) for c in contacts)
         and not any(c.source == "palm" for c in contacts)),
    ]
    winners = [cls for cls, holds in claims if holds]
    assert got is (winners[0] if winners else GraspClass.HYBRID)


# ---------------------------------------------------------------------------
# axial pull helper


def test_pull_straight_down():
    assert required_pull(0.3, G_STD, [0, 0, -1], [0, 0, -1]) == pytest.approx(2.943)


def test_pull_horizontal_axis():
    assert required_pull(0.3, G_STD, [1, 0, 0], [0, 0, -1]) == 0.0


def test_pull_zero_mass():
    assert required_pull(0.0, G_STD, [0, 0, -1], [0, 0, -1]) == 0.0


def test_pull_upward_axis_clamped():
    # seal under the object: weight presses on, never peels off
    assert required_pull(0.5, G_STD, [0, 0, 1], [0, 0, -1]) == 0.0


def test_pull_negative_mass_rejected():
    with pytest.raises(ValueError):
        required_pull(-1.0, G_STD, [0, 0, -1], [0, 0, -1])


# ---------------------------------------------------------------------------
# contact-set file


def test_load_contact_set_round_trip(tmp_path):
    doc = {
        "contacts": [
            {"pos": [0, 0, 0.02], "normal": [0, 0, -1], "kind": "adhesive",
             "f_max": 6.5, "source": "index"},
            {"pos": [0, 0, -0.02], "normal": [0, 0, 1], "kind": "frictional", "mu": 0.7},
        ],
        "wrench": [0, 0, -2.943, 0, 0, 0],
    }
    p = tmp_path / "contacts.json"
    p.write_text(__import__("json").dumps(doc))
    contacts, wrench = load_contact_set(p)
    assert len(contacts) == 2
    assert isinstance(contacts[0].kind, Adhesive) and contacts[0].kind.f_max == 6.5
    assert contacts[1].kind.mu == 0.7 and contacts[1].source == "environment"
    assert wrench_feasible(contacts, wrench).feasible


def test_load_contact_set_errors(tmp_path):
    with pytest.raises(ParseError):
        load_contact_set({"contacts": [], "wrench": [0, 0, 0]})
    with pytest.raises(ParseError):
        load_contact_set({"contacts": [{"pos": [0, 0, 0], "normal": [0, 0, 1],
                                        "kind": "magnetic"}], "wrench": [0] * 6})
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ParseError):
        load_contact_set(bad)
