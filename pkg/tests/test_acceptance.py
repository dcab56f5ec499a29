"""Acceptance gate: one test per shipped guarantee, each printing a
single pass line with its measured runtime (run with `pytest -v -s` to
see them; a failed guarantee shows up as a failed test).

Every test re-derives its expectation here rather than trusting library
output, and asserts the wall-clock budget it is allowed to spend.
"""

import json
import time

import numpy as np
import pytest

import test_protocol as proto
from test_mechanics import compare_with_oracle

from sleap_sim.cli import main
from sleap_sim.geometry import axis_angle_mat, rotation_angle, rotation_with_z_axis, Frame
from sleap_sim.hand import (
    FINGER_ORDER,
    FINGER_SLICES,
    forward_kinematics,
    jacobian,
    load_hand_model,
    solve_ik,
)
from sleap_sim.regrasp import execute_regrasp, plan_cube_rotation
from sleap_sim.scripts import script_for
from sleap_sim.tasks import TrialRecord, load_task, metrics_row, run_scripted_trials, step_completeness
from sleap_sim.world import load_scene, step

AXIS_VEC = {"X": [1.0, 0, 0], "Y": [0, 1.0, 0], "Z": [0, 0, 1.0]}


class budget:
    """Context manager asserting the block finished inside its budget."""

    def __init__(self, name, seconds):
        self.name, self.seconds = name, seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, *rest):
        dt = time.perf_counter() - self.t0
        if exc_type is None:
            assert dt < self.seconds, f"{self.name}: {dt:.2f}s over budget"
            print(f"[PASS] {self.name} ({dt:.2f}s < {self.seconds:g}s)")
        return False


def test_metric_arithmetic_matches_published_rows(tmp_path, capsys):
    with budget("metric arithmetic", 1.0):
        rows = {"syringe_pushing": (0.7, 0.85),
                "wireless_charging": (1.0, 1.0),
                "peg_in_hole": (0.5, 0.75),
                "bottle_cap_opening": (0.2, 0.5)}
        for tid, (sr, comp) in rows.items():
            code = main(["eval", "--task", tid, "--records", tid,
                         "--out", str(tmp_path)])
            assert code == 0
            csv = (tmp_path / f"{tid}-metrics.csv").read_text().splitlines()[1]
            got = csv.split(",")
            assert float(got[4]) == sr and float(got[5]) == comp, tid
        # canonical worked example: 2 of 4 steps completed scores exactly 0.5
        one = TrialRecord("t", 0, 2, 4, False, 9.0, "Other")
        assert step_completeness([one]) == 0.5
        capsys.readouterr()


def test_wrench_decider_matches_brute_force_oracle():
    with budget("wrench oracle agreement", 30.0):
        compared, mismatches = compare_with_oracle(230, seed=7)
        assert compared >= 200
        assert mismatches == []


def hang_cube(scene):
    """Seal the index cup onto the cube's top face and lift it clear."""
    w = load_scene(scene)
    top = w.objects["cube"].pose.pos + [0, 0, 0.02]
    down = Frame(rotation_with_z_axis([0, 0, -1]), top)
    cmd = solve_ik(w.model, "index", down, pos_tol=1e-7, rot_tol=1e-8,
                   max_iters=500, axis_only=True)
    valves = {u: False for u in ("thumb", "index", "ring", "palm")}
    while not np.array_equal(w.q, cmd):
        w = step(w, cmd, valves)
    valves["index"] = True
    w = step(w, cmd, valves)
    assert w.unit("index").sealed
    lifted = Frame(down.rot, down.pos + [0, 0, 0.03])
    cmd = solve_ik(w.model, "index", lifted, seed=cmd, pos_tol=1e-7,
                   rot_tol=1e-8, max_iters=500, axis_only=True)
    while not np.array_equal(w.q, cmd):
        w = step(w, cmd, valves)
    for _ in range(10):  # settle
        w = step(w, cmd, valves)
    return w


def test_adhesion_threshold_pair():
    with budget("adhesion threshold pair", 1.0):
        light = hang_cube("cube")  # 0.3 kg
        kinds = [e.kind for e in light.events]
        assert light.unit("index").sealed
        assert light.objects["cube"].support == "AnchoredBySeals"
        assert "SealBroken" not in kinds and "ObjectDropped" not in kinds

        heavy = hang_cube("heavy_cube")  # 0.7 kg, same geometry
        assert not heavy.unit("index").sealed
        assert heavy.objects["cube"].support == "Dropped"
        failures = [e.kind for e in heavy.events
                    if e.kind in ("SealBroken", "ObjectDropped")]
        assert failures == ["SealBroken", "ObjectDropped"]


def test_kinematics_round_trip_and_jacobian():
    with budget("kinematics", 10.0):
        model = load_hand_model()
        lo, hi = model.limits_low(), model.limits_high()
        rng = np.random.default_rng(2024)

        for _ in range(100):
            finger = FINGER_ORDER[rng.integers(3)]
            q_star = lo + (hi - lo) * rng.uniform(0.05, 0.95, size=15)
            target = forward_kinematics(model, q_star)[finger]
            seed = np.clip(q_star + rng.uniform(-0.1, 0.1, 15), lo, hi)
            q_sol = solve_ik(model, finger, target, seed=seed)
            got = forward_kinematics(model, q_sol)[finger]
            assert np.linalg.norm(got.pos - target.pos) <= 1e-4
            assert rotation_angle(got.rot.T @ target.rot) <= 1e-3

        eps = 1e-7
        for _ in range(100):
            finger = FINGER_ORDER[rng.integers(3)]
            q = lo + (hi - lo) * rng.uniform(0.05, 0.95, size=15)
            J = jacobian(model, finger, q)  # 6 rows, one column per joint
            fd = np.zeros_like(J)
            base = forward_kinematics(model, q)[finger]
            cols = range(*FINGER_SLICES[finger].indices(15))
            for j, col in enumerate(cols):
                dq = q.copy()
                dq[col] += eps
                bumped = forward_kinematics(model, dq)[finger]
                fd[:3, j] = (bumped.pos - base.pos) / eps
                w_skew = (bumped.rot - base.rot) @ base.rot.T / eps
                fd[3:, j] = [w_skew[2, 1], w_skew[0, 2], w_skew[1, 0]]
            assert np.linalg.norm(J - fd) <= 1e-5


def test_three_axis_cube_rotation():
    with budget("three-axis rotation", 30.0):
        for axis in ("X", "Y", "Z"):
            w = load_scene("cube")
            r0 = w.objects["cube"].pose.rot
            start_seq = w.events[-1].seq if w.events else 0
            plan = plan_cube_rotation(w, "cube", axis, 1)
            w, _ = execute_regrasp(w, plan)
            target = axis_angle_mat(AXIS_VEC[axis], np.pi / 2) @ r0
            err = rotation_angle(w.objects["cube"].pose.rot.T @ target)
            assert err <= 1e-6, f"{axis}: {err}"
            events = list(w.events_after(start_seq))
            assert not any(e.kind == "ObjectDropped" for e in events), axis
            sealers = {e.payload["unit"] for e in events
                       if e.kind == "SealFormed"}
            if axis in ("X", "Y"):  # side-grip axes need a hand-over
                assert len(sealers) >= 2, (axis, sealers)


def test_replay_determinism_and_tamper_detection(tmp_path, capsys):
    with budget("replay determinism", 10.0):
        code = main(["serve", "--scene", "cube", "--listen", "127.0.0.1:0",
                     "--no-ws", "--hz", "0", "--ticks", "1500",
                     "--out", str(tmp_path)])
        assert code == 0
        log = sorted(tmp_path.glob("cube-*.demolog"))[-1]
        lines = log.read_bytes().splitlines(keepends=True)
        assert len(lines) == 1500  # 30 s of sim at 20 ms per tick

        code = main(["replay", "--log", str(log), "--scene", "cube"])
        out = capsys.readouterr().out
        assert code == 0 and "replayed 1500 ticks" in out

        # flip one bit of a joint digit in the 700th frame: 0x30 ^ 1 = '1'
        target = lines[699]
        k = target.index(b'"q":[') + len(b'"q":[')
        mutated = target[:k] + bytes([target[k] ^ 0x01]) + target[k + 1:]
        assert json.loads(mutated)  # still a decodable frame
        lines[699] = mutated
        bad = tmp_path / "tampered.demolog"
        bad.write_bytes(b"".join(lines))
        code = main(["replay", "--log", str(bad), "--scene", "cube"])
        out = capsys.readouterr().out
        assert code == 5
        assert "diverged at tick 700" in out


def test_protocol_properties():
    with budget("protocol properties", 30.0):
        proto.test_codec_round_trip_fuzz_1000()
        proto.test_random_sessions_hold_invariants_10k()
        proto.test_pause_freezes_applied_state()
        proto.test_leader_emits_nothing_while_paused()


def test_scripted_trials_deterministic_full_marks(tmp_path):
    with budget("scripted trial suite", 120.0):
        task = load_task("cube_rotation")
        script = script_for(task.task_id)
        kw = dict(n=10, seed=42, out_dir=tmp_path, stamp="acc")
        first = run_scripted_trials(task, script, **kw)
        logs_first = {p.name: p.read_bytes() for p in tmp_path.glob("*.demolog")}
        second = run_scripted_trials(task, script, **kw)
        logs_second = {p.name: p.read_bytes() for p in tmp_path.glob("*.demolog")}
        assert first == second
        assert logs_first == logs_second and len(logs_first) == 10
        row = metrics_row(first)
        assert row.overall_sr == 1.0
        assert row.step_completeness == 1.0
