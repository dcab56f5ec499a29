"""Grasp-reconfigure-regrasp primitives and the cube rotation planner.

A plan is a flat list of primitives executed through the world stepper,
one rate-limited tick at a time. The planner builds rotations from three
facts about this hand: a fingertip seal anchors the object rigidly, so
spinning the distal joint turns the object exactly with it; the distal
axis always coincides with the cup axis; and a second seal can take the
anchor over before the first lets go, so the object is never free in the
air during a handoff.

Axis choice per rotation: the index grips the top face (cup axis -z, so
its distal spin turns the object about world Z), the thumb grips the
face looking down -X (spin about world X), the ring the face looking
down -Y (spin about world Y). Each face-center axis passes through the
cube's center of mass, which is what keeps the position put while the
orientation turns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IkNoConvergence, JointLimitError, PlanAborted, Unplannable
from .geometry import Frame, rotation_with_z_axis
from .hand import FINGER_ORDER, FINGER_SLICES, forward_kinematics, solve_ik
from .suction import UNIT_IDS
from .world import SUPPORT_RESTING, WorldState, _plane_patch, step

LIFT_M = 0.03


@dataclass(frozen=True)
class MoveFinger:
    """Drive one finger's cup to a target frame.

    axis_only targets position plus cup-axis direction and leaves the
    spin free; it converges far tighter than full-pose tracking and is
    what anchored translations use so the carried object does not twist.
    """

    finger: str
    target: Frame
    axis_only: bool = True


@dataclass(frozen=True)
class Seal:
    unit: str


@dataclass(frozen=True)
class Release:
    unit: str


@dataclass(frozen=True)
class RotateDistal:
    finger: str
    delta_rad: float


@dataclass(frozen=True)
class Dwell:
    seconds: float


Primitive = MoveFinger | Seal | Release | RotateDistal | Dwell


@dataclass(frozen=True)
class RegraspPlan:
    primitives: tuple

    def __len__(self):
        return len(self.primitives)


class _NullRecorder:
    """Default sink when no demo log is wanted."""

    def joints(self, world, cmd_q):
        pass

    def valve(self, world, unit, open):
        pass

    def tick(self, world):
        pass


def _stream_to(world: WorldState, cmd_q: np.ndarray, valves: dict,
               drop_guard, rec) -> WorldState:
    """Step until the joints land exactly on cmd_q (rate limiting reaches
    the target in finitely many ticks, the last one partial)."""
    rec.joints(world, cmd_q)
    gap = float(np.max(np.abs(cmd_q - world.q)))
    budget = int(math.ceil(gap / (world.config.qdot_max * world.config.dt_s))) + 5
    for _ in range(budget):
        if np.array_equal(world.q, cmd_q):
            return world
        world = step(world, cmd_q, valves)
        rec.tick(world)
        drop_guard(world)
    if not np.array_equal(world.q, cmd_q):
        raise PlanAborted("stalled: joints never reached the command")
    return world


def execute_regrasp(world: WorldState, plan: RegraspPlan, recorder=None):
    """Run a plan to completion; returns (final world, snapshot per primitive).

    Any ObjectDropped raised during execution aborts the plan: the
    exception carries the partial trace, whose last entry is the world at
    the moment of the drop.

    A recorder, when given, sees the execution as a teleop session would:
    joints(world, cmd_q) when a new joint target is issued, valve(world,
    unit, open) when a valve flips, tick(world) after every world step.
    """
    rec = recorder if recorder is not None else _NullRecorder()
    trace: list = []
    start_seq = world.events[-1].seq if world.events else 0
    valves = {u: world.unit(u).valve_open for u in UNIT_IDS}
    cmd_q = np.array(world.q)

    def drop_guard(w: WorldState):
        for e in w.events_after(start_seq):
            if e.kind == "ObjectDropped":
                trace.append(w)
                raise PlanAborted(
                    f"drop: object {e.payload['object_id']} dropped", trace)

    for prim in plan.primitives:
        if isinstance(prim, MoveFinger):
            if prim.axis_only:
                pos_tol, rot_tol = 1e-7, 1e-8
            else:
                pos_tol, rot_tol = 1e-4, 1e-3
            try:
                cmd_q = solve_ik(world.model, prim.finger, prim.target,
                                 seed=cmd_q, pos_tol=pos_tol, rot_tol=rot_tol,
                                 max_iters=500, axis_only=prim.axis_only)
            except IkNoConvergence as e:
                # keep the partial trace: the trial still counts what ran
                trace.append(world)
                raise PlanAborted(f"unreachable target: {e}", trace) from e
            world = _stream_to(world, cmd_q, valves, drop_guard, rec)
        elif isinstance(prim, Seal):
            valves[prim.unit] = True
            rec.valve(world, prim.unit, True)
            world = step(world, cmd_q, valves)
            rec.tick(world)
            drop_guard(world)
            if not world.unit(prim.unit).sealed:
                trace.append(world)
                raise PlanAborted(
                    f"seal failed on {prim.unit}: {world.seal_status[prim.unit]}",
                    trace)
        elif isinstance(prim, Release):
            valves[prim.unit] = False
            rec.valve(world, prim.unit, False)
            world = step(world, cmd_q, valves)
            rec.tick(world)
            drop_guard(world)
        elif isinstance(prim, RotateDistal):
            idx = FINGER_SLICES[prim.finger].start + 4
            target = world.q[idx] + prim.delta_rad
            lo = world.model.limits_low()[idx]
            hi = world.model.limits_high()[idx]
            if not (lo <= target <= hi):
                raise JointLimitError(
                    f"{prim.finger} distal target {target:.3f} outside [{lo}, {hi}]")
            cmd_q = np.array(world.q)
            cmd_q[idx] = target
            world = _stream_to(world, cmd_q, valves, drop_guard, rec)
        elif isinstance(prim, Dwell):
            n = max(1, round(prim.seconds / world.config.dt_s))
            for _ in range(n):
                world = step(world, cmd_q, valves)
                rec.tick(world)
                drop_guard(world)
        else:
            raise TypeError(f"unknown primitive {prim!r}")
        trace.append(world)
    return world, trace


# ---------------------------------------------------------------------------
# cube rotation planning

_AXIS_SETUP = {
    # rotation axis -> (gripping finger, world direction its cup presses along)
    "X": ("thumb", np.array([1.0, 0.0, 0.0])),
    "Y": ("ring", np.array([0.0, 1.0, 0.0])),
    "Z": ("index", np.array([0.0, 0.0, -1.0])),
}


def _find_patch_facing(obj, direction, min_dot=0.95):
    """World-frame patch whose outward normal best matches direction."""
    best, best_dot = None, min_dot
    for p in obj.patches:
        pw = p.transformed(obj.pose)
        d = float(pw.normal @ direction)
        if d > best_dot:
            best, best_dot = pw, d
    return best


def _press_frame(point, press_dir) -> Frame:
    return Frame(rotation_with_z_axis(press_dir), point)


def plan_cube_rotation(world: WorldState, object_id: str, axis: str,
                       quarter_turns: int) -> RegraspPlan:
    """Plan that turns the object quarter_turns x 90 degrees about one hand
    axis, ending back at rest. Raises Unplannable when a needed face patch
    is missing or a needed finger is busy."""
    axis = axis.upper()
    if axis not in _AXIS_SETUP:
        raise Unplannable(f"axis must be one of X, Y, Z, got {axis!r}")
    if quarter_turns == 0:
        return RegraspPlan(())
    obj = world.objects.get(object_id)
    if obj is None or obj.dropped:
        raise Unplannable(f"object {object_id!r} absent or dropped")

    top = _find_patch_facing(obj, np.array([0.0, 0.0, 1.0]))
    if top is None:
        raise Unplannable(f"object {object_id!r} has no upward-facing patch to grip")

    index_seal = world.unit("index").seal
    pre_sealed = (index_seal is not None and index_seal.object_id == object_id
                  and world.cup_frames()["index"].rot[2, 2] < -0.99)
    if pre_sealed:
        # an existing top grip is fine, but plan targets assume rest height
        if _plane_patch(obj) is None:
            raise Unplannable(
                f"object {object_id!r} is sealed but airborne; lower it first")
    elif obj.support != SUPPORT_RESTING:
        raise Unplannable(f"object {object_id!r} must rest on the palm to start")
    for u in ("thumb", "index", "ring"):
        if u == "index" and pre_sealed:
            continue
        if world.unit(u).seal is not None:
            raise Unplannable(f"finger {u} is already sealed elsewhere")

    sign = 1.0 if quarter_turns > 0 else -1.0
    n = abs(quarter_turns)
    home = forward_kinematics(world.model, np.zeros(15))

    top_rest = _press_frame(top.centroid, [0, 0, -1])
    top_lift = _press_frame(top.centroid + [0, 0, LIFT_M], [0, 0, -1])

    prims: list = []
    if not pre_sealed:
        prims += [MoveFinger("index", top_rest), Seal("index")]
    prims.append(MoveFinger("index", top_lift))

    if axis == "Z":
        # the index's own distal axis is the rotation axis: cup presses -z,
        # so the joint turns the cube by -delta about world Z; the spin the
        # grip stance happens to land on is unknown until execution, so park
        # the cube and respin the free finger between quarters rather than
        # letting turns accumulate toward the distal limit
        for k in range(n):
            prims.append(RotateDistal("index", -sign * math.pi / 2))
            if k + 1 < n:
                prims += [
                    MoveFinger("index", top_rest), Release("index"),
                    RotateDistal("index", sign * math.pi / 2),
                    Seal("index"), MoveFinger("index", top_lift),
                ]
    else:
        finger, press_dir = _AXIS_SETUP[axis]
        face = _find_patch_facing(obj, -press_dir)
        if face is None:
            raise Unplannable(
                f"object {object_id!r} has no face for a {finger} grip about {axis}")
        # distal spin turns the object about the line through the cup center
        # along the press direction, so that line must pass through the center
        # of mass or a yawed start would heave the object off the palm plane;
        # of all on-axis points, the projection of the face centroid is the
        # one nearest the patch, which keeps the seal gate satisfied out to
        # the worst-case start yaw
        com_lift = obj.pose.pos + [0, 0, LIFT_M]
        face_pt = face.centroid + [0, 0, LIFT_M]
        t = float((face_pt - com_lift) @ press_dir)
        side_press = _press_frame(com_lift + t * press_dir, press_dir)
        delta = sign * math.pi / 2
        for _ in range(n):
            prims += [
                MoveFinger(finger, side_press),
                Seal(finger),
                Release("index"),
                RotateDistal(finger, delta),
                Seal("index"),
                Release(finger),
                RotateDistal(finger, -delta),
            ]
        prims.append(MoveFinger(finger, home[finger]))

    prims += [MoveFinger("index", top_rest), Release("index"),
              MoveFinger("index", home["index"])]
    return RegraspPlan(tuple(prims))
