"""Scripted operators for the executable tasks.

Each script is a generator of regrasp plans: it yields a plan, the trial
runner executes it and sends the resulting world back, and the script
plans its next move against that. Targets are computed from the world it
is handed, so perturbed starting poses are picked up automatically.
"""

from __future__ import annotations

import numpy as np

from .errors import Unplannable
from .geometry import Frame
from .hand import forward_kinematics
from .regrasp import (
    LIFT_M,
    MoveFinger,
    RegraspPlan,
    Release,
    Seal,
    _find_patch_facing,
    _press_frame,
    plan_cube_rotation,
)

UP = np.array([0.0, 0.0, 1.0])


def _top_press(world, object_id) -> Frame:
    obj = world.objects[object_id]
    top = _find_patch_facing(obj, UP)
    if top is None:
        raise Unplannable(f"{object_id} has no face looking up")
    return _press_frame(top.centroid, -UP)


def cube_rotation_script(world):
    """One quarter turn about each world axis, replanned between axes."""
    for axis in ("X", "Y", "Z"):
        world = yield plan_cube_rotation(world, "cube", axis, 1)


def _carry_script(object_id, place_com):
    """Seal the top face, lift, carry over the target, set down, let go."""

    def script(world):
        down = _top_press(world, object_id)
        obj = world.objects[object_id]
        # the cup rides the top face center, a rigid offset above the COM;
        # placing the cup there puts the COM on the target
        offset = down.pos - obj.pose.pos
        lift = Frame(down.rot, down.pos + [0, 0, LIFT_M])
        over = Frame(down.rot, place_com + offset + [0, 0, LIFT_M])
        set_down = Frame(down.rot, place_com + offset)
        clear = Frame(down.rot, set_down.pos + [0, 0, LIFT_M])
        home = forward_kinematics(world.model, np.zeros(15))["index"]
        world = yield RegraspPlan((
            MoveFinger("index", down),
            Seal("index"),
            MoveFinger("index", lift),
            MoveFinger("index", over),
            MoveFinger("index", set_down),
            Release("index"),
            MoveFinger("index", clear),
            MoveFinger("index", home),
        ))

    return script


# place spots chosen inside the index finger's down-pointing reach
pick_lift_place_script = _carry_script("cube", np.array([0.0, 0.03, 0.02]))
peg_transport_script = _carry_script("peg", np.array([0.0, 0.03, 0.025]))


def handoff_chain_script(world):
    """Pass the cube's anchor index -> thumb -> ring without ever letting
    go: the next seal forms before the previous one releases. The side
    faces are only reachable with the cube lifted, so the index raises it
    first and the ring sets it back down at the end."""
    obj = world.objects["cube"]
    top = _top_press(world, "cube")
    side_x = _find_patch_facing(obj, np.array([-1.0, 0.0, 0.0]))
    side_y = _find_patch_facing(obj, np.array([0.0, -1.0, 0.0]))
    if side_x is None or side_y is None:
        raise Unplannable("cube has no side faces for the thumb and ring")
    raised = np.array([0.0, 0.0, LIFT_M])
    thumb_press = _press_frame(side_x.centroid + raised, [1, 0, 0])
    ring_press = _press_frame(side_y.centroid + raised, [0, 1, 0])
    top_lift = Frame(top.rot, top.pos + raised)
    home = forward_kinematics(world.model, np.zeros(15))
    # the side fingers cannot reach down to resting height, so the index
    # takes the anchor back at the end and lowers the cube itself
    world = yield RegraspPlan((
        MoveFinger("index", top),
        Seal("index"),
        MoveFinger("index", top_lift),
        MoveFinger("thumb", thumb_press),
        Seal("thumb"),
        Release("index"),
        MoveFinger("index", home["index"]),
        MoveFinger("ring", ring_press),
        Seal("ring"),
        Release("thumb"),
        MoveFinger("thumb", home["thumb"]),
        MoveFinger("index", top_lift),
        Seal("index"),
        Release("ring"),
        MoveFinger("ring", home["ring"]),
        MoveFinger("index", top),
        Release("index"),
        MoveFinger("index", home["index"]),
    ))


SCRIPTS = {
    "cube_rotation": cube_rotation_script,
    "pick_lift_place": pick_lift_place_script,
    "handoff_chain": handoff_chain_script,
    "peg_transport": peg_transport_script,
}


def script_for(task_id: str):
    return SCRIPTS.get(task_id)
