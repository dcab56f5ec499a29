"""Quasi-static world stepper.

Every tick is a statics problem: joints slew toward their commanded
values under a rate limit, valves switch, seals form or break, and each
object lands in exactly one support mode — anchored by seals, held by
frictional contacts, resting on the palm plane, or dropped. Dropped
objects freeze half a meter below the hand base; falling bodies carry no
information this simulator cares about.

World states are immutable snapshots. ``step`` is a pure function of
(state, commands, dt), which is what makes demonstration logs replayable
bit-for-bit. The only mutable machinery is a module-level memo for the
support-feasibility LP, keyed by the exact inputs, so repeated static
ticks cost one solve.

Conventions: the hand base frame is the world frame, the palm plane is
z = 0 with +z up, and an object's frame origin is its center of mass.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import NonFiniteCommand, SceneError
from .geometry import Frame, axis_angle_mat
from .hand import (
    FINGER_ORDER,
    HandModel,
    N_JOINTS,
    clamp_joints,
    forward_kinematics,
    load_hand_model,
    self_collision_pairs,
)
from .mechanics import (
    Adhesive,
    Contact,
    Frictional,
    required_pull,
    wrench_feasible,
)
from .suction import (
    SealConfig,
    SealInfo,
    SealReason,
    SealResult,
    SealStatus,
    SuctionUnitState,
    UNIT_IDS,
    attempt_seal,
    seal_break_check,
    set_valve,
)

DOWN = np.array([0.0, 0.0, -1.0])
PLANE_TOL = 0.001          # how close the lowest patch must sit to z=0 to rest
ANCHOR_RESIDUAL_TOL = 0.001
DROP_SENTINEL_Z = -0.5

SUPPORT_ANCHORED = "AnchoredBySeals"
SUPPORT_GRASPED = "FrictionallyGrasped"
SUPPORT_RESTING = "Resting"
SUPPORT_DROPPED = "Dropped"

EVENT_KINDS = ("SealFormed", "SealBroken", "ObjectDropped", "StepCompleted", "SelfCollision")


@dataclass(frozen=True)
class WorldConfig:
    dt_s: float = 0.02
    qdot_max: float = 2.0
    gravity: float = 9.81
    mu: float = 0.6
    cone_sides: int = 8
    seal: SealConfig = field(default_factory=SealConfig)

    def __post_init__(self):
        if not (self.dt_s > 0 and self.qdot_max > 0 and self.gravity >= 0):
            raise SceneError("dt_s and qdot_max must be positive, gravity nonnegative")


@dataclass(frozen=True)
class RigidObject:
    object_id: str
    pose: Frame
    mass: float
    patches: tuple
    primitive: str = "box"
    dims: tuple = ()
    dropped: bool = False
    support: str = SUPPORT_RESTING

    def __post_init__(self):
        if self.mass <= 0:
            raise SceneError(f"object {self.object_id}: mass must be > 0")
        if len(self.patches) == 0:
            raise SceneError(f"object {self.object_id}: needs at least one patch")
        if self.primitive not in ("box", "cylinder", "sphere"):
            raise SceneError(f"object {self.object_id}: unknown primitive {self.primitive!r}")

    def patch(self, patch_id: str):
        for p in self.patches:
            if p.patch_id == patch_id:
                return p
        raise KeyError(patch_id)


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: str
    payload: dict

    def __post_init__(self):
        assert self.kind in EVENT_KINDS, self.kind

    def to_dict(self) -> dict:
        return {"time": self.time, "seq": self.seq, "kind": self.kind,
                "payload": self.payload}


@dataclass(frozen=True)
class WorldState:
    model: HandModel
    config: WorldConfig
    clock: float
    q: np.ndarray
    suction: dict            # unit_id -> SuctionUnitState, in UNIT_IDS order
    objects: dict            # object_id -> RigidObject
    contacts: tuple = ()     # world-frame annotations of this tick's contacts
    events: tuple = ()
    colliding: frozenset = frozenset()
    seal_status: dict = field(default_factory=dict)  # unit_id -> "Sealed" | reason
    rng_seed: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    def unit(self, unit_id: str) -> SuctionUnitState:
        return self.suction[unit_id]

    def cup_frames(self) -> dict:
        return forward_kinematics(self.model, self.q)

    def events_after(self, seq: int) -> tuple:
        return tuple(e for e in self.events if e.seq > seq)


# ---------------------------------------------------------------------------
# scene loading


def canonical_scene_path(name: str) -> Path:
    p = Path(str(resources.files("sleap_sim").joinpath(f"data/scenes/{name}.json")))
    if not p.exists():
        raise SceneError(f"no built-in scene named {name!r}")
    return p


def _patch_from_doc(doc: dict, object_id: str):
    from .suction import SurfacePatch

    try:
        r = doc.get("curvature_radius")
        return SurfacePatch(
            patch_id=str(doc["patch_id"]),
            centroid=np.asarray(doc["centroid"], dtype=float),
            normal=np.asarray(doc["normal"], dtype=float),
            curvature_radius=math.inf if r is None else float(r),
            porous=bool(doc.get("porous", False)),
            min_feature_diameter=float(doc.get("min_feature_diameter", math.inf)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"object {object_id}: bad patch: {e}") from e


def load_scene(source, hand: HandModel | None = None, seed: int = 0) -> WorldState:
    """Build the initial world from a scene document (path or dict)."""
    base_dir = None
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists() and path.suffix == "" and path.name == str(source):
            path = canonical_scene_path(str(source))
        base_dir = path.parent
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SceneError(f"cannot read scene {source}: {e}") from e
    else:
        doc = source
    if not isinstance(doc, dict) or "objects" not in doc:
        raise SceneError("scene document must be an object with an 'objects' list")

    cfg_doc = dict(doc.get("config", {}))
    seal_doc = cfg_doc.pop("seal", {})
    try:
        config = WorldConfig(seal=SealConfig(**seal_doc), **cfg_doc)
    except TypeError as e:
        raise SceneError(f"bad config block: {e}") from e

    if hand is None:
        hd = doc.get("hand_description")
        if hd is not None and base_dir is not None and not Path(hd).is_absolute():
            hd = base_dir / hd
        hand = load_hand_model(hd)

    objects = {}
    for od in doc["objects"]:
        try:
            oid = str(od["id"])
            pose = Frame.from_quat_pos(od["pose"]["quat"], od["pose"]["pos"])
            obj = RigidObject(
                object_id=oid,
                pose=pose,
                mass=float(od["mass_kg"]),
                patches=tuple(_patch_from_doc(p, oid) for p in od["patches"]),
                primitive=str(od.get("primitive", "box")),
                dims=tuple(od.get("dims_m", ())),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SceneError(f"bad object entry: {e}") from e
        if obj.object_id in objects:
            raise SceneError(f"duplicate object id {obj.object_id!r}")
        objects[obj.object_id] = obj

    q0 = clamp_joints(hand, np.asarray(doc.get("initial_q", np.zeros(N_JOINTS)), dtype=float))
    suction = {u: SuctionUnitState(u) for u in UNIT_IDS}
    world = WorldState(
        model=hand, config=config, clock=0.0, q=q0, suction=suction,
        objects=objects, rng_seed=int(seed),
        seal_status={u: SealReason.VALVE_CLOSED.value for u in UNIT_IDS},
    )
    # settle support modes so the initial snapshot already classifies objects
    cups = world.cup_frames()
    contacts, new_objects, _ = _resolve_support(world, cups)
    return dataclasses.replace(world, contacts=tuple(contacts), objects=new_objects)


def perturb_object(world: WorldState, object_id: str, dx: float, dy: float,
                   yaw: float) -> WorldState:
    """Shift an object in the plane and spin it about vertical; used to
    randomize trial starts."""
    obj = world.objects[object_id]
    pose = Frame(axis_angle_mat([0, 0, 1], yaw) @ obj.pose.rot,
                 obj.pose.pos + np.array([dx, dy, 0.0]))
    objects = dict(world.objects)
    objects[object_id] = dataclasses.replace(obj, pose=pose)
    return dataclasses.replace(world, objects=objects)


# ---------------------------------------------------------------------------
# support resolution helpers


_feas_memo: dict = {}


def _support_feasible(contacts_rel, mass, gravity, cone_sides) -> bool:
    """wrench_feasible for gravity support, memoized on exact inputs."""
    key_parts = [float(mass), float(gravity), int(cone_sides)]
    for c in contacts_rel:
        kind = c.kind
        if isinstance(kind, Frictional):
            kdesc = ("f", kind.mu)
        else:
            kdesc = ("a", kind.f_max, kind.mu_seal, kind.cup_radius_m)
        key_parts.append((c.location.tobytes(), c.normal.tobytes(), kdesc, c.source))
    key = tuple(key_parts)
    hit = _feas_memo.get(key)
    if hit is None:
        w = np.array([0.0, 0.0, -mass * gravity, 0.0, 0.0, 0.0])
        hit = wrench_feasible(contacts_rel, w, m=cone_sides).feasible
        if len(_feas_memo) > 4096:
            _feas_memo.clear()
        _feas_memo[key] = hit
    return hit


def _nearest_patch(obj: RigidObject, point: np.ndarray):
    """(patch in world frame, distance) of the patch centroid nearest a point."""
    best = None
    best_d = math.inf
    for p in obj.patches:
        pw = p.transformed(obj.pose)
        d = float(np.linalg.norm(pw.centroid - point))
        if d < best_d:
            best, best_d = pw, d
    return best, best_d


def _plane_patch(obj: RigidObject):
    """The downward-facing patch sitting on the palm plane, if any (world frame)."""
    best = None
    for p in obj.patches:
        pw = p.transformed(obj.pose)
        if pw.normal[2] < -0.9 and abs(pw.centroid[2]) <= PLANE_TOL:
            if best is None or pw.centroid[2] < best.centroid[2]:
                best = pw
    return best


def _resolve_support(world: WorldState, cups: dict):
    """Assign each object its support mode; returns (contact annotations,
    updated objects, drop events payloads). Seal states are read from
    world.suction and are not modified here."""
    cfg = world.config
    seals_by_object: dict = {}
    for u in UNIT_IDS:
        st = world.suction[u]
        if st.seal is not None:
            seals_by_object.setdefault(st.seal.object_id, []).append(u)

    annotations = []
    new_objects = {}
    dropped_ids = []
    for oid, obj in world.objects.items():
        if obj.dropped:
            new_objects[oid] = obj
            continue

        rel_contacts = []
        world_contacts = []
        for u in seals_by_object.get(oid, ()):  # adhesive contacts from seals
            st = world.suction[u]
            patch = obj.patch(st.seal.patch_id).transformed(obj.pose)
            kind = Adhesive(st.adhesion_limit, cfg.seal.mu_seal,
                            cfg.seal.for_unit(u).cup_diameter_m / 2)
            rel_contacts.append(Contact(patch.centroid - obj.pose.pos,
                                        -patch.normal, kind, source=u))
            world_contacts.append(Contact(patch.centroid, -patch.normal, kind, source=u))

        finger_touch = 0
        for u in UNIT_IDS:  # frictional contact wherever an unsealed cup presses
            st = world.suction[u]
            if st.seal is not None:
                continue
            cup = cups[u]
            patch, d = _nearest_patch(obj, cup.pos)
            if patch is not None and d <= cfg.seal.d_max_m:
                kind = Frictional(cfg.mu)
                rel_contacts.append(Contact(patch.centroid - obj.pose.pos,
                                            -patch.normal, kind, source=u))
                world_contacts.append(Contact(patch.centroid, -patch.normal, kind, source=u))
                if u in FINGER_ORDER:
                    finger_touch += 1

        plane = _plane_patch(obj)
        if plane is not None:
            # a face resting on the palm is an area contact: its pressure
            # center sits under the center of mass, not at the patch centroid,
            # bounded by the patch footprint so an overhung load still topples
            cop = np.array([obj.pose.pos[0], obj.pose.pos[1], plane.centroid[2]])
            lat = cop[:2] - plane.centroid[:2]
            r_max = plane.min_feature_diameter / 2
            lat_norm = float(np.linalg.norm(lat))
            if math.isfinite(r_max) and lat_norm > r_max:
                cop[:2] = plane.centroid[:2] + lat * (r_max / lat_norm)
            kind = Frictional(cfg.mu)
            rel_contacts.append(Contact(cop - obj.pose.pos,
                                        np.array([0.0, 0.0, 1.0]), kind, source="palm"))
            world_contacts.append(Contact(cop, np.array([0.0, 0.0, 1.0]),
                                          kind, source="palm"))

        if seals_by_object.get(oid):
            support = SUPPORT_ANCHORED
        elif finger_touch >= 2 and _support_feasible(
                rel_contacts, obj.mass, cfg.gravity, cfg.cone_sides):
            support = SUPPORT_GRASPED
        elif plane is not None and _support_feasible(
                rel_contacts, obj.mass, cfg.gravity, cfg.cone_sides):
            support = SUPPORT_RESTING
        else:
            support = SUPPORT_DROPPED

        if support == SUPPORT_DROPPED:
            pose = Frame(obj.pose.rot,
                         [obj.pose.pos[0], obj.pose.pos[1], DROP_SENTINEL_Z])
            new_objects[oid] = dataclasses.replace(
                obj, pose=pose, dropped=True, support=SUPPORT_DROPPED)
            dropped_ids.append(oid)
        else:
            new_objects[oid] = dataclasses.replace(obj, support=support)
            annotations.extend(world_contacts)
    return annotations, new_objects, dropped_ids


def _average_pose(frames: list) -> Frame:
    """Least-squares blend of rigid poses: mean position, eigen-averaged rotation."""
    if len(frames) == 1:
        return frames[0]
    pos = np.mean([f.pos for f in frames], axis=0)
    quats = [f.quat() for f in frames]
    ref = quats[0]
    M = np.zeros((4, 4))
    for qv in quats:
        if qv @ ref < 0:
            qv = -qv
        M += np.outer(qv, qv)
    _, vecs = np.linalg.eigh(M)
    q = vecs[:, -1]
    return Frame.from_quat_pos(q / np.linalg.norm(q), pos)


# ---------------------------------------------------------------------------
# stepping


def detect_self_collision(world: WorldState) -> list:
    """Penetrating finger-link capsule pairs at the current configuration."""
    return self_collision_pairs(world.model, world.q)


def _normalize_valves(cmd_valves) -> dict:
    if isinstance(cmd_valves, dict):
        unknown = set(cmd_valves) - set(UNIT_IDS)
        if unknown:
            raise NonFiniteCommand(f"unknown valve ids {sorted(unknown)}")
        return {u: bool(cmd_valves.get(u, False)) for u in UNIT_IDS}
    vals = list(cmd_valves)
    if len(vals) != 4:
        raise NonFiniteCommand(f"expected 4 valve commands, got {len(vals)}")
    return dict(zip(UNIT_IDS, (bool(v) for v in vals)))


def step(world: WorldState, cmd_q, cmd_valves, dt: float | None = None) -> WorldState:
    """Advance one tick. Stages, in order: joint slew, valve switching, seal
    formation, anchored objects follow their seals, seal load checks, drop
    detection, clock advance."""
    cfg = world.config
    if dt is None:
        dt = cfg.dt_s
    if not (dt > 0):
        raise NonFiniteCommand(f"dt must be > 0, got {dt}")
    cmd_q = np.asarray(cmd_q, dtype=np.float64)
    if cmd_q.shape != (N_JOINTS,) or not np.all(np.isfinite(cmd_q)):
        raise NonFiniteCommand("joint command must be a finite 15-vector")
    valves = _normalize_valves(cmd_valves)

    now = world.clock + dt
    seq = world.events[-1].seq if world.events else 0
    new_events = []

    def emit(kind, payload):
        nonlocal seq
        seq += 1
        new_events.append(Event(now, seq, kind, payload))

    # (1) joints slew toward the clamped command under the rate limit
    target = clamp_joints(world.model, cmd_q)
    dq = np.clip(target - world.q, -cfg.qdot_max * dt, cfg.qdot_max * dt)
    q_new = world.q + dq
    cups = forward_kinematics(world.model, q_new)

    # (2) valves
    suction = dict(world.suction)
    for u in UNIT_IDS:
        if suction[u].valve_open != valves[u]:
            suction[u] = set_valve(suction[u], valves[u])

    # (3) seal formation on open, unsealed units
    objects = dict(world.objects)
    seal_status = {}
    for u in UNIT_IDS:
        st = suction[u]
        if not st.valve_open:
            seal_status[u] = SealReason.VALVE_CLOSED.value
            continue
        if st.seal is not None:
            seal_status[u] = "Sealed"
            continue
        best = None
        best_d = math.inf
        for obj in objects.values():
            if obj.dropped:
                continue
            patch, d = _nearest_patch(obj, cups[u].pos)
            if patch is not None and d < best_d:
                best, best_d = (obj, patch), d
        if best is None:
            seal_status[u] = SealReason.TOO_FAR.value
            continue
        obj, patch = best
        result: SealResult = attempt_seal(cups[u], patch, cfg.seal.for_unit(u))
        if result.sealed:
            anchor = cups[u].inverse() @ obj.pose
            suction[u] = dataclasses.replace(
                st, seal=SealInfo(obj.object_id, patch.patch_id, anchor),
                adhesion_limit=result.adhesion_limit)
            emit("SealFormed", {"unit": u, "object_id": obj.object_id,
                                "patch_id": patch.patch_id})
            seal_status[u] = "Sealed"
        else:
            seal_status[u] = result.reason.value

    # (4) anchored objects follow their seals; over-constrained anchors shed
    # the weakest seal until the fit residual is small
    def seals_on(oid):
        return [u for u in UNIT_IDS
                if suction[u].seal is not None and suction[u].seal.object_id == oid]

    for oid in objects:
        if objects[oid].dropped:
            continue
        while True:
            units = seals_on(oid)
            if not units:
                break
            fits = [cups[u] @ suction[u].seal.anchor for u in units]
            pose = _average_pose(fits)
            residuals = [
                float(np.linalg.norm((pose @ suction[u].seal.anchor.inverse()).pos
                                     - cups[u].pos))
                for u in units
            ]
            if max(residuals) <= ANCHOR_RESIDUAL_TOL:
                objects[oid] = dataclasses.replace(objects[oid], pose=pose)
                break
            weakest = min(units, key=lambda u: (suction[u].adhesion_limit,
                                                UNIT_IDS.index(u)))
            info = suction[weakest].seal
            suction[weakest] = dataclasses.replace(
                suction[weakest], seal=None, adhesion_limit=0.0)
            seal_status[weakest] = "Broken"
            emit("SealBroken", {"unit": weakest, "object_id": info.object_id,
                                "patch_id": info.patch_id, "cause": "overconstraint"})

    # (5) axial load check: a hanging object's weight splits across its seals;
    # anything the palm plane would support does not load them
    for oid, obj in objects.items():
        if obj.dropped:
            continue
        units = seals_on(oid)
        if not units:
            continue
        plane = _plane_patch(obj)
        if plane is not None:
            continue
        n = len(units)
        for u in units:
            axis = cups[u].rot[:, 2]
            pull = required_pull(obj.mass, cfg.gravity, axis, DOWN) / n
            if seal_break_check(suction[u], pull) is SealStatus.BROKEN:
                info = suction[u].seal
                suction[u] = dataclasses.replace(suction[u], seal=None, adhesion_limit=0.0)
                seal_status[u] = "Broken"
                emit("SealBroken", {"unit": u, "object_id": info.object_id,
                                    "patch_id": info.patch_id, "cause": "overload",
                                    "pull_n": pull})

    # (6) support classification and drops
    midworld = dataclasses.replace(world, q=q_new, suction=suction, objects=objects)
    contacts, objects, dropped_ids = _resolve_support(midworld, cups)
    for oid in dropped_ids:
        emit("ObjectDropped", {"object_id": oid})

    # self-collision onset
    pairs = frozenset((a, b) for a, b, _ in self_collision_pairs(world.model, q_new))
    for pair in sorted(pairs - world.colliding):
        emit("SelfCollision", {"fingers": list(pair)})

    # (7) clock
    return dataclasses.replace(
        world,
        clock=now,
        q=q_new,
        suction=suction,
        objects=objects,
        contacts=tuple(contacts),
        events=world.events + tuple(new_events),
        colliding=pairs,
        seal_status=seal_status,
    )


def with_event(world: WorldState, kind: str, payload: dict) -> WorldState:
    """Append an out-of-band event (task bookkeeping) at the current clock."""
    seq = world.events[-1].seq + 1 if world.events else 1
    ev = Event(world.clock, seq, kind, payload)
    return dataclasses.replace(world, events=world.events + (ev,))
