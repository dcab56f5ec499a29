"""Leader-follower wire protocol: newline-delimited JSON frames plus the
session state machines on both ends.

Wire format: one UTF-8 JSON object per line, '\n' terminated. Message types
on the wire are hello, joints, button, valve, pause, resume, state. Joint
streaming is gated by drag buttons on the leader; suction buttons toggle
valve state on press edges; pause freezes everything the follower applies
until resume.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from .errors import MalformedFrame, ProtocolViolation
from .suction import UNIT_IDS

PROTOCOL_VERSION = "1"
ROLES = ("leader", "follower", "observer")
FINGERS = ("thumb", "index", "ring")


def _check_t(t_ms) -> int:
    if not isinstance(t_ms, int) or isinstance(t_ms, bool) or t_ms < 0:
        raise MalformedFrame(f"t_ms must be a non-negative integer, got {t_ms!r}")
    return t_ms


def _check_unit(unit) -> str:
    if unit not in UNIT_IDS:
        raise MalformedFrame(f"unknown unit {unit!r}")
    return unit


@dataclass(frozen=True)
class Hello:
    role: str
    version: str = PROTOCOL_VERSION

    def __post_init__(self):
        if self.role not in ROLES:
            raise MalformedFrame(f"unknown role {self.role!r}")
        if not isinstance(self.version, str):
            raise MalformedFrame("version must be a string")


@dataclass(frozen=True)
class JointFrame:
    t_ms: int
    q: tuple

    def __post_init__(self):
        _check_t(self.t_ms)
        q = tuple(float(v) for v in self.q)
        if len(q) != 15 or not all(math.isfinite(v) for v in q):
            raise MalformedFrame("q must be 15 finite numbers")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class ButtonEvent:
    t_ms: int
    unit: str
    kind: str  # drag | suction
    pressed: bool

    def __post_init__(self):
        _check_t(self.t_ms)
        _check_unit(self.unit)
        if self.kind not in ("drag", "suction"):
            raise MalformedFrame(f"unknown button kind {self.kind!r}")
        if self.kind == "drag" and self.unit == "palm":
            raise MalformedFrame("the palm has no drag button")
        if not isinstance(self.pressed, bool):
            raise MalformedFrame("pressed must be a boolean")


@dataclass(frozen=True)
class ValveCommand:
    t_ms: int
    unit: str
    open: bool

    def __post_init__(self):
        _check_t(self.t_ms)
        _check_unit(self.unit)
        if not isinstance(self.open, bool):
            raise MalformedFrame("open must be a boolean")


@dataclass(frozen=True)
class Pause:
    t_ms: int

    def __post_init__(self):
        _check_t(self.t_ms)


@dataclass(frozen=True)
class Resume:
    t_ms: int

    def __post_init__(self):
        _check_t(self.t_ms)


@dataclass(frozen=True)
class StateBroadcast:
    t_ms: int
    q: tuple
    suction: dict  # unit -> {valve_open, sealed, object_id, patch_id, adhesion_limit, status}
    objects: dict  # object_id -> {quat, pos, support, dropped}
    events: tuple  # event dicts since the previous broadcast

    def __post_init__(self):
        _check_t(self.t_ms)
        q = tuple(float(v) for v in self.q)
        if len(q) != 15 or not all(math.isfinite(v) for v in q):
            raise MalformedFrame("q must be 15 finite numbers")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "events", tuple(self.events))


TeleopMessage = Hello | JointFrame | ButtonEvent | ValveCommand | Pause | Resume | StateBroadcast

_WIRE_TYPE = {
    Hello: "hello", JointFrame: "joints", ButtonEvent: "button",
    ValveCommand: "valve", Pause: "pause", Resume: "resume",
    StateBroadcast: "state",
}


def encode_message(msg: TeleopMessage) -> bytes:
    """One JSON object, one line, newline terminated."""
    try:
        wire_type = _WIRE_TYPE[type(msg)]
    except KeyError:
        raise MalformedFrame(f"not a protocol message: {msg!r}") from None
    doc = {"type": wire_type}
    if isinstance(msg, Hello):
        doc["version"] = msg.version
        doc["role"] = msg.role
    elif isinstance(msg, JointFrame):
        doc["t_ms"] = msg.t_ms
        doc["q"] = list(msg.q)
    elif isinstance(msg, ButtonEvent):
        doc.update(t_ms=msg.t_ms, unit=msg.unit, kind=msg.kind, pressed=msg.pressed)
    elif isinstance(msg, ValveCommand):
        doc.update(t_ms=msg.t_ms, unit=msg.unit, open=msg.open)
    elif isinstance(msg, (Pause, Resume)):
        doc["t_ms"] = msg.t_ms
    else:
        doc.update(t_ms=msg.t_ms, q=list(msg.q), suction=msg.suction,
                   objects=msg.objects, events=list(msg.events))
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode()


def decode_message(data) -> TeleopMessage:
    """Inverse of encode_message for one complete line."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise MalformedFrame(f"bad JSON: {e}") from e
    if not isinstance(doc, dict):
        raise MalformedFrame("frame must be a JSON object")
    kind = doc.get("type")
    try:
        if kind == "hello":
            return Hello(role=doc["role"], version=doc["version"])
        if kind == "joints":
            return JointFrame(t_ms=doc["t_ms"], q=doc["q"])
        if kind == "button":
            return ButtonEvent(t_ms=doc["t_ms"], unit=doc["unit"],
                               kind=doc["kind"], pressed=doc["pressed"])
        if kind == "valve":
            return ValveCommand(t_ms=doc["t_ms"], unit=doc["unit"], open=doc["open"])
        if kind == "pause":
            return Pause(t_ms=doc["t_ms"])
        if kind == "resume":
            return Resume(t_ms=doc["t_ms"])
        if kind == "state":
            return StateBroadcast(t_ms=doc["t_ms"], q=doc["q"],
                                  suction=doc["suction"], objects=doc["objects"],
                                  events=doc["events"])
    except KeyError as e:
        raise MalformedFrame(f"missing field {e} in {kind!r} frame") from e
    except (TypeError, ValueError) as e:
        raise MalformedFrame(f"bad {kind!r} frame: {e}") from e
    raise MalformedFrame(f"unknown message type {kind!r}")


# ---------------------------------------------------------------------------
# leader side


class LeaderSession:
    """Turns per-tick button and joint readings into protocol messages.

    Joint frames stream only while at least one drag button is held; each
    suction button press edge toggles that unit's valve; while paused the
    leader emits nothing and button edges are discarded.
    """

    def __init__(self):
        self.paused = False
        self.valve_state = {u: False for u in UNIT_IDS}
        self._prev_drag = {f: False for f in FINGERS}
        self._prev_suction = {u: False for u in UNIT_IDS}
        self._last_t = -1

    def _take_clock(self, clock_ms: int) -> int:
        if clock_ms < self._last_t:
            raise ProtocolViolation(
                f"leader clock went backwards: {clock_ms} < {self._last_t}")
        self._last_t = clock_ms
        return clock_ms

    def tick(self, drag: dict, suction: dict, leader_q, clock_ms: int) -> list:
        """drag: pressed state per finger; suction: pressed state per unit."""
        t = self._take_clock(int(clock_ms))
        drag = {f: bool(drag.get(f, False)) for f in FINGERS}
        suction = {u: bool(suction.get(u, False)) for u in UNIT_IDS}
        msgs = []
        if not self.paused:
            for f in FINGERS:
                if drag[f] != self._prev_drag[f]:
                    msgs.append(ButtonEvent(t, f, "drag", drag[f]))
            for u in UNIT_IDS:
                if suction[u] and not self._prev_suction[u]:
                    msgs.append(ButtonEvent(t, u, "suction", True))
                    self.valve_state[u] = not self.valve_state[u]
                    msgs.append(ValveCommand(t, u, self.valve_state[u]))
                elif not suction[u] and self._prev_suction[u]:
                    msgs.append(ButtonEvent(t, u, "suction", False))
            if any(drag.values()):
                msgs.append(JointFrame(t, tuple(float(v) for v in leader_q)))
            # Drag is a held state: freeze its previous-state tracking while
            # paused so a change made during the pause surfaces as an edge on
            # resume and the log stays consistent with the joint stream.
            self._prev_drag = drag
        # Suction is a momentary action: presses during a pause never fire,
        # so its tracking advances unconditionally.
        self._prev_suction = suction
        return msgs

    def pause(self, clock_ms: int) -> Pause:
        self.paused = True
        return Pause(self._take_clock(int(clock_ms)))

    def resume(self, clock_ms: int) -> Resume:
        self.paused = False
        return Resume(self._take_clock(int(clock_ms)))


# ---------------------------------------------------------------------------
# follower side


@dataclass(frozen=True)
class SessionState:
    established: bool = False
    peer_role: str | None = None
    paused: bool = False
    drag_engaged: tuple = (False, False, False)  # thumb, index, ring
    cmd_q: tuple | None = None          # None: hold the world's current joints
    valves: tuple = (False, False, False, False)  # UNIT_IDS order
    t_ms_regressions: int = 0
    last_t_ms: int = -1

    def valve_map(self) -> dict:
        return dict(zip(UNIT_IDS, self.valves))


_CONTROL_TYPES = (JointFrame, ButtonEvent, ValveCommand, Pause, Resume)


def follower_apply(world, session: SessionState, msg: TeleopMessage):
    """Fold one inbound message into the follower's command state.

    Never steps the world; joint and valve commands take effect on the next
    step the session loop runs. Returns (world, new session).
    """
    if isinstance(msg, Hello):
        if msg.version != PROTOCOL_VERSION:
            raise ProtocolViolation(f"unsupported protocol version {msg.version!r}")
        return world, dataclasses.replace(session, established=True,
                                          peer_role=msg.role)
    if not session.established:
        raise ProtocolViolation(f"{_WIRE_TYPE[type(msg)]} before hello")
    if isinstance(msg, StateBroadcast):
        raise ProtocolViolation("state broadcasts flow follower to peers, not inbound")
    if session.peer_role != "leader" and isinstance(msg, _CONTROL_TYPES):
        raise ProtocolViolation(
            f"control message from role {session.peer_role!r}")

    if msg.t_ms < session.last_t_ms:
        session = dataclasses.replace(
            session, t_ms_regressions=session.t_ms_regressions + 1)
    session = dataclasses.replace(session, last_t_ms=max(session.last_t_ms, msg.t_ms))

    if isinstance(msg, Pause):
        return world, dataclasses.replace(session, paused=True)
    if isinstance(msg, Resume):
        return world, dataclasses.replace(session, paused=False)
    if session.paused:
        return world, session  # frozen: commands dropped, not buffered
    if isinstance(msg, JointFrame):
        return world, dataclasses.replace(session, cmd_q=msg.q)
    if isinstance(msg, ValveCommand):
        valves = list(session.valves)
        valves[UNIT_IDS.index(msg.unit)] = msg.open
        return world, dataclasses.replace(session, valves=tuple(valves))
    if isinstance(msg, ButtonEvent):
        if msg.kind == "drag":
            drag = list(session.drag_engaged)
            drag[FINGERS.index(msg.unit)] = msg.pressed
            return world, dataclasses.replace(session, drag_engaged=tuple(drag))
        return world, session  # suction buttons act via their ValveCommands
    raise ProtocolViolation(f"unhandled message {msg!r}")


def make_broadcast(world, since_seq: int) -> StateBroadcast:
    """Snapshot the world into a state frame carrying events after since_seq."""
    suction = {}
    for u in UNIT_IDS:
        st = world.unit(u)
        suction[u] = {
            "valve_open": st.valve_open,
            "sealed": st.sealed,
            "object_id": st.seal.object_id if st.seal else None,
            "patch_id": st.seal.patch_id if st.seal else None,
            "adhesion_limit": st.adhesion_limit,
            "status": world.seal_status.get(u, "ValveClosed"),
        }
    objects = {}
    for oid, obj in world.objects.items():
        objects[oid] = {
            "quat": list(obj.pose.quat()),
            "pos": [float(v) for v in obj.pose.pos],
            "support": obj.support,
            "dropped": obj.dropped,
        }
    return StateBroadcast(
        t_ms=int(round(world.clock * 1000.0)),
        q=tuple(float(v) for v in world.q),
        suction=suction,
        objects=objects,
        events=tuple(e.to_dict() for e in world.events_after(since_seq)),
    )


# ---------------------------------------------------------------------------
# log validation


def validate_message_log(lines) -> list:
    """Check a demo log (iterable of raw lines or decoded messages) against
    the protocol invariants. Returns human-readable violations; empty means
    the log is clean."""
    violations = []
    drag = {f: False for f in FINGERS}
    valve_balance = {u: 0 for u in UNIT_IDS}
    paused = False
    last_control_t = -1
    last_state_t = -1
    for i, item in enumerate(lines):
        if isinstance(item, (bytes, bytearray, str)):
            if not item.strip():
                continue
            try:
                msg = decode_message(item)
            except MalformedFrame as e:
                violations.append(f"line {i}: {e}")
                continue
        else:
            msg = item
        if isinstance(msg, Hello):
            continue
        if isinstance(msg, StateBroadcast):
            if msg.t_ms < last_state_t:
                violations.append(f"line {i}: state t_ms regressed")
            last_state_t = msg.t_ms
            continue
        if msg.t_ms < last_control_t:
            violations.append(f"line {i}: control t_ms regressed")
        last_control_t = msg.t_ms
        if isinstance(msg, Pause):
            paused = True
        elif isinstance(msg, Resume):
            paused = False
        elif paused:
            violations.append(f"line {i}: {_WIRE_TYPE[type(msg)]} while paused")
        elif isinstance(msg, ButtonEvent) and msg.kind == "drag":
            drag[msg.unit] = msg.pressed
        elif isinstance(msg, JointFrame):
            if not any(drag.values()):
                violations.append(f"line {i}: joint frame with no drag engaged")
        elif isinstance(msg, ValveCommand):
            valve_balance[msg.unit] += 1 if msg.open else -1
            if valve_balance[msg.unit] not in (0, 1):
                violations.append(
                    f"line {i}: valve toggle parity broken on {msg.unit}")
    return violations
