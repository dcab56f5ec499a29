"""Session loop core: owns one world, folds inbound control messages into
command state, steps at the configured tick, broadcasts state, and records
the demo log as the verbatim byte stream in both directions.

The core is synchronous and transport-free; the network server drives it
from asyncio, tests and the replay verifier drive it directly.
"""

from __future__ import annotations

from .errors import DivergenceDetected
from .protocol import (
    StateBroadcast,
    decode_message,
    encode_message,
    follower_apply,
    make_broadcast,
    SessionState,
)
from .world import WorldState, step


class SessionCore:
    def __init__(self, world: WorldState, log_sink=None):
        self.world = world
        self.session = SessionState()
        self._since_seq = world.events[-1].seq if world.events else 0
        self._log = log_sink

    def _record(self, line: bytes) -> None:
        if self._log is not None:
            self._log.write(line)

    def apply(self, msg) -> None:
        self.world, self.session = follower_apply(self.world, self.session, msg)

    def handle_line(self, line: bytes) -> None:
        """Decode and apply one inbound line; logged verbatim only after it
        is accepted, so every recorded log replays cleanly."""
        msg = decode_message(line)
        self.apply(msg)
        self._record(line if line.endswith(b"\n") else line + b"\n")

    def tick(self) -> StateBroadcast:
        """One world step with the held commands, then a state broadcast."""
        cmd_q = self.session.cmd_q if self.session.cmd_q is not None else self.world.q
        self.world = step(self.world, cmd_q, self.session.valve_map())
        bc = make_broadcast(self.world, self._since_seq)
        if self.world.events:
            self._since_seq = self.world.events[-1].seq
        self._record(encode_message(bc))
        return bc


def _mismatch(recorded, recomputed, tol=1e-9, path="") -> str | None:
    """First differing field between two decoded JSON-ish values, or None."""
    if isinstance(recorded, bool) or isinstance(recomputed, bool):
        if recorded is not recomputed:
            return f"{path}: {recorded!r} != {recomputed!r}"
        return None
    if isinstance(recorded, (int, float)) and isinstance(recomputed, (int, float)):
        if abs(float(recorded) - float(recomputed)) > tol:
            return f"{path}: {recorded!r} != {recomputed!r}"
        return None
    if isinstance(recorded, dict) and isinstance(recomputed, dict):
        if set(recorded) != set(recomputed):
            return f"{path}: keys {sorted(recorded)} != {sorted(recomputed)}"
        for k in recorded:
            m = _mismatch(recorded[k], recomputed[k], tol, f"{path}.{k}")
            if m:
                return m
        return None
    if isinstance(recorded, (list, tuple)) and isinstance(recomputed, (list, tuple)):
        if len(recorded) != len(recomputed):
            return f"{path}: length {len(recorded)} != {len(recomputed)}"
        for i, (a, b) in enumerate(zip(recorded, recomputed)):
            m = _mismatch(a, b, tol, f"{path}[{i}]")
            if m:
                return m
        return None
    if recorded != recomputed:
        return f"{path}: {recorded!r} != {recomputed!r}"
    return None


def _broadcast_doc(bc: StateBroadcast) -> dict:
    return {"t_ms": bc.t_ms, "q": list(bc.q), "suction": bc.suction,
            "objects": bc.objects, "events": list(bc.events)}


def replay_log(lines, world: WorldState, tol: float = 1e-9):
    """Re-run a demo log against a fresh world and verify every recorded
    state broadcast. Returns (final world, ticks verified). Raises
    MalformedFrame on an undecodable line and DivergenceDetected at the
    first tick whose recomputed state drifts beyond tol."""
    core = SessionCore(world)
    ticks = 0
    for line in lines:
        if not line.strip():
            continue
        msg = decode_message(line)
        if isinstance(msg, StateBroadcast):
            recomputed = core.tick()
            ticks += 1
            diff = _mismatch(_broadcast_doc(msg), _broadcast_doc(recomputed), tol)
            if diff:
                raise DivergenceDetected(ticks, diff)
        else:
            core.apply(msg)
    return core.world, ticks
