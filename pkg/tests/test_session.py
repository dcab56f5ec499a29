"""Session core, demo-log replay, divergence detection, and the asyncio
teleop server end to end over real sockets."""

import asyncio
import io
import json
import socket

import numpy as np
import pytest

from sleap_sim.errors import (
    BindError,
    DivergenceDetected,
    MalformedFrame,
)
from sleap_sim.geometry import Frame, rotation_with_z_axis
from sleap_sim.hand import solve_ik
from sleap_sim.protocol import (
    ButtonEvent,
    Hello,
    JointFrame,
    StateBroadcast,
    ValveCommand,
    decode_message,
    encode_message,
    validate_message_log,
)
from sleap_sim.server import TeleopServer
from sleap_sim.session import SessionCore, _mismatch, replay_log
from sleap_sim.world import load_scene


def stance_over_cube(world, z=0.04):
    target = Frame(rotation_with_z_axis([0, 0, -1]), [0.0, 0.0, z])
    return solve_ik(world.model, "index", target, pos_tol=1e-7, rot_tol=1e-8,
                    max_iters=500, axis_only=True)


def scripted_log(world):
    """Drive a pick-and-lift through a SessionCore, returning the demo log
    bytes and the live final world."""
    sink = io.BytesIO()
    core = SessionCore(world, log_sink=sink)
    down = stance_over_cube(world)
    up = solve_ik(world.model, "index",
                  Frame(rotation_with_z_axis([0, 0, -1]), [0.0, 0.0, 0.06]),
                  seed=down, pos_tol=1e-7, rot_tol=1e-8, max_iters=500,
                  axis_only=True)
    core.handle_line(encode_message(Hello(role="leader")))
    core.handle_line(encode_message(ButtonEvent(0, "index", "drag", True)))
    core.handle_line(encode_message(JointFrame(10, tuple(down))))
    for _ in range(60):
        core.tick()
    core.handle_line(encode_message(ValveCommand(1300, "index", True)))
    core.tick()
    assert core.world.unit("index").sealed
    core.handle_line(encode_message(JointFrame(1400, tuple(up))))
    for _ in range(40):
        core.tick()
    core.handle_line(encode_message(ButtonEvent(2300, "index", "drag", False)))
    core.tick()
    return sink.getvalue(), core.world


def test_scripted_session_replays_exactly():
    live_log, live_world = scripted_log(load_scene("cube"))
    lines = live_log.splitlines(keepends=True)
    state_lines = sum(
        1 for ln in lines if isinstance(decode_message(ln), StateBroadcast))
    assert state_lines == 102

    final, ticks = replay_log(lines, load_scene("cube"))
    assert ticks == 102
    assert np.array_equal(final.q, live_world.q)
    assert final.clock == live_world.clock
    pose = final.objects["cube"].pose
    assert np.allclose(pose.pos, live_world.objects["cube"].pose.pos)
    assert pose.pos[2] > 0.015  # the lift actually happened

    # the recorded stream is also a well-formed protocol exchange
    assert validate_message_log(lines) == []


def test_replay_detects_mutation_at_the_right_tick():
    live_log, _ = scripted_log(load_scene("cube"))
    lines = live_log.splitlines(keepends=True)

    k = 0
    for i, ln in enumerate(lines):
        if isinstance(decode_message(ln), StateBroadcast):
            k += 1
            if k == 70:  # mid-lift, q is changing
                doc = json.loads(ln)
                doc["q"][4] += 1e-3
                lines[i] = (json.dumps(doc, separators=(",", ":")) + "\n").encode()
                break

    with pytest.raises(DivergenceDetected) as exc:
        replay_log(lines, load_scene("cube"))
    assert exc.value.tick == 70
    assert ".q[4]" in exc.value.detail


def test_replay_tolerates_sub_tolerance_noise():
    live_log, _ = scripted_log(load_scene("cube"))
    lines = live_log.splitlines(keepends=True)
    for i, ln in enumerate(lines):
        doc = json.loads(ln)
        if doc["type"] == "state" and doc["q"][4] != 0.0:
            doc["q"][4] += 1e-12
            lines[i] = (json.dumps(doc, separators=(",", ":")) + "\n").encode()
            break
    final, ticks = replay_log(lines, load_scene("cube"))
    assert ticks == 102


def test_replay_rejects_garbage_line():
    live_log, _ = scripted_log(load_scene("cube"))
    lines = live_log.splitlines(keepends=True)
    lines.insert(3, b"garbage\n")
    with pytest.raises(MalformedFrame):
        replay_log(lines, load_scene("cube"))


def test_replay_empty_log():
    world, ticks = replay_log([], load_scene("cube"))
    assert ticks == 0
    assert world.clock == 0.0


def test_mismatch_paths_and_tolerance():
    assert _mismatch(1.0, 1.0 + 1e-12) is None
    m = _mismatch({"a": {"b": [0, 1.5]}}, {"a": {"b": [0, 1.7]}})
    assert m is not None and ".a.b[1]" in m
    assert _mismatch(True, 1) is not None  # bool is not a number here
    assert _mismatch({"a": 1}, {"b": 1}) is not None
    assert _mismatch([1], [1, 2]) is not None
    assert _mismatch("Sealed", "Sealed") is None
    assert _mismatch(None, None) is None


# ---------------------------------------------------------------------------
# server over real sockets


async def connect(port, role):
    reader, writer = await asyncio.open_connection("127.0.0.1", port)
    writer.write(encode_message(Hello(role=role)))
    await writer.drain()
    return reader, writer


def bound_port(server):
    return server._servers[0].sockets[0].getsockname()[1]


def test_server_serves_leader_and_observer():
    async def main():
        world = load_scene("cube")
        sink = io.BytesIO()
        server = TeleopServer(world, "127.0.0.1", 0, hz=200.0,
                              log_sink=sink, enable_ws=False)
        await server.start()
        port = bound_port(server)
        run_task = asyncio.create_task(server.run(max_ticks=60))

        leader_r, leader_w = await connect(port, "leader")
        await asyncio.sleep(0.03)
        obs_r, obs_w = await connect(port, "observer")

        down = stance_over_cube(world)
        leader_w.write(encode_message(ButtonEvent(0, "index", "drag", True)))
        leader_w.write(encode_message(JointFrame(10, tuple(down))))
        leader_w.write(encode_message(ValveCommand(20, "palm", True)))
        await leader_w.drain()

        # both peers receive live state broadcasts
        for r in (leader_r, obs_r):
            line = await asyncio.wait_for(r.readline(), 2.0)
            assert isinstance(decode_message(line), StateBroadcast)

        ticks = await run_task
        assert ticks == 60

        for w in (leader_w, obs_w):
            w.close()
        return sink.getvalue(), world

    log, fresh = asyncio.run(main())
    lines = log.splitlines(keepends=True)
    docs = [json.loads(ln) for ln in lines]
    assert sum(1 for d in docs if d["type"] == "state") == 60
    # ticks may precede the leader's arrival, but its hello precedes its
    # control traffic in the log
    kinds = [d["type"] for d in docs if d["type"] != "state"]
    assert kinds == ["hello", "button", "joints", "valve"]

    # a served session's log replays cleanly from the same scene
    final, ticks = replay_log(lines, load_scene("cube"))
    assert ticks == 60
    assert final.unit("palm").valve_open


def test_server_rejects_second_leader():
    async def main():
        server = TeleopServer(load_scene("cube"), "127.0.0.1", 0, hz=200.0,
                              enable_ws=False)
        await server.start()
        port = bound_port(server)
        run_task = asyncio.create_task(server.run(max_ticks=30))

        r1, w1 = await connect(port, "leader")
        await asyncio.sleep(0.02)
        r2, w2 = await connect(port, "leader")
        # the second leader is disconnected without receiving anything
        rejected = await asyncio.wait_for(r2.read(), 2.0)
        assert rejected == b""
        # the first leader keeps streaming
        line = await asyncio.wait_for(r1.readline(), 2.0)
        assert isinstance(decode_message(line), StateBroadcast)
        await run_task
        w1.close()
        w2.close()

    asyncio.run(main())


def test_server_drops_observer_that_talks():
    async def main():
        server = TeleopServer(load_scene("cube"), "127.0.0.1", 0, hz=200.0,
                              enable_ws=False)
        await server.start()
        port = bound_port(server)
        run_task = asyncio.create_task(server.run(max_ticks=30))

        r, w = await connect(port, "observer")
        w.write(encode_message(ValveCommand(0, "palm", True)))
        await w.drain()
        await run_task
        # the command never reached the world
        assert not server.core.world.unit("palm").valve_open
        assert not server.core.session.established
        w.close()

    asyncio.run(main())


def test_server_bind_error():
    async def main():
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            server = TeleopServer(load_scene("cube"), "127.0.0.1", port,
                                  hz=50.0, enable_ws=False)
            with pytest.raises(BindError):
                await server.start()
        finally:
            blocker.close()

    asyncio.run(main())


def test_server_rejects_malformed_first_frame():
    async def main():
        server = TeleopServer(load_scene("cube"), "127.0.0.1", 0, hz=200.0,
                              enable_ws=False)
        await server.start()
        port = bound_port(server)
        run_task = asyncio.create_task(server.run(max_ticks=10))
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(b"hello in plain words\n")
        await writer.drain()
        closed = await asyncio.wait_for(reader.read(), 2.0)
        assert closed == b""
        await run_task
        writer.close()

    asyncio.run(main())
