"""Command-line entry points: serve a live teleop session, replay a demo
log against a fresh world, and score tasks.

Exit codes are fixed for scripting: 0 ok, 2 bad configuration, 3 listen
address unavailable, 4 undecodable log line, 5 replay divergence, 6 task
not executable.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import datetime
import logging
import os
import signal
import sys
from pathlib import Path

from .errors import (
    BindError,
    DivergenceDetected,
    MalformedFrame,
    ParseError,
    SceneError,
    SimError,
    Unexecutable,
)
from .hand import load_hand_model
from .protocol import validate_message_log
from .scripts import script_for
from .server import TeleopServer
from .session import replay_log
from .tasks import (
    format_csv,
    format_report,
    load_records,
    load_task,
    run_scripted_trials,
)
from .world import load_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BIND = 3
EXIT_MALFORMED = 4
EXIT_DIVERGED = 5
EXIT_UNEXECUTABLE = 6

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("sleap_sim.cli")


def _setup_logging() -> None:
    name = os.environ.get("SLEAP_SIM_LOG_LEVEL", "warn").lower()
    if name not in _LOG_LEVELS:
        raise ParseError(
            f"SLEAP_SIM_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, "
            f"not {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name],
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_world(scene: str, hand: str | None, seed: int = 0):
    model = load_hand_model(hand) if hand else None
    return load_scene(scene, hand=model, seed=seed)


def _parse_endpoint(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ParseError(f"listen endpoint must be host:port, not {text!r}")
    return host or "127.0.0.1", int(port)


def _stamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%SZ")


class _FlushingSink:
    """File sink that completes every line on disk as it is written, so an
    interrupted session never leaves a torn frame."""

    def __init__(self, path: Path):
        self._fh = open(path, "wb")

    def write(self, line: bytes) -> None:
        self._fh.write(line)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


# ---------------------------------------------------------------------------
# subcommands


def cmd_serve(args) -> int:
    world = _load_world(args.scene, args.hand, args.seed)
    host, port = _parse_endpoint(args.listen)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_id = Path(args.scene).stem
    log_path = out_dir / f"{scene_id}-{_stamp()}-{args.seed}.demolog"
    sink = _FlushingSink(log_path)
    server = TeleopServer(world, host, port, hz=args.hz, log_sink=sink,
                          enable_ws=not args.no_ws)

    async def main():
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            with contextlib.suppress(NotImplementedError):
                loop.add_signal_handler(sig, server.stop)
        await server.start()
        print(f"listening on {host}:{port}, log {log_path}", flush=True)
        return await server.run(max_ticks=args.ticks)

    try:
        ticks = asyncio.run(main())
    finally:
        sink.close()
    print(f"served {ticks} ticks, log {log_path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    world = _load_world(args.scene, args.hand)
    lines = Path(args.log).read_bytes().splitlines(keepends=True)
    try:
        final, ticks = replay_log(lines, world)
    except DivergenceDetected as e:
        print(f"diverged at tick {e.tick}: {e.detail}")
        return EXIT_DIVERGED
    supports = {oid: obj.support for oid, obj in final.objects.items()}
    print(f"replayed {ticks} ticks, clock {final.clock:.2f}s, objects {supports}")
    return EXIT_OK


def cmd_eval(args) -> int:
    task = load_task(args.task)
    if args.records:
        trials = load_records(args.records)
        bad = [t.task_id for t in trials if t.task_id != task.task_id]
        if bad:
            raise ParseError(
                f"records are for {bad[0]!r}, task is {task.task_id!r}")
    else:
        script = script_for(task.task_id)
        if script is None or task.scene is None:
            raise Unexecutable(
                f"task {task.task_id} has no scripted operator; score it "
                f"from records with --records")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        trials = run_scripted_trials(task, script, n=args.n, seed=args.seed,
                                     out_dir=out_dir)
    items = [(task, trials)]
    print(format_report(items), end="")
    csv_path = Path(args.out) / f"{task.task_id}-metrics.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(format_csv(items))
    log.info("metrics CSV written to %s", csv_path)
    return EXIT_OK


def cmd_validate(args) -> int:
    lines = Path(args.log).read_bytes().splitlines(keepends=True)
    violations = validate_message_log(lines)
    for v in violations:
        print(v)
    return EXIT_OK if not violations else EXIT_MALFORMED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sleap-sim",
        description="Suction-augmented three-finger hand simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run a live teleop session")
    serve.add_argument("--scene", required=True, help="scene file or name")
    serve.add_argument("--hand", default=None, help="hand description file")
    serve.add_argument("--listen", default="127.0.0.1:8765",
                       help="host:port (websocket uses port+1)")
    serve.add_argument("--hz", type=float, default=50.0,
                       help="tick rate; 0 runs unpaced")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--out", default=".", help="demo log directory")
    serve.add_argument("--ticks", type=int, default=None,
                       help="stop after this many ticks (default: run forever)")
    serve.add_argument("--no-ws", action="store_true",
                       help="serve plain TCP only")
    serve.set_defaults(func=cmd_serve)

    replay = sub.add_parser("replay", help="verify a demo log by re-running it")
    replay.add_argument("--log", required=True)
    replay.add_argument("--scene", required=True)
    replay.add_argument("--hand", default=None)
    replay.set_defaults(func=cmd_replay)

    ev = sub.add_parser("eval", help="score a task and print its metrics row")
    ev.add_argument("--task", required=True, help="task file or name")
    ev.add_argument("--n", type=int, default=10, help="trials to run")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--records", default=None,
                    help="score recorded trials instead of running scripted ones")
    ev.add_argument("--out", default=".", help="CSV and demo log directory")
    ev.set_defaults(func=cmd_eval)

    val = sub.add_parser("validate",
                         help="check a message log against protocol invariants")
    val.add_argument("--log", required=True)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except BindError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BIND
    except MalformedFrame as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except Unexecutable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNEXECUTABLE
    except (ParseError, SceneError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
