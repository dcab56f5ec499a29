"""Tasks as ordered step predicates over world traces, scripted trial
execution with demo logging, and the three summary metrics.

A task file is pure data: each step carries a declarative predicate
evaluated against world snapshots. Steps complete strictly in order; a
step's spatial references (initial orientation, initial height) are taken
from the snapshot at which the previous step first held, so "rotate 90
about X, then 90 about Y" means two successive quarter turns, not two
absolute orientations.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTrialSet,
    IkNoConvergence,
    JointLimitError,
    MixedTasks,
    NoSuccessfulTrials,
    ParseError,
    PlanAborted,
    Unexecutable,
    Unplannable,
)
from .geometry import axis_angle_mat
from .protocol import (
    ButtonEvent,
    Hello,
    JointFrame,
    ValveCommand,
    encode_message,
    make_broadcast,
)
from .regrasp import execute_regrasp
from .suction import UNIT_IDS
from .world import WorldState, load_scene, perturb_object

FAILURE_KINDS = ("Dropped", "Timeout", "PlanAborted", "Other")
FLAG_KEYS = ("M", "D", "A", "R")

_TASK_DIR = Path(__file__).parent / "data" / "tasks"
_RECORDS_DIR = Path(__file__).parent / "data" / "records"


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class StepSpec:
    step_id: str
    description: str
    predicate: dict  # {"kind": ..., "params": {...}}

    def __post_init__(self):
        kind = self.predicate.get("kind")
        if kind not in _PREDICATES:
            raise ParseError(f"step {self.step_id}: unknown predicate kind {kind!r}")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    name: str
    flags: dict  # {"M": bool, "D": bool, "A": bool, "R": bool}
    steps: tuple
    timeout_s: float
    scene: str | None = None       # present only on executable tasks
    reference_row: dict | None = None  # previously reported {sr, completeness, time_s}

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ParseError(f"task {self.task_id}: needs at least one step")
        if self.timeout_s <= 0:
            raise ParseError(f"task {self.task_id}: timeout must be positive")
        if set(self.flags) != set(FLAG_KEYS):
            raise ParseError(f"task {self.task_id}: flags must be exactly {FLAG_KEYS}")

    @property
    def total_steps(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class TrialRecord:
    task_id: str
    trial_index: int
    steps_completed: int
    total_steps: int
    success: bool
    duration_s: float
    failure_kind: str | None = None
    demo_log_path: str | None = None

    def __post_init__(self):
        assert 0 <= self.steps_completed <= self.total_steps
        assert self.duration_s > 0
        if self.success:
            assert self.steps_completed == self.total_steps
            assert self.failure_kind is None
        else:
            assert self.failure_kind in FAILURE_KINDS


@dataclass(frozen=True)
class MetricsRow:
    task_id: str
    overall_sr: float
    step_completeness: float
    avg_time_s: float | None  # None when no trial succeeded

    def __post_init__(self):
        assert 0.0 <= self.overall_sr <= 1.0
        assert 0.0 <= self.step_completeness <= 1.0
        # success contributes fully to both, failure only to completeness
        assert self.overall_sr <= self.step_completeness


# ---------------------------------------------------------------------------
# step predicates

# Every checker sees the current snapshot plus the segment reference: the
# snapshot at which the previous step first held and its last event seq.


def _object_state(world: WorldState, object_id: str):
    obj = world.objects.get(object_id)
    if obj is None or obj.dropped:
        return None
    return obj


def _rotation_angle(rot: np.ndarray) -> float:
    return math.acos(min(1.0, max(-1.0, (np.trace(rot) - 1.0) / 2.0)))


def _pred_orientation_about_axis(world, ref, ref_seq, p) -> bool:
    obj, ref_obj = _object_state(world, p["object"]), _object_state(ref, p["object"])
    if obj is None or ref_obj is None:
        return False
    axis = np.asarray(p["axis"], dtype=float)
    target = axis_angle_mat(axis / np.linalg.norm(axis), float(p["angle_rad"]))
    rel = obj.pose.rot @ ref_obj.pose.rot.T
    return _rotation_angle(rel @ target.T) <= float(p["tol_rad"])


def _pred_position_within(world, ref, ref_seq, p) -> bool:
    obj = _object_state(world, p["object"])
    if obj is None:
        return False
    return float(np.linalg.norm(obj.pose.pos - np.asarray(p["target"], float))) \
        <= float(p["tol_m"])


def _pred_raised_by(world, ref, ref_seq, p) -> bool:
    obj, ref_obj = _object_state(world, p["object"]), _object_state(ref, p["object"])
    if obj is None or ref_obj is None:
        return False
    return obj.pose.pos[2] - ref_obj.pose.pos[2] >= float(p["min_m"])


def _pred_seal_on_unit(world, ref, ref_seq, p) -> bool:
    unit = world.unit(p["unit"])
    if unit.seal is None:
        return False
    return "object" not in p or unit.seal.object_id == p["object"]


def _pred_event_occurred(world, ref, ref_seq, p) -> bool:
    wanted = p.get("payload", {})
    for e in world.events_after(ref_seq):
        if e.kind == p["kind"] and all(e.payload.get(k) == v
                                       for k, v in wanted.items()):
            return True
    return False


def _pred_support_is(world, ref, ref_seq, p) -> bool:
    obj = world.objects.get(p["object"])
    return obj is not None and obj.support == p["mode"]


def _pred_all_of(world, ref, ref_seq, p) -> bool:
    return all(_satisfied(sub, world, ref, ref_seq) for sub in p["of"])


def _pred_manual(world, ref, ref_seq, p) -> bool:
    raise Unexecutable("step requires human judgement; score it from records")


_PREDICATES = {
    "orientation_about_axis": _pred_orientation_about_axis,
    "position_within": _pred_position_within,
    "raised_by": _pred_raised_by,
    "seal_on_unit": _pred_seal_on_unit,
    "event_occurred": _pred_event_occurred,
    "support_is": _pred_support_is,
    "all_of": _pred_all_of,
    "manual": _pred_manual,
}


def _satisfied(pred: dict, world, ref, ref_seq) -> bool:
    return _PREDICATES[pred["kind"]](world, ref, ref_seq, pred.get("params", {}))


# ---------------------------------------------------------------------------
# task files


def canonical_task_path(name: str) -> Path:
    path = _TASK_DIR / f"{name}.json"
    if not path.exists():
        raise ParseError(f"unknown task {name!r}")
    return path


def list_task_ids() -> list:
    return sorted(p.stem for p in _TASK_DIR.glob("*.json"))


def load_task(source) -> TaskSpec:
    """Load a task from a path, or from a bare canonical name."""
    path = Path(source)
    if not path.exists() and path.suffix == "" and path.name == str(source):
        path = canonical_task_path(str(source))
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ParseError(f"cannot read task file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"task file {path} is not valid JSON: {e}") from e
    try:
        steps = tuple(StepSpec(s["id"], s["description"], s["predicate"])
                      for s in doc["steps"])
        return TaskSpec(
            task_id=doc["task_id"],
            name=doc["name"],
            flags={k: bool(doc["flags"][k]) for k in FLAG_KEYS},
            steps=steps,
            timeout_s=float(doc["timeout_s"]),
            scene=doc.get("scene"),
            reference_row=doc.get("reference_row"),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"task file {path} is missing fields: {e}") from e


def is_executable(task: TaskSpec) -> bool:
    return not any(s.predicate.get("kind") == "manual" for s in task.steps)


# ---------------------------------------------------------------------------
# trial evaluation


def evaluate_trial(task: TaskSpec, trace) -> TrialRecord:
    """Score one world trace against a task's ordered steps.

    steps_completed is the longest prefix of steps that held, each scanned
    from the snapshot where its predecessor first held. Success requires
    the full prefix, no object dropped after the starting snapshot, and a
    duration within the task timeout.
    """
    if not trace:
        raise ValueError("empty trace")
    start = trace[0]
    start_seq = start.events[-1].seq if start.events else 0

    completed = 0
    idx = 0  # scan cursor: steps must hold at non-decreasing trace indices
    ref, ref_seq = start, start_seq
    for spec in task.steps:
        hit = None
        for j in range(idx, len(trace)):
            if _satisfied(spec.predicate, trace[j], ref, ref_seq):
                hit = j
                break
        if hit is None:
            break
        completed += 1
        idx = hit
        ref = trace[hit]
        ref_seq = ref.events[-1].seq if ref.events else 0

    duration = trace[-1].clock - start.clock
    if duration <= 0:
        duration = start.config.dt_s  # floor: a trace spans at least one tick

    drops = [e for e in trace[-1].events_after(start_seq)
             if e.kind == "ObjectDropped"]
    success = (completed == task.total_steps and not drops
               and duration <= task.timeout_s)

    failure = None
    if not success:
        if drops and drops[0].time - start.clock <= task.timeout_s:
            failure = "Dropped"
        elif duration > task.timeout_s:
            failure = "Timeout"
        else:
            failure = "Other"

    return TrialRecord(
        task_id=task.task_id,
        trial_index=0,
        steps_completed=completed,
        total_steps=task.total_steps,
        success=success,
        duration_s=duration,
        failure_kind=failure,
    )


# ---------------------------------------------------------------------------
# scripted trials


def _ms(clock: float) -> int:
    return int(round(clock * 1000.0))


class TrialRecorder:
    """Streams a scripted trial into a demo log exactly as a live teleop
    session would record it: leader hello, drag held throughout, a joint
    frame per new target, valve commands on change, and one state
    broadcast per world step. The log replays against the same starting
    world."""

    def __init__(self, world: WorldState, sink):
        self._sink = sink
        self._since = world.events[-1].seq if world.events else 0
        self._valves = {u: world.unit(u).valve_open for u in UNIT_IDS}
        self._write(encode_message(Hello(role="leader")))
        self._write(encode_message(
            ButtonEvent(_ms(world.clock), "index", "drag", True)))

    def _write(self, line: bytes) -> None:
        self._sink.write(line)

    def joints(self, world, cmd_q) -> None:
        q = tuple(float(v) for v in cmd_q)
        self._write(encode_message(JointFrame(_ms(world.clock), q)))

    def valve(self, world, unit, open) -> None:
        if self._valves[unit] != open:
            self._valves[unit] = open
            self._write(encode_message(
                ValveCommand(_ms(world.clock), unit, open)))

    def tick(self, world) -> None:
        bc = make_broadcast(world, self._since)
        if world.events:
            self._since = world.events[-1].seq
        self._write(encode_message(bc))

    def close(self, world) -> None:
        self._write(encode_message(
            ButtonEvent(_ms(world.clock), "index", "drag", False)))


def _perturbed_start(base: WorldState, rng) -> WorldState:
    world = base
    for object_id in sorted(base.objects):
        dx, dy = rng.uniform(-0.005, 0.005, size=2)
        yaw = rng.uniform(-0.1, 0.1)
        world = perturb_object(world, object_id, dx, dy, yaw)
    return world


def run_scripted_trials(task: TaskSpec, script, n: int, seed: int,
                        out_dir=None, stamp: str | None = None) -> list:
    """Run n scripted trials from seed-perturbed starts; deterministic for
    a given (task, script, n, seed, stamp).

    script(world) is a generator of regrasp plans; the post-execution
    world is sent back in for the next plan. Planning and execution
    failures become failed TrialRecords, never exceptions. Demo logs are
    written under out_dir when given, named
    {task_id}-{stamp}-{seed}.{trial}.demolog.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if task.scene is None:
        raise Unexecutable(f"task {task.task_id} has no scene to run in")
    if stamp is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).strftime(
            "%Y%m%dT%H%M%SZ")
    base = load_scene(task.scene)
    records = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        world = _perturbed_start(base, np.random.default_rng(child))
        log_path = None
        sink = io.BytesIO()
        rec = TrialRecorder(world, sink)
        trace = [world]
        aborted = None
        try:
            gen = script(world)
            plan = next(gen)
            while True:
                world, part = execute_regrasp(world, plan, recorder=rec)
                trace.extend(part)
                try:
                    plan = gen.send(world)
                except StopIteration:
                    break
        except PlanAborted as e:
            aborted = e
            trace.extend(e.trace)  # executor attaches the partial trace
            world = trace[-1]
        except (Unplannable, IkNoConvergence, JointLimitError) as e:
            aborted = e
        rec.close(world)

        if out_dir is not None:
            name = f"{task.task_id}-{stamp}-{seed}.{i}.demolog"
            log_path = Path(out_dir) / name
            log_path.write_bytes(sink.getvalue())

        record = evaluate_trial(task, trace)
        success, failure = record.success, record.failure_kind
        if aborted is not None and success:
            success, failure = False, "PlanAborted"
        if aborted is not None and failure == "Other":
            failure = "PlanAborted"
        records.append(dataclasses.replace(
            record, trial_index=i, success=success, failure_kind=failure,
            demo_log_path=None if log_path is None else str(log_path)))
    return records


# ---------------------------------------------------------------------------
# metrics


def _same_task(trials) -> None:
    if not trials:
        raise EmptyTrialSet("no trials to score")
    ids = {t.task_id for t in trials}
    if len(ids) > 1:
        raise MixedTasks(f"trials span tasks {sorted(ids)}")


def overall_success_rate(trials) -> float:
    _same_task(trials)
    return math.fsum(1.0 for t in trials if t.success) / len(trials)


def step_completeness(trials) -> float:
    _same_task(trials)
    return math.fsum(t.steps_completed / t.total_steps for t in trials) / len(trials)


def average_time(trials) -> float:
    _same_task(trials)
    durations = [t.duration_s for t in trials if t.success]
    if not durations:
        raise NoSuccessfulTrials("no successful trial to time")
    return math.fsum(durations) / len(durations)


def metrics_row(trials) -> MetricsRow:
    try:
        avg = average_time(trials)
    except NoSuccessfulTrials:
        avg = None
    return MetricsRow(
        task_id=trials[0].task_id,
        overall_sr=overall_success_rate(trials),
        step_completeness=step_completeness(trials),
        avg_time_s=avg,
    )


# ---------------------------------------------------------------------------
# trial record files


def records_to_json(trials) -> str:
    return json.dumps([dataclasses.asdict(t) for t in trials], indent=1)


def records_from_json(text: str) -> list:
    try:
        docs = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"records file is not valid JSON: {e}") from e
    if not isinstance(docs, list):
        raise ParseError("records file must hold a list of trial records")
    try:
        return [TrialRecord(**d) for d in docs]
    except (TypeError, AssertionError) as e:
        raise ParseError(f"bad trial record: {e}") from e


def load_records(source) -> list:
    path = Path(source)
    if not path.exists() and path.suffix == "" and path.name == str(source):
        path = _RECORDS_DIR / f"{source}.json"
        if not path.exists():
            raise ParseError(f"unknown records fixture {source!r}")
    return records_from_json(path.read_text())


# ---------------------------------------------------------------------------
# report


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    return f"{value:g}"


_COLUMNS = ("task_id", "name", "trials", "steps", "overall_sr",
            "step_completeness", "avg_time_s")


def _report_cells(items) -> list:
    rows = []
    for task, trials in items:
        row = metrics_row(trials)
        rows.append((row.task_id, task.name, str(len(trials)),
                     str(task.total_steps), _fmt(row.overall_sr),
                     _fmt(row.step_completeness), _fmt(row.avg_time_s)))
    return rows


def format_report(items) -> str:
    """Aligned plain-text metrics table; items is [(TaskSpec, trials)]."""
    rows = [_COLUMNS] + _report_cells(items)
    widths = [max(len(r[c]) for r in rows) for c in range(len(_COLUMNS))]
    out = []
    for r in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"


def format_csv(items) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for cells in _report_cells(items):
        writer.writerow(["" if c == "n/a" else c for c in cells])
    return buf.getvalue()
