"""Hand kinematics: description loading, FK, Jacobians, damped-least-squares IK.

Joint vector layout is a flat float64 array of length 15:
thumb q[0:5], index q[5:10], ring q[10:15]. Joints 1-4 of each finger are the
base chain, joint 5 is the axial rotation of the distal segment; the cup axis
is collinear with the joint-5 axis, so spinning joint 5 spins a sealed object
about the cup axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    IkNoConvergence,
    JointLimitError,
    MorphologyError,
    NonFiniteInput,
    ParseError,
)
from .geometry import Frame, axis_angle_mat, segment_distance, so3_log

FINGER_ORDER = ("thumb", "index", "ring")
FINGER_SLICES = {"thumb": slice(0, 5), "index": slice(5, 10), "ring": slice(10, 15)}
N_JOINTS = 15
JOINTS_PER_FINGER = 5

# capsule radius used for link self-collision checks
LINK_RADIUS = 0.006


@dataclass(frozen=True)
class JointSpec:
    axis: np.ndarray          # unit axis in the joint's local frame
    origin: Frame             # fixed transform from the parent link
    limits: tuple             # (lower, upper) radians


@dataclass(frozen=True)
class FingerChain:
    name: str
    joints: tuple             # 5 JointSpec
    cup_offset: Frame         # distal frame -> cup frame; cup axis is local +Z


@dataclass(frozen=True)
class HandModel:
    fingers: dict             # name -> FingerChain, canonical order
    palm_cup: Frame
    name: str = "hand"

    def limits_low(self) -> np.ndarray:
        return np.array([j.limits[0] for f in FINGER_ORDER for j in self.fingers[f].joints])

    def limits_high(self) -> np.ndarray:
        return np.array([j.limits[1] for f in FINGER_ORDER for j in self.fingers[f].joints])


def canonical_hand_path() -> Path:
    return Path(str(resources.files("sleap_sim").joinpath("data/hand.json")))


# ---------------------------------------------------------------------------
# loading


def _parse_frame(node, where: str) -> Frame:
    try:
        return Frame.from_quat_pos(node["quat"], node["pos"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad frame at {where}: {e}") from e


def load_hand_model(source=None) -> HandModel:
    """Load and validate a hand description.

    Args:
        source: path to a JSON description, a parsed dict, or None for the
            canonical packaged hand.

    Raises:
        ParseError: unreadable or structurally invalid file.
        MorphologyError: wrong finger/joint counts, non-unit axes, bad limits,
            thumb distal axis not orthogonal to index/ring at zero, or a hand
            that self-collides at the home pose.
    """
    if source is None:
        source = canonical_hand_path()
    if isinstance(source, (str, Path)):
        try:
            raw = Path(source).read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(f"cannot read hand description: {e}") from e
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(f"hand description is not valid JSON: {e}") from e
    elif isinstance(source, dict):
        doc = source
    else:
        raise ParseError(f"unsupported hand description source: {type(source)!r}")

    if not isinstance(doc, dict) or "fingers" not in doc or "palm_cup" not in doc:
        raise ParseError("hand description must have 'fingers' and 'palm_cup'")

    fingers_raw = doc["fingers"]
    if not isinstance(fingers_raw, list) or len(fingers_raw) != 3:
        raise MorphologyError(f"expected 3 fingers, got {len(fingers_raw) if isinstance(fingers_raw, list) else type(fingers_raw)}")

    by_name = {}
    for fnode in fingers_raw:
        name = fnode.get("name")
        if name not in FINGER_ORDER:
            raise MorphologyError(f"unknown finger name {name!r}; expected thumb/index/ring")
        joints_raw = fnode.get("joints", [])
        if len(joints_raw) != JOINTS_PER_FINGER:
            raise MorphologyError(f"finger {name!r} has {len(joints_raw)} joints, expected 5")
        joints = []
        for k, jnode in enumerate(joints_raw):
            axis = np.asarray(jnode.get("axis", ()), dtype=float)
            if axis.shape != (3,) or not np.all(np.isfinite(axis)):
                raise MorphologyError(f"finger {name!r} joint {k + 1}: bad axis")
            n = np.linalg.norm(axis)
            if abs(n - 1.0) > 1e-6:
                raise MorphologyError(f"finger {name!r} joint {k + 1}: axis norm {n:.6f} != 1")
            lo, hi = jnode.get("limits", (None, None))
            if lo is None or hi is None or not (float(lo) < float(hi)):
                raise MorphologyError(f"finger {name!r} joint {k + 1}: limits must satisfy lower < upper")
            origin = _parse_frame(jnode["origin"], f"{name} joint {k + 1}")
            joints.append(JointSpec(axis=axis / n, origin=origin, limits=(float(lo), float(hi))))
        by_name[name] = FingerChain(name=name, joints=tuple(joints), cup_offset=_parse_frame(fnode["cup_offset"], f"{name} cup_offset"))

    if set(by_name) != set(FINGER_ORDER):
        raise MorphologyError(f"finger names {sorted(by_name)} != expected {sorted(FINGER_ORDER)}")

    model = HandModel(
        fingers={n: by_name[n] for n in FINGER_ORDER},
        palm_cup=_parse_frame(doc["palm_cup"], "palm_cup"),
        name=doc.get("name", "hand"),
    )

    # thumb's distal rotation axis must oppose the parallel-finger convention
    zero = np.zeros(N_JOINTS)
    axes = {f: distal_axis_world(model, f, zero) for f in FINGER_ORDER}
    for other in ("index", "ring"):
        d = abs(float(axes["thumb"] @ axes[other]))
        if d >= 1e-9:
            raise MorphologyError(f"thumb joint-5 axis not orthogonal to {other} at zero config (|dot|={d:.3e})")

    if self_collision_pairs(model, zero):
        raise MorphologyError("hand self-collides at the home pose")
    return model


# ---------------------------------------------------------------------------
# forward kinematics


def chain_frames(model: HandModel, finger: str, q_f: np.ndarray) -> list:
    """World frames of each link of one finger (after its joint rotation),
    with the cup frame appended. q_f is the finger's 5-vector."""
    chain = model.fingers[finger]
    frames = []
    T = Frame.identity()
    for spec, qi in zip(chain.joints, q_f):
        T = T @ spec.origin @ Frame(axis_angle_mat(spec.axis, float(qi)), np.zeros(3))
        frames.append(T)
    frames.append(T @ chain.cup_offset)
    return frames


def _check_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise NonFiniteInput(f"joint vector must have shape (15,), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise NonFiniteInput("joint vector contains non-finite values")
    return q


def _check_limits(model: HandModel, q: np.ndarray, tol: float = 1e-9) -> None:
    lo, hi = model.limits_low(), model.limits_high()
    if np.any(q < lo - tol) or np.any(q > hi + tol):
        bad = int(np.argmax(np.maximum(lo - q, q - hi)))
        raise JointLimitError(
            f"joint {bad} value {q[bad]:.4f} outside [{lo[bad]:.4f}, {hi[bad]:.4f}]")


def forward_kinematics(model: HandModel, q) -> dict:
    """Cup frames for all four suction units at configuration q.

    Returns a dict keyed by unit id: thumb, index, ring, palm. The palm cup is
    rigid in the hand base frame and does not depend on q.
    """
    q = _check_q(q)
    _check_limits(model, q)
    out = {}
    for f in FINGER_ORDER:
        out[f] = chain_frames(model, f, q[FINGER_SLICES[f]])[-1]
    out["palm"] = model.palm_cup
    return out


def distal_axis_world(model: HandModel, finger: str, q) -> np.ndarray:
    """World direction of a finger's joint-5 rotation axis."""
    q = _check_q(q)
    frames = chain_frames(model, finger, q[FINGER_SLICES[finger]])
    return frames[4].rot @ model.fingers[finger].joints[4].axis


def cup_axis_world(model: HandModel, finger: str, q) -> np.ndarray:
    """World direction the cup faces (cup frame +Z)."""
    if finger == "palm":
        return model.palm_cup.rot @ np.array([0.0, 0.0, 1.0])
    q = _check_q(q)
    return chain_frames(model, finger, q[FINGER_SLICES[finger]])[-1].rot @ np.array([0.0, 0.0, 1.0])


def link_segments(model: HandModel, finger: str, q) -> list:
    """Capsule axis segments (p0, p1) for one finger's three links."""
    q = _check_q(q)
    frames = chain_frames(model, finger, q[FINGER_SLICES[finger]])
    p = [f.pos for f in frames]
    # joints 1 and 2 are co-located; links span J2->J3, J3->J4, J4->cup rim
    return [(p[1], p[2]), (p[2], p[3]), (p[3], p[5])]


def self_collision_pairs(model: HandModel, q) -> list:
    """Strictly penetrating inter-finger capsule pairs.

    Returns (finger_a, finger_b, clearance) triples with clearance < 0;
    clearance is center distance minus both radii.
    """
    segs = {f: link_segments(model, f, q) for f in FINGER_ORDER}
    hits = []
    for i, fa in enumerate(FINGER_ORDER):
        for fb in FINGER_ORDER[i + 1:]:
            worst = None
            for sa in segs[fa]:
                for sb in segs[fb]:
                    c = segment_distance(sa[0], sa[1], sb[0], sb[1]) - 2 * LINK_RADIUS
                    if worst is None or c < worst:
                        worst = c
            if worst is not None and worst < 0.0:
                hits.append((fa, fb, float(worst)))
    return hits


# ---------------------------------------------------------------------------
# differential kinematics


def jacobian(model: HandModel, finger: str, q) -> np.ndarray:
    """6x5 spatial Jacobian of the cup frame w.r.t. one finger's joints.

    Rows 0:3 are the linear velocity of the cup origin, rows 3:6 the angular
    velocity, both in the hand base frame.
    """
    q = _check_q(q)
    _check_limits(model, q)
    frames = chain_frames(model, finger, q[FINGER_SLICES[finger]])
    p_cup = frames[-1].pos
    J = np.zeros((6, 5))
    for i, spec in enumerate(model.fingers[finger].joints):
        w = frames[i].rot @ spec.axis
        J[0:3, i] = np.cross(w, p_cup - frames[i].pos)
        J[3:6, i] = w
    return J


def clamp_joints(model: HandModel, q) -> np.ndarray:
    """Clip a joint vector into the model's limits. Idempotent."""
    q = _check_q(q)
    return np.clip(q, model.limits_low(), model.limits_high())


def _rot_error_full(R_cur: np.ndarray, R_tgt: np.ndarray) -> np.ndarray:
    return so3_log(R_tgt @ R_cur.T)


def _rot_error_axis(a_cur: np.ndarray, a_tgt: np.ndarray) -> np.ndarray:
    c = np.cross(a_cur, a_tgt)
    dot = float(np.clip(a_cur @ a_tgt, -1.0, 1.0))
    s = np.linalg.norm(c)
    if s < 1e-12:
        if dot > 0:
            return np.zeros(3)
        # antiparallel: rotate about any perpendicular
        perp = np.cross(a_cur, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a_cur, [0.0, 1.0, 0.0])
        return np.pi * perp / np.linalg.norm(perp)
    return c / s * np.arctan2(s, dot)


def solve_ik(
    model: HandModel,
    finger: str,
    target: Frame,
    seed=None,
    pos_tol: float = 1e-4,
    rot_tol: float = 1e-3,
    damping: float = 1e-3,
    max_iters: int = 200,
    step_clamp: float = 0.5,
    axis_only: bool = False,
):
    """Damped-least-squares IK for one finger's cup frame.

    Args:
        target: desired cup frame. With axis_only=True only the position and
            the cup axis (frame +Z) are constrained; spin about the axis is
            free, which matches the 5-DoF chain exactly.
        seed: full 15-vector used as the start; None means the home pose.

    Returns:
        Full 15-vector: the seed with the solved finger's slice replaced.

    Raises:
        IkNoConvergence: residual above tolerance after max_iters.
    """
    if finger not in FINGER_ORDER:
        raise KeyError(f"unknown finger {finger!r}")
    q_full = np.zeros(N_JOINTS) if seed is None else _check_q(seed).copy()
    q_full = clamp_joints(model, q_full)
    sl = FINGER_SLICES[finger]
    qf = q_full[sl].copy()
    lo = model.limits_low()[sl]
    hi = model.limits_high()[sl]
    z = np.array([0.0, 0.0, 1.0])
    a_tgt = target.rot @ z

    best = (np.inf, np.inf, qf.copy())
    lam2 = damping * damping
    for _ in range(max_iters):
        q_full[sl] = qf
        frames = chain_frames(model, finger, qf)
        cup = frames[-1]
        e_pos = target.pos - cup.pos
        if axis_only:
            e_rot = _rot_error_axis(cup.rot @ z, a_tgt)
        else:
            e_rot = _rot_error_full(cup.rot, target.rot)
        pe, re = float(np.linalg.norm(e_pos)), float(np.linalg.norm(e_rot))
        if pe < best[0] or (pe <= best[0] + 1e-12 and re < best[1]):
            best = (pe, re, qf.copy())
        if pe <= pos_tol and re <= rot_tol:
            q_full[sl] = qf
            return q_full

        J = jacobian(model, finger, q_full)
        e = np.concatenate([e_pos, e_rot])
        JJt = J @ J.T + lam2 * np.eye(6)
        dq = J.T @ np.linalg.solve(JJt, e)
        m = np.max(np.abs(dq))
        if m > step_clamp:
            dq *= step_clamp / m
        qf = np.clip(qf + dq, lo, hi)

    raise IkNoConvergence(
        f"{finger}: residual pos={best[0]:.3e} m rot={best[1]:.3e} rad after {max_iters} iters",
        best_q=best[2],
        pos_err=best[0],
        rot_err=best[1],
    )
