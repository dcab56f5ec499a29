"""Grasp classification and wrench feasibility for mixed contact sets.

Contacts live in the object frame with the origin at the center of mass,
and normals point into the object. A frictional contact transmits any
force in its cone; an adhesive contact (an active seal) adds a bounded
pull along the outward normal and a bounded torque about the cup axis,
which is what lets a single seal hold or spin an object that no cage of
frictional contacts could.

Feasibility of balancing one external wrench is a linear program over
linearized cone generators. The margin reports how far the wrench is
from the boundary of what the contacts can resist: the wrench is scaled
along its own ray until the program turns infeasible, and the margin is
that headroom expressed in Newtons (torques counted at a 0.1 m lever).
Positive margin means held with room to spare, negative means the
balance fails by that much, infinity means no bounded generator is ever
binding.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateNormal, NonFiniteInput, ParseError, SolverFailure

DEFAULT_CONE_SIDES = 8
DEFAULT_MU = 0.6
DEFAULT_CUP_RADIUS_M = 0.005
TORQUE_LEVER_M = 0.1
WRENCH_TOL = 1e-6


@dataclass(frozen=True)
class Frictional:
    mu: float

    def __post_init__(self):
        # zero is allowed (cone collapses to the normal ray); negative is not
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")


@dataclass(frozen=True)
class Adhesive:
    f_max: float
    mu_seal: float = 0.8
    cup_radius_m: float = DEFAULT_CUP_RADIUS_M

    def __post_init__(self):
        if not (self.f_max >= 0.0 and math.isfinite(self.f_max)):
            raise ValueError(f"f_max must be finite and >= 0, got {self.f_max}")
        if not (self.mu_seal >= 0.0 and math.isfinite(self.mu_seal)):
            raise ValueError(f"mu_seal must be finite and >= 0, got {self.mu_seal}")

    @property
    def torque_max(self) -> float:
        """Spin the seal resists about the cup axis."""
        return self.f_max * self.cup_radius_m * self.mu_seal


@dataclass(frozen=True)
class Contact:
    location: np.ndarray
    normal: np.ndarray
    kind: Frictional | Adhesive
    source: str = "environment"

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if loc.shape != (3,) or not np.all(np.isfinite(loc)):
            raise NonFiniteInput("contact location must be a finite 3-vector")
        if n.shape != (3,) or not np.all(np.isfinite(n)) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise DegenerateNormal(f"contact normal must be unit length, got {self.normal}")
        loc.flags.writeable = False
        n.flags.writeable = False
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "normal", n)


class GraspClass(enum.Enum):
    NONE = "None"
    ADHESIVE_SINGLE_POINT = "AdhesiveSinglePoint"
    FINGER_PALM = "FingerPalm"
    FINGER_FINGER = "FingerFinger"
    HYBRID = "Hybrid"


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    contact_forces: tuple | None
    margin: float


def linearize_friction_cone(contact: Contact, m: int = DEFAULT_CONE_SIDES) -> np.ndarray:
    """Unit force directions the contact can transmit, (m, 3) for a
    frictional contact, (m+1, 3) with the outward pull appended for an
    adhesive one. Cone generators are evenly spaced on the cone surface.
    """
    if m < 3:
        raise ValueError(f"cone side count must be >= 3, got {m}")
    n = np.asarray(contact.normal, dtype=np.float64)
    if n.shape != (3,) or not np.all(np.isfinite(n)) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise DegenerateNormal(f"bad contact normal {contact.normal}")

    mu = contact.kind.mu if isinstance(contact.kind, Frictional) else contact.kind.mu_seal
    if mu == 0.0:
        dirs = np.tile(n, (m, 1))
    else:
        helper = np.zeros(3)
        helper[np.argmin(np.abs(n))] = 1.0
        t1 = np.cross(n, helper)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        ang = 2.0 * np.pi * np.arange(m) / m
        dirs = n[None, :] + mu * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if isinstance(contact.kind, Adhesive):
        dirs = np.vstack([dirs, -n])
    return dirs


def _assemble(contacts, m):
    """Generator wrench matrix (6, n), coefficient caps (n,), and for each
    column the owning contact index (-1 for torque-only columns)."""
    cols = []
    caps = []
    owner = []
    for i, c in enumerate(contacts):
        dirs = linearize_friction_cone(c, m)
        for j, d in enumerate(dirs):
            cols.append(np.concatenate([d, np.cross(c.location, d)]))
            pull = isinstance(c.kind, Adhesive) and j == len(dirs) - 1
            caps.append(c.kind.f_max if pull else np.inf)
            owner.append(i)
        if isinstance(c.kind, Adhesive):
            for sign in (1.0, -1.0):
                cols.append(np.concatenate([np.zeros(3), sign * c.normal]))
                caps.append(c.kind.torque_max)
                owner.append(-1)
    if not cols:
        return np.zeros((6, 0)), np.zeros(0), []
    return np.array(cols).T, np.array(caps), owner


def mixed_wrench_norm(w) -> float:
    """Wrench magnitude in Newtons, torque converted at a 0.1 m lever."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.sqrt(w[:3] @ w[:3] + (w[3:] @ w[3:]) / TORQUE_LEVER_M**2))


def _ray_scale_limit(G, caps, b):
    """sup alpha such that the generators can produce alpha*b (inf if unbounded)."""
    n = G.shape[1]
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A = np.hstack([G, -b[:, None]])
    bounds = [(0.0, c if np.isfinite(c) else None) for c in caps] + [(0.0, None)]
    res = linprog(cost, A_eq=A, b_eq=np.zeros(6), bounds=bounds, method="highs")
    if res.status == 3:
        return math.inf
    if res.status != 0:
        raise SolverFailure(f"ray-scaling LP failed: {res.message}")
    return float(res.x[-1])


def wrench_feasible(contacts, query, m: int = DEFAULT_CONE_SIDES) -> FeasibilityResult:
    """Can the contacts statically balance the external wrench?

    The wrench is 6 numbers (N, N*m) about the object's center of mass,
    gravity included. Feasible results carry per-contact forces that are
    re-checked to reproduce the wrench within 1e-6.
    """
    w = np.asarray(query, dtype=np.float64).reshape(-1)
    if w.shape != (6,) or not np.all(np.isfinite(w)):
        raise NonFiniteInput("external wrench must be a finite 6-vector")
    G, caps, owner = _assemble(contacts, m)
    b = -w

    if G.shape[1] == 0:
        if np.linalg.norm(b) <= WRENCH_TOL:
            return FeasibilityResult(True, (), math.inf)
        return FeasibilityResult(False, None, -mixed_wrench_norm(w))

    bounds = [(0.0, c if np.isfinite(c) else None) for c in caps]
    res = linprog(np.zeros(G.shape[1]), A_eq=G, b_eq=b, bounds=bounds, method="highs")
    if res.status not in (0, 2):
        raise SolverFailure(f"feasibility LP failed: {res.message}")

    alpha = _ray_scale_limit(G, caps, b)
    norm = mixed_wrench_norm(w)
    margin = math.inf if math.isinf(alpha) else (alpha - 1.0) * norm

    if res.status == 2:
        return FeasibilityResult(False, None, margin)

    x = np.clip(res.x, 0.0, None)
    if np.max(np.abs(G @ x - b)) > WRENCH_TOL:
        raise SolverFailure("LP returned a force set that does not balance the wrench")
    forces = [np.zeros(3) for _ in contacts]
    for j, i in enumerate(owner):
        if i >= 0:
            forces[i] += x[j] * G[:3, j]
    return FeasibilityResult(True, tuple(forces), margin)


def classify_grasp(contacts) -> GraspClass:
    """Which of the five grasp families the contact set belongs to.

    HYBRID is the catch-all: any adhesive mixed with other contacts, and
    any frictional arrangement the named classes do not cover.
    """
    if len(contacts) == 0:
        return GraspClass.NONE
    if len(contacts) == 1 and isinstance(contacts[0].kind, Adhesive):
        return GraspClass.ADHESIVE_SINGLE_POINT
    all_frictional = all(isinstance(c.kind, Frictional) for c in contacts)
    n_finger = sum(c.source in ("thumb", "index", "ring") for c in contacts)
    n_palm = sum(c.source == "palm" for c in contacts)
    if all_frictional and n_finger >= 1 and n_palm >= 1:
        return GraspClass.FINGER_PALM
    if all_frictional and n_finger >= 2 and n_palm == 0:
        return GraspClass.FINGER_FINGER
    return GraspClass.HYBRID


def required_pull(mass: float, gravity: float, cup_axis, world_down) -> float:
    """Axial component of the object's weight trying to peel the seal off."""
    if mass < 0:
        raise ValueError(f"mass must be >= 0, got {mass}")
    a = np.asarray(cup_axis, dtype=np.float64)
    d = np.asarray(world_down, dtype=np.float64)
    return mass * gravity * max(0.0, float(a @ d))


def load_contact_set(source) -> tuple[list, np.ndarray]:
    """Read a contact-set document: {contacts: [{pos, normal, kind, mu|f_max,
    source?}], wrench: [6]}. Accepts a path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"cannot read contact set {source}: {e}") from e
    else:
        doc = source
    try:
        contacts = []
        for c in doc["contacts"]:
            if c["kind"] == "frictional":
                kind = Frictional(float(c.get("mu", DEFAULT_MU)))
            elif c["kind"] == "adhesive":
                kind = Adhesive(
                    float(c["f_max"]),
                    float(c.get("mu_seal", 0.8)),
                    float(c.get("cup_radius_m", DEFAULT_CUP_RADIUS_M)),
                )
            else:
                raise ParseError(f"unknown contact kind {c['kind']!r}")
            contacts.append(
                Contact(c["pos"], c["normal"], kind, c.get("source", "environment")))
        wrench = np.asarray(doc["wrench"], dtype=np.float64)
        if wrench.shape != (6,):
            raise ParseError("wrench must have 6 entries")
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed contact set: {e}") from e
    return contacts, wrench
