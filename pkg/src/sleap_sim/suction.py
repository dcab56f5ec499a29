"""Suction units: valve state, seal formation, and adhesion limits.

Four independent units (one per fingertip plus one in the palm). A seal
is binary: it either holds or it does not, and a closed valve can never
hold one. Seal formation is a pure geometric test between the cup rim
frame and a candidate surface patch; the world layer owns valve wiring,
anchor transforms, and when the test runs.

Adhesion on a flat surface tops out at ``f_flat_n`` (6.5 N by default)
and degrades linearly in inverse curvature radius, reaching zero at the
minimum sealable radius. That curve is a modelling choice, not a
measurement; it is monotone and bounded, which is all downstream code
relies on.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotSealed
from .geometry import Frame

UNIT_IDS = ("thumb", "index", "ring", "palm")


@dataclass(frozen=True)
class SealConfig:
    """Thresholds for seal formation and the adhesion curve.

    Field names match the simulator config file block.
    """

    d_max_m: float = 0.002
    theta_max_rad: float = 0.15
    r_min_m: float = 0.015
    cup_diameter_m: float = 0.010
    palm_cup_diameter_m: float = 0.020
    f_flat_n: float = 6.5
    mu_seal: float = 0.8

    def for_unit(self, unit_id: str) -> "SealConfig":
        """Per-unit view: the palm carries the larger cup."""
        if unit_id == "palm" and self.palm_cup_diameter_m != self.cup_diameter_m:
            return dataclasses.replace(self, cup_diameter_m=self.palm_cup_diameter_m)
        return self


class SealReason(enum.Enum):
    """Why a seal attempt succeeded or failed (first failed check wins)."""

    OK = "OK"
    VALVE_CLOSED = "ValveClosed"
    TOO_FAR = "TooFar"
    MISALIGNED_NORMAL = "MisalignedNormal"
    TOO_CURVED = "TooCurved"
    TOO_SMALL = "TooSmall"
    POROUS = "Porous"


class SealStatus(enum.Enum):
    SEALED = "Sealed"
    BROKEN = "Broken"


@dataclass(frozen=True)
class SurfacePatch:
    """A sealable spot on an object, in the object's own frame.

    ``normal`` points out of the surface. ``curvature_radius`` is inf for
    flat; ``min_feature_diameter`` is the largest flat disc that fits
    around the centroid.
    """

    patch_id: str
    centroid: np.ndarray
    normal: np.ndarray
    curvature_radius: float = math.inf
    porous: bool = False
    min_feature_diameter: float = math.inf

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if c.shape != (3,) or n.shape != (3,) or not np.all(np.isfinite(c)):
            raise ValueError(f"patch {self.patch_id}: bad centroid/normal shape")
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(f"patch {self.patch_id}: normal must be unit length")
        if not (self.curvature_radius > 0):
            raise ValueError(f"patch {self.patch_id}: curvature_radius must be > 0")
        if self.min_feature_diameter < 0:
            raise ValueError(f"patch {self.patch_id}: negative feature diameter")
        c.flags.writeable = False
        n.flags.writeable = False
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "normal", n)

    def transformed(self, frame: Frame) -> "SurfacePatch":
        """The same patch expressed in the parent of ``frame``."""
        return dataclasses.replace(
            self,
            centroid=frame.transform_point(self.centroid),
            normal=frame.transform_dir(self.normal),
        )


@dataclass(frozen=True)
class SealInfo:
    """An active seal: what it grips and the rigid cup->object transform."""

    object_id: str
    patch_id: str
    anchor: Frame


@dataclass(frozen=True)
class SuctionUnitState:
    unit_id: str
    valve_open: bool = False
    seal: SealInfo | None = None
    adhesion_limit: float = 0.0

    def __post_init__(self):
        if self.unit_id not in UNIT_IDS:
            raise ValueError(f"unknown suction unit {self.unit_id!r}")
        if self.seal is not None and not self.valve_open:
            raise ValueError("sealed unit must have an open valve")
        if not 0.0 <= self.adhesion_limit:
            raise ValueError("adhesion_limit must be >= 0")

    @property
    def sealed(self) -> bool:
        return self.seal is not None


@dataclass(frozen=True)
class SealResult:
    sealed: bool
    reason: SealReason
    adhesion_limit: float

    def __post_init__(self):
        assert self.sealed == (self.reason is SealReason.OK)
        assert self.sealed or self.adhesion_limit == 0.0


def set_valve(state: SuctionUnitState, open: bool) -> SuctionUnitState:
    """Open or close a valve. Closing releases any seal; opening never forms one."""
    if open:
        return dataclasses.replace(state, valve_open=True)
    return dataclasses.replace(state, valve_open=False, seal=None, adhesion_limit=0.0)


def max_adhesion_force(patch: SurfacePatch, cfg: SealConfig = SealConfig()) -> float:
    """Peak axial holding force on this patch: flat gives f_flat_n, tighter
    curvature gives less, radii at or below r_min give nothing."""
    if math.isinf(patch.curvature_radius):
        return cfg.f_flat_n
    scale = 1.0 - cfg.r_min_m / patch.curvature_radius
    return cfg.f_flat_n * min(max(scale, 0.0), 1.0)


def attempt_seal(cup_frame: Frame, patch: SurfacePatch, cfg: SealConfig) -> SealResult:
    """Geometric seal test, valve state excluded (the caller gates on it).

    ``cup_frame`` and ``patch`` must share a frame. The checks run in a
    fixed order and the reason names the first one that fails: rim must
    be within d_max of the centroid, cup axis within theta_max of the
    inward normal, surface flat enough, feature large enough to cover
    the cup, and not porous.
    """
    if np.linalg.norm(cup_frame.pos - patch.centroid) > cfg.d_max_m:
        return SealResult(False, SealReason.TOO_FAR, 0.0)
    axis = cup_frame.rot[:, 2]
    cos = float(np.clip(axis @ -patch.normal, -1.0, 1.0))
    if math.acos(cos) > cfg.theta_max_rad:
        return SealResult(False, SealReason.MISALIGNED_NORMAL, 0.0)
    if patch.curvature_radius < cfg.r_min_m:
        return SealResult(False, SealReason.TOO_CURVED, 0.0)
    if patch.min_feature_diameter < cfg.cup_diameter_m:
        return SealResult(False, SealReason.TOO_SMALL, 0.0)
    if patch.porous:
        return SealResult(False, SealReason.POROUS, 0.0)
    return SealResult(True, SealReason.OK, max_adhesion_force(patch, cfg))


def seal_break_check(state: SuctionUnitState, pull_force: float) -> SealStatus:
    """Does an axial pull (N, away from the surface) exceed what the seal holds?

    Pure predicate; the world clears the seal when this says BROKEN.
    """
    if state.seal is None:
        raise NotSealed(f"unit {state.unit_id} has no seal to check")
    if not (pull_force >= 0.0):
        raise ValueError("pull_force must be >= 0")
    return SealStatus.BROKEN if pull_force > state.adhesion_limit else SealStatus.SEALED
