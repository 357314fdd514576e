"""Hand keypoint frames and retargeting onto robot tracking sites.

Keypoint index layout (fixed, matches common AR hand-skeleton ordering):

    0      wrist
    1-4    thumb  (4 = tip, 3 = inter-phalange)
    5-8    index  (8 = tip, 7 = inter-phalange)
    9-12   middle (12 = tip)
    13-16  ring   (16 = tip)
    17-20  little (20 = tip)
    21-24  forearm / metacarpal auxiliaries

Only keypoint positions are retargeted; orientations ride along for
completeness but are ignored by the tracking costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform, quat_rotate
from .model import DEXTEROUS, PARALLEL_JAW, Gripper, RobotModel

KEYPOINT_COUNT = 25

WRIST = 0
THUMB_TIP = 4
THUMB_INTER = 3
INDEX_TIP = 8
INDEX_INTER = 7
MIDDLE_TIP = 12
RING_TIP = 16
LITTLE_TIP = 20

# Retargeting schemes: which keypoints drive the gripper sites, in site order.
PARALLEL_JAW_KEYPOINTS = (THUMB_TIP, THUMB_INTER, INDEX_TIP, INDEX_INTER)
DEXTEROUS_KEYPOINTS = (THUMB_TIP, INDEX_TIP, MIDDLE_TIP, RING_TIP, LITTLE_TIP, WRIST)

# Reference pinch span for the aperture command (max thumb-index separation).
APERTURE_REF = 0.12


@dataclass
class HandFrame:
    """25 tracked keypoints with poses; one hand, one instant."""

    positions: np.ndarray        # (25, 3) meters
    quats: np.ndarray            # (25, 4) unit, scalar-first
    timestamp_us: int
    handedness: str = "right"    # left | right

    def validate(self) -> "HandFrame":
        self.positions = np.asarray(self.positions, dtype=float)
        self.quats = np.asarray(self.quats, dtype=float)
        if self.positions.shape != (KEYPOINT_COUNT, 3):
            raise ValueError(f"expected {KEYPOINT_COUNT} keypoint positions, "
                             f"got {self.positions.shape}")
        if self.quats.shape != (KEYPOINT_COUNT, 4):
            raise ValueError(f"expected {KEYPOINT_COUNT} keypoint quaternions")
        norms = np.linalg.norm(self.quats, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("keypoint quaternions must be unit norm")
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness '{self.handedness}'")
        return self

    def pinch_separation(self) -> float:
        return float(np.linalg.norm(self.positions[THUMB_TIP]
                                    - self.positions[INDEX_TIP]))


@dataclass
class Calibration:
    """Rigid transform plus uniform scale from hand space to robot workspace.

    Maps p to  t + scale * R p ; the translation is the calibration origin.
    """

    transform: Transform = field(default_factory=Transform.identity)
    scale: float = 1.0

    def displacement(self, p: np.ndarray) -> np.ndarray:
        """Mapped offset from the calibration origin: scale * R p.

        Doubling the scale doubles this value bit-exactly (binary scaling),
        which is the useful invariant; re-deriving it as apply(p) - t would
        reintroduce addition rounding.
        """
        if self.scale <= 0:
            raise ValueError("calibration scale must be > 0")
        return self.scale * quat_rotate(self.transform.quat, p)

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.transform.pos + self.displacement(p)


@dataclass
class TargetSet:
    """Position targets for named sites plus the gripper aperture channel."""

    entries: list[tuple[str, np.ndarray]]
    aperture_command: float = 1.0   # normalized, 0 = closed
    gripper_index: int = 0

    def validate_for(self, model: RobotModel) -> "TargetSet":
        for name, _ in self.entries:
            model.site(name)  # raises KeyError for unknown sites
        if not 0.0 <= self.aperture_command <= 1.0:
            raise ValueError(f"aperture_command {self.aperture_command} outside [0, 1]")
        return self


def map_hand_to_targets(hand: HandFrame, model: RobotModel,
                        calibration: Calibration | None = None,
                        gripper_index: int = 0) -> TargetSet:
    """Retarget one hand frame onto a gripper's tracking sites.

    Parallel-jaw grippers track thumb tip/inter-phalange and index
    tip/inter-phalange; dexterous hands track the five fingertips plus the
    wrist. The aperture command is the raw thumb-index separation over the
    reference pinch span, deliberately unscaled by the calibration.
    """
    if not model.grippers:
        raise ValueError(f"robot '{model.name}' has no gripper definition")
    gripper: Gripper = model.grippers[gripper_index]
    calibration = calibration or Calibration()

    if gripper.kind == PARALLEL_JAW:
        keypoints = PARALLEL_JAW_KEYPOINTS
    elif gripper.kind == DEXTEROUS:
        keypoints = DEXTEROUS_KEYPOINTS
    else:
        raise ValueError(f"gripper kind '{gripper.kind}'")

    entries = [(site, calibration.apply(hand.positions[kp]))
               for site, kp in zip(gripper.sites, keypoints)]
    aperture = min(max(hand.pinch_separation() / APERTURE_REF, 0.0), 1.0)
    return TargetSet(entries, aperture, gripper_index).validate_for(model)


# ---------------------------------------------------------------------------
# Synthetic hand template: a fixed skeleton posed by (wrist pose, grip).
# The UI's virtual rig and the headless synthetic operator both emit frames
# built this way, so the server is driven by identical geometry in tests.
# ---------------------------------------------------------------------------

# Local keypoint offsets for a fully open right hand (grip = 0); the thumb
# and index chains are re-posed by grip, everything else is static.
_STATIC_TEMPLATE = {
    1: (0.030, -0.020, 0.0), 2: (0.050, -0.030, 0.0),
    5: (0.030, 0.020, 0.0), 6: (0.050, 0.030, 0.0),
    9: (0.030, 0.010, -0.010), 10: (0.060, 0.012, -0.012),
    11: (0.085, 0.014, -0.014), 12: (0.105, 0.015, -0.015),
    13: (0.028, 0.000, -0.018), 14: (0.055, 0.000, -0.022),
    15: (0.078, 0.000, -0.025), 16: (0.095, 0.000, -0.027),
    17: (0.025, -0.012, -0.020), 18: (0.048, -0.014, -0.026),
    19: (0.066, -0.015, -0.030), 20: (0.080, -0.016, -0.033),
    21: (-0.030, 0.000, 0.0), 22: (-0.060, 0.000, 0.0),
    23: (-0.020, 0.015, -0.005), 24: (-0.020, -0.015, -0.005),
}


def hand_template(wrist: Transform, grip: float, handedness: str = "right",
                  timestamp_us: int = 0) -> HandFrame:
    """Build a full 25-keypoint frame from a wrist pose and a grip value.

    grip is in [0, 1]; the thumb-index tip separation shrinks linearly from
    APERTURE_REF at grip 0 to zero at grip 1, so the resulting aperture
    command is exactly 1 - grip.
    """
    grip = min(max(float(grip), 0.0), 1.0)
    sep = APERTURE_REF * (1.0 - grip)
    local = np.zeros((KEYPOINT_COUNT, 3))
    for idx, off in _STATIC_TEMPLATE.items():
        local[idx] = off
    local[THUMB_INTER] = (0.07, -0.35 * sep, 0.0)
    local[THUMB_TIP] = (0.10, -0.5 * sep, 0.0)
    local[INDEX_INTER] = (0.07, 0.35 * sep, 0.0)
    local[INDEX_TIP] = (0.10, 0.5 * sep, 0.0)
    if handedness == "left":
        local = local * np.array([1.0, -1.0, 1.0])

    positions = np.array([wrist.apply(p) for p in local])
    quats = np.tile(wrist.quat, (KEYPOINT_COUNT, 1))
    return HandFrame(positions, quats, int(timestamp_us), handedness).validate()
