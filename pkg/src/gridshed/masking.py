"""Physics-informed action masking.

A binary mask permits shedding only at buses whose voltage sits below a
time-dependent criterion threshold. The threshold comes either from a
static recovery-criterion curve ("fixed" mode) or from the policy's
learned criterion head squashed into physically sensible bounds ("tam"
mode). Masks act by element-wise multiplication in shed-fraction space,
where 0 is the identity action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridshed.env import CriterionCurve

MASK_MODES = ("none", "fixed", "tam")


@dataclass(frozen=True)
class CriterionBounds:
    """Per-output (low, high) intervals for the learnable criterion.

    The intervals are disjoint and ordered, so any squashed output
    automatically satisfies v1 < v2 < v3 and t1 < t2.
    """

    v1: tuple[float, float] = (0.70, 0.85)
    v2: tuple[float, float] = (0.85, 0.92)
    v3: tuple[float, float] = (0.92, 0.96)
    t1: tuple[float, float] = (0.25, 0.40)
    t2: tuple[float, float] = (0.40, 0.60)

    def validate(self):
        for name in ("v1", "v2", "v3", "t1", "t2"):
            low, high = getattr(self, name)
            if not low < high:
                raise ValueError(f"criterion bound {name}: low {low} must be < high {high}")

    def as_array(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3, self.t1, self.t2], dtype=float)


def clamp_criterion(criterion_raw: np.ndarray, bounds: CriterionBounds) -> CriterionCurve:
    """Squash the 5 raw criterion outputs into their bound intervals.

    Each output maps through a logistic onto [low, high]; a raw value of 0
    lands on the interval midpoint, +/-inf on the bounds themselves.
    """
    raw = np.asarray(criterion_raw, dtype=float)
    if raw.shape != (5,):
        raise ValueError(f"criterion_raw must have length 5, got shape {raw.shape}")
    arr = bounds.as_array()
    low, high = arr[:, 0], arr[:, 1]
    squashed = low + (high - low) / (1.0 + np.exp(-raw))
    return CriterionCurve(
        v1=float(squashed[0]),
        v2=float(squashed[1]),
        v3=float(squashed[2]),
        t1=float(squashed[3]),
        t2=float(squashed[4]),
    )


def criterion_value_at(curve: CriterionCurve, t: float, t_clear: float) -> float:
    """Voltage threshold active at time ``t`` for a fault cleared at ``t_clear``.

    Returns 0.0 before clearance: the criterion is only defined post-fault,
    and callers treat a zero threshold as "masking inactive".
    """
    if t < t_clear:
        return 0.0
    if t < t_clear + curve.t1:
        return curve.v1
    if t < t_clear + curve.t2:
        return curve.v2
    return curve.v3


def build_mask(voltages: np.ndarray, threshold: float) -> np.ndarray:
    """Binary mask: 1 where the bus voltage is strictly below the threshold."""
    v = np.asarray(voltages, dtype=float)
    return (v < threshold).astype(float)


def apply_mask(shed_actions: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Element-wise product; masked-out buses shed exactly 0."""
    shed = np.asarray(shed_actions, dtype=float)
    m = np.asarray(mask, dtype=float)
    if shed.shape != m.shape:
        raise ValueError(f"shed actions shape {shed.shape} != mask shape {m.shape}")
    return shed * m


def masked_shed_actions(
    shed_actions: np.ndarray,
    voltages: np.ndarray,
    curve: CriterionCurve | None,
    t: float,
    t_clear: float,
    mode: str,
) -> np.ndarray:
    """Apply the configured masking mode to a shed-action vector.

    Pre-clearance (t < t_clear) the mask is all-ones: the criterion only
    constrains the recovery phase, and the reward already discourages
    gratuitous early shedding.
    """
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}, expected one of {MASK_MODES}")
    if mode == "none" or t < t_clear:
        return np.asarray(shed_actions, dtype=float)
    if curve is None:
        raise ValueError(f"mask mode {mode!r} requires a criterion curve")
    threshold = criterion_value_at(curve, t, t_clear)
    return apply_mask(shed_actions, build_mask(voltages, threshold))
