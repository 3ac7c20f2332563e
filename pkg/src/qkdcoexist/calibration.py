"""Fit of the receiver-side model parameters to measured QBER operating points."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.optimize import fsolve

from .keyrate import ModelCalibration, operating_point, qber_from_qsnr, qsnr
from .scenario import build_scenario


@dataclass(frozen=True)
class Anchor:
    """A measured QBER at one fiber / direction / launch-power setting."""

    fiber: str
    direction: str
    launch_power: float
    qber: float


DEFAULT_ANCHORS = (
    Anchor("G652-1", "co", 21.0, 0.025),
    Anchor("G652-2", "counter", 19.0, 0.04025),
)


def anchor_qber(anchor, calibration, srs_model="physical"):
    scenario = build_scenario(anchor.fiber, anchor.direction, anchor.launch_power,
                              srs_model=srs_model, calibration=calibration)
    op = operating_point(scenario)
    return qber_from_qsnr(qsnr(op.n_actual, op.noise, scenario.detector, scenario.protocol), scenario.protocol)


def fit_anchors(anchors=DEFAULT_ANCHORS, srs_model="physical", base=None, guess=(4.0, 0.05)):
    """Solve for (receiver_loss, srs_scale) so the model hits two anchor QBERs.

    Returns the fitted calibration and the residuals (model - measured).
    """
    if len(anchors) != 2:
        raise ValueError("exactly two anchors determine the two free parameters")
    base = base or ModelCalibration()

    def cal(x):
        return replace(base, receiver_loss=float(x[0]), srs_scale=10.0 ** float(x[1]))

    def residual(x):
        c = cal(x)
        return [anchor_qber(a, c, srs_model) - a.qber for a in anchors]

    x, info, ier, msg = fsolve(residual, [guess[0], math.log10(guess[1])], full_output=True, xtol=1e-12)
    if ier != 1:
        raise RuntimeError(f"anchor fit did not converge: {msg}")
    fitted = cal(x)
    return fitted, residual(x)
