"""Single-photon detector model: efficiency, dark counts, afterpulsing, dead time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class DetectorSpec:
    """Parameters shared by the ``num_detectors`` detectors of the receiver.

    Dark counts are given either per gate (gated InGaAs) or as cps per
    detector (free-running SNSPD). ``gate_rate`` is the detection-window
    rate in Hz; for free-running detectors it is the rate of the timing
    windows the receiver keeps.
    """

    name: str
    efficiency: float
    gate_rate: float
    gate_width: float
    dead_time: float
    afterpulse_prob: float
    num_detectors: int = 4
    dark_per_gate: Optional[float] = None
    dark_cps: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"detector efficiency must be in (0, 1], got {self.efficiency}")
        if not 0 <= self.afterpulse_prob < 1:
            raise ValueError(f"afterpulse_prob must be in [0, 1), got {self.afterpulse_prob}")
        if self.dead_time < 0:
            raise ValueError(f"dead_time must be >= 0 s, got {self.dead_time}")
        if self.num_detectors < 1:
            raise ValueError(f"num_detectors must be >= 1, got {self.num_detectors}")
        if self.gate_rate <= 0:
            raise ValueError(f"gate_rate must be > 0 Hz, got {self.gate_rate}")
        if self.dark_per_gate is None and self.dark_cps is None:
            raise ValueError("detector needs dark_per_gate or dark_cps")
        if self.dark_per_gate is not None and not 0 <= self.dark_per_gate < 1:
            raise ValueError(f"dark_per_gate must be in [0, 1), got {self.dark_per_gate}")
        if self.dark_cps is not None and self.dark_cps < 0:
            raise ValueError(f"dark_cps must be >= 0, got {self.dark_cps}")
        if self.dark_per_gate is not None and self.dark_cps is not None:
            derived = self.dark_per_gate * self.gate_rate
            if not math.isclose(derived, self.dark_cps, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"dark_cps {self.dark_cps} disagrees with dark_per_gate x gate_rate = {derived}")

    @property
    def dark_cps_per_detector(self):
        if self.dark_per_gate is not None:
            return self.dark_per_gate * self.gate_rate
        return self.dark_cps


INGAAS_2017 = DetectorSpec(
    name="ingaas-2017",
    efficiency=0.11,
    gate_rate=1.25e9,
    gate_width=180.0,
    dead_time=1e-6,
    afterpulse_prob=0.005,
    num_detectors=4,
    dark_per_gate=3e-7,
)

# Free-running; timing windows kept at the same 1.25 GHz cadence as the gated receiver.
SNSPD_LAB = DetectorSpec(
    name="snspd-lab",
    efficiency=0.45,
    gate_rate=1.25e9,
    gate_width=180.0,
    dead_time=50e-9,
    afterpulse_prob=0.0,
    num_detectors=4,
    dark_cps=30.0,
)

DETECTOR_PRESETS = {d.name: d for d in (INGAAS_2017, SNSPD_LAB)}


def detector_preset(name):
    try:
        return DETECTOR_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown detector preset {name!r}; known: {sorted(DETECTOR_PRESETS)}") from None


def click_probabilities(loss_db, protocol, det):
    """Per-pulse click probability for each intensity class, before dead time."""
    transmittance = 10.0 ** (-loss_db / 10.0) if math.isfinite(loss_db) else 0.0
    return [-math.expm1(-x * transmittance * det.efficiency) for x in protocol.intensities]


def expected_signal_rate(loss_db, protocol, det):
    """Signal click rate N_mu (cps) ignoring dead time, summed over intensity classes."""
    if loss_db < 0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    probs = click_probabilities(loss_db, protocol, det)
    return protocol.rep_rate * sum(p * c for p, c in zip(protocol.probabilities, probs))


def apply_dead_time(n_mu, det):
    if n_mu < 0:
        raise ValueError(f"count rate must be >= 0, got {n_mu}")
    return n_mu / (1.0 + n_mu * det.dead_time / det.num_detectors)


def afterpulse_rate(n_actual, det):
    if n_actual < 0:
        raise ValueError(f"count rate must be >= 0, got {n_actual}")
    return n_actual * det.afterpulse_prob


def dark_rate(det):
    """Dark count rate summed over all detectors (cps)."""
    return det.dark_cps_per_detector * det.num_detectors


def slot_coincidence(det, rep_rate):
    """Fraction of detector windows that line up with a pulse slot.

    Noise arrives in every window but only windows carrying a pulse slot are
    kept by the receiver, so noise rates reaching the key scale by this factor.
    """
    return min(1.0, rep_rate / det.gate_rate)
