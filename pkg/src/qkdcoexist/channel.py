"""Shared-fiber link model: losses, filters, and Raman noise at the QKD receiver."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

SUPPORTED_WAVELENGTHS = (1310, 1550)
REFERENCE_PASSBAND_GHZ = 20.0
LAUNCH_POWER_RANGE_DBM = (8.0, 21.0)
DIRECTIONS = ("co", "counter")


def db_per_km_to_linear(att_db_per_km):
    """Convert attenuation in dB/km to a 1/km power-decay coefficient."""
    return att_db_per_km * math.log(10.0) / 10.0


def dbm_to_mw(p_dbm):
    return 10.0 ** (p_dbm / 10.0)


@dataclass(frozen=True)
class FiberSpec:
    """Optical constants of one fiber span.

    ``beta_srs`` is the Raman noise coefficient in cps/(dBm km) for a
    20 GHz receiver pass-band. Measured totals (dB), when given, override
    coefficient x length in link budgets.
    """

    name: str
    att_1310: float
    att_1550: float
    length: float
    aeff: float
    beta_srs: float
    measured_total_loss_1310: Optional[float] = None
    measured_total_loss_1550: Optional[float] = None

    def __post_init__(self):
        if self.att_1310 <= 0 or self.att_1550 <= 0:
            raise ValueError(f"fiber {self.name}: attenuation must be positive")
        if self.length < 0:
            raise ValueError(f"fiber {self.name}: length must be >= 0 km, got {self.length}")
        if self.aeff <= 0:
            raise ValueError(f"fiber {self.name}: aeff must be positive")
        if self.beta_srs < 0:
            raise ValueError(f"fiber {self.name}: beta_srs must be >= 0")

    def attenuation(self, wavelength):
        _check_wavelength(wavelength)
        return self.att_1310 if int(wavelength) == 1310 else self.att_1550

    def total_loss(self, wavelength):
        """Fiber-only loss in dB, using the measured total when available."""
        _check_wavelength(wavelength)
        measured = self.measured_total_loss_1310 if int(wavelength) == 1310 else self.measured_total_loss_1550
        if measured is not None:
            return measured
        return self.attenuation(wavelength) * self.length

    def with_length(self, length):
        """Same fiber type at another length; measured totals no longer apply."""
        return replace(self, length=length, measured_total_loss_1310=None, measured_total_loss_1550=None)


@dataclass(frozen=True)
class ClassicalTrafficSpec:
    """Aggregate classical WDM load; ``launch_power`` is the total over all channels."""

    launch_power: float
    direction: str = "co"
    band: tuple = (1528.0, 1538.0)
    aggregate_rate: str = "3.6 Tbps"

    def __post_init__(self):
        lo, hi = LAUNCH_POWER_RANGE_DBM
        if not lo <= self.launch_power <= hi:
            raise ValueError(f"launch_power must lie in [{lo}, {hi}] dBm, got {self.launch_power}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.band[0] >= self.band[1]:
            raise ValueError(f"band must be increasing, got {self.band}")


@dataclass(frozen=True)
class FilterSpec:
    passband: float
    insertion_loss: float
    center_wavelength: float = 1310.0

    def __post_init__(self):
        if self.passband <= 0:
            raise ValueError(f"filter passband must be > 0 GHz, got {self.passband}")
        if self.insertion_loss < 0:
            raise ValueError(f"filter insertion loss must be >= 0 dB, got {self.insertion_loss}")

    @property
    def bandwidth_factor(self):
        return self.passband / REFERENCE_PASSBAND_GHZ


@dataclass(frozen=True)
class MuxSpec:
    mul_loss_1310: float = 0.30
    mul_loss_1550: float = 0.86
    demul_loss_1310: float = 2.50
    demul_loss_1550: float = 0.87
    isolation_mul: float = 50.0
    isolation_demul: float = 120.0
    crosstalk_floor: float = 60.0

    def __post_init__(self):
        for name in ("mul_loss_1310", "mul_loss_1550", "demul_loss_1310", "demul_loss_1550"):
            if getattr(self, name) < 0:
                raise ValueError(f"mux {name} must be >= 0 dB")
        if self.crosstalk_floor < 0:
            raise ValueError("mux crosstalk_floor must be >= 0 cps")


@dataclass(frozen=True)
class NoiseBudget:
    """Noise count rates (cps) that coincide with QKD detection slots."""

    n_srs: float = 0.0
    n_dark: float = 0.0
    n_after: float = 0.0
    n_crosstalk: float = 0.0
    n_fwm_brillouin: float = 0.0

    def __post_init__(self):
        for name in ("n_srs", "n_dark", "n_after", "n_crosstalk"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise term {name} must be >= 0")
        if self.n_fwm_brillouin != 0:
            raise ValueError("four-wave mixing / Brillouin noise is not modeled and must be 0")

    @property
    def total(self):
        return self.n_srs + self.n_dark + self.n_after + self.n_crosstalk + self.n_fwm_brillouin


def _check_wavelength(wavelength):
    if wavelength not in SUPPORTED_WAVELENGTHS:
        raise ValueError(f"unsupported wavelength {wavelength} nm; expected one of {SUPPORTED_WAVELENGTHS}")


def link_loss(fiber, mux, filt, wavelength):
    """Transmitter-to-receiver loss in dB at 1310 or 1550 nm.

    Fiber loss plus MUL and De-MUL insertion losses. The narrow receiver
    filter sits inside the De-MUL, so ``filt.insertion_loss`` is already part
    of ``demul_loss_1310`` and is not added again.
    """
    _check_wavelength(wavelength)
    if fiber.length < 0:
        raise ValueError(f"negative fiber length {fiber.length}")
    if int(wavelength) == 1310:
        comp = mux.mul_loss_1310 + mux.demul_loss_1310
    else:
        comp = mux.mul_loss_1550 + mux.demul_loss_1550
    return fiber.total_loss(wavelength) + comp


def _check_power(traffic):
    lo, hi = LAUNCH_POWER_RANGE_DBM
    if not lo <= traffic.launch_power <= hi:
        raise ValueError(f"launch power {traffic.launch_power} dBm outside [{lo}, {hi}]")


def srs_rate_paper(fiber, traffic, filt):
    """Raman noise rate linear in launch power (dBm) and length, both directions alike."""
    _check_power(traffic)
    rate = fiber.beta_srs * traffic.launch_power * fiber.length * filt.bandwidth_factor
    return max(rate, 0.0)


def raman_path_length(direction, length, att_pump, att_signal):
    """Effective interaction length (km) of the Raman integral.

    ``att_pump`` (1550 nm) and ``att_signal`` (1310 nm) are linear 1/km
    coefficients. Co-propagating photons are born at z and travel L - z
    with the signal; counter-propagating ones travel back z to the receiver.
    """
    if direction == "co":
        diff = att_signal - att_pump
        if abs(diff * length) < 1e-12:
            return length * math.exp(-att_signal * length)
        # (e^{-a_p L} - e^{-a_s L}) / (a_s - a_p), written to stay accurate as diff -> 0
        return math.exp(-att_signal * length) * math.expm1(diff * length) / diff
    if direction == "counter":
        total = att_pump + att_signal
        if total * length < 1e-12:
            return length
        return -math.expm1(-total * length) / total
    raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def srs_rate_physical(fiber, traffic, filt, raman_coeff):
    """Raman noise rate linear in launch power (mW) with directional attenuation.

    ``raman_coeff`` is in cps/(mW km) for a 20 GHz pass-band.
    """
    if raman_coeff <= 0:
        raise ValueError("raman_coeff must be > 0")
    if fiber.length <= 0:
        raise ValueError(f"physical Raman model needs a positive length, got {fiber.length}")
    _check_power(traffic)
    a_p = db_per_km_to_linear(fiber.att_1550)
    a_s = db_per_km_to_linear(fiber.att_1310)
    path = raman_path_length(traffic.direction, fiber.length, a_p, a_s)
    return raman_coeff * dbm_to_mw(traffic.launch_power) * path * filt.bandwidth_factor


def crosstalk_rate(mux):
    return mux.crosstalk_floor


def calibrate_raman_coeff(fiber, direction="both", powers=None):
    """Fit the physical-model coefficient so its normalized average matches ``beta_srs``.

    The normalized rate is rate / (P[dBm] * L) at 20 GHz, averaged over
    ``powers`` (default 8..21 dBm) and, for ``direction="both"``, over the
    two propagation directions. The model is linear in the coefficient, so
    the least-squares fit is a ratio of means. Returns ``(K, relative_residual)``.
    """
    if powers is None:
        powers = np.arange(8, 22, dtype=float)
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    if powers.size == 0:
        raise ValueError("need at least one launch power to calibrate")
    if fiber.length <= 0:
        raise ValueError("calibration needs a positive fiber length")
    dirs = DIRECTIONS if direction == "both" else (direction,)
    for d in dirs:
        if d not in DIRECTIONS:
            raise ValueError(f"direction must be 'co', 'counter' or 'both', got {direction!r}")
    a_p = db_per_km_to_linear(fiber.att_1550)
    a_s = db_per_km_to_linear(fiber.att_1310)
    unit = []
    for d in dirs:
        path = raman_path_length(d, fiber.length, a_p, a_s)
        unit.extend(10.0 ** (powers / 10.0) * path / (powers * fiber.length))
    unit = np.asarray(unit)
    k = fiber.beta_srs / unit.mean()
    fitted = (k * unit).mean()
    residual = abs(fitted - fiber.beta_srs) / fiber.beta_srs if fiber.beta_srs else 0.0
    return float(k), float(residual)
