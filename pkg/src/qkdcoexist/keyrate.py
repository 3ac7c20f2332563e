"""QSNR, QBER, decoy-state bounds and secure key rate for one operating point."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .channel import (
    NoiseBudget,
    calibrate_raman_coeff,
    crosstalk_rate,
    link_loss,
    srs_rate_paper,
    srs_rate_physical,
)
from .detector import (
    afterpulse_rate,
    apply_dead_time,
    dark_rate,
    expected_signal_rate,
    slot_coincidence,
)

VACUUM_ERROR = 0.5
SRS_MODELS = ("paper", "physical")
CLASS_NAMES = ("signal", "decoy", "vacuum")


class InsufficientStatistics(ValueError):
    """Raised when a block holds fewer sifted bits than the estimation block size."""


@dataclass(frozen=True)
class DecoyParams:
    mu: float = 0.6
    nu: float = 0.2
    omega: float = 0.0
    emission_probs: tuple = (6.0, 1.0, 1.0)
    rep_rate: float = 625e6
    e_d: float = 0.007
    f_ec: float = 1.35
    sift_factor: float = 0.5
    block_size: int = 500_000
    n_sigma: float = 7.0
    qber_cap: float = 0.04

    def __post_init__(self):
        if not self.mu > self.nu > self.omega == 0:
            raise ValueError(f"need mu > nu > omega = 0, got {self.mu}, {self.nu}, {self.omega}")
        if len(self.emission_probs) != 3 or min(self.emission_probs) <= 0:
            raise ValueError(f"emission_probs must be three positive weights, got {self.emission_probs}")
        if not 1 <= self.f_ec <= 2:
            raise ValueError(f"f_ec must be in [1, 2], got {self.f_ec}")
        if not 0 < self.sift_factor <= 1:
            raise ValueError(f"sift_factor must be in (0, 1], got {self.sift_factor}")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be > 0 Hz")
        if not 0 <= self.e_d < 0.5:
            raise ValueError(f"e_d must be in [0, 0.5), got {self.e_d}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1 bit")
        if self.n_sigma < 0:
            raise ValueError("n_sigma must be >= 0")
        if not 0 < self.qber_cap <= 0.5:
            raise ValueError(f"qber_cap must be in (0, 0.5], got {self.qber_cap}")

    @property
    def intensities(self):
        return (self.mu, self.nu, self.omega)

    @property
    def probabilities(self):
        total = float(sum(self.emission_probs))
        return tuple(p / total for p in self.emission_probs)


# Receiver optics loss (dB) and the fraction of the beta-normalized Raman
# rate that lands in key-carrying detections. Fitted by calibration.fit_anchors.
RECEIVER_LOSS_DB = 4.7893
SRS_SCALE = 0.046541


@dataclass(frozen=True)
class ModelCalibration:
    """Receiver-side parameters not fixed by the link description.

    ``raman_coeff`` (cps/(mW km) at 20 GHz) is derived from the fiber's
    beta at ``reference_length`` when left as ``None``.
    """

    receiver_loss: float = RECEIVER_LOSS_DB
    srs_scale: float = SRS_SCALE
    reference_length: float = 66.0
    raman_coeff: Optional[float] = None
    include_crosstalk: bool = True

    def __post_init__(self):
        if self.receiver_loss < 0:
            raise ValueError("receiver_loss must be >= 0 dB")
        if self.srs_scale < 0:
            raise ValueError("srs_scale must be >= 0")
        if self.reference_length <= 0:
            raise ValueError("reference_length must be > 0 km")
        if self.raman_coeff is not None and self.raman_coeff <= 0:
            raise ValueError("raman_coeff must be > 0")


@dataclass(frozen=True)
class IntensityTally:
    sent: float
    detected: float
    sifted: float
    errors: float

    @property
    def gain(self):
        return self.detected / self.sent if self.sent else 0.0

    @property
    def error_rate(self):
        return self.errors / self.sifted if self.sifted else VACUUM_ERROR


@dataclass(frozen=True)
class ObservedStats:
    """Per-intensity tallies (signal, decoy, vacuum) for one estimation block."""

    signal: IntensityTally
    decoy: IntensityTally
    vacuum: IntensityTally

    @property
    def classes(self):
        return (self.signal, self.decoy, self.vacuum)

    @property
    def sifted(self):
        return sum(t.sifted for t in self.classes)

    @property
    def errors(self):
        return sum(t.errors for t in self.classes)

    @property
    def sent(self):
        return sum(t.sent for t in self.classes)


@dataclass(frozen=True)
class AdjustedStats:
    """Measured signal statistics plus the worst-case shifted decoy inputs."""

    q_mu: float
    e_mu: float
    q_mu_upper: float
    q_nu_lower: float
    q_nu_upper: float
    e_nu_upper: float
    y0_lower: float
    y0_upper: float


@dataclass(frozen=True)
class DecoyBounds:
    y1_lower: float
    e1_upper: float

    @property
    def certified(self):
        return self.y1_lower > 0


@dataclass(frozen=True)
class KeyRateReport:
    qsnr: float
    qber: float
    gain_mu: float
    y1_lower: float
    e1_upper: float
    rate: float
    feasible: bool
    noise: NoiseBudget
    error_mu: float = float("nan")
    n_mu: float = 0.0
    n_actual: float = 0.0
    loss_db: float = 0.0
    qsnr_unbounded: bool = False
    inputs: tuple = field(default=(), compare=False)


def binary_entropy(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def qsnr(n_actual, noise, det, protocol):
    """Signal-to-noise ratio in dB; ``inf`` when the noise budget is empty."""
    signal = n_actual * (1.0 - det.afterpulse_prob - protocol.e_d)
    denom = noise.total
    if denom <= 0:
        return math.inf
    if signal <= 0:
        return -math.inf
    return 10.0 * math.log10(signal / denom)


def qber_from_qsnr(qsnr_db, protocol):
    if qsnr_db == math.inf:
        return protocol.e_d
    if qsnr_db == -math.inf:
        return VACUUM_ERROR
    snr = 10.0 ** (qsnr_db / 10.0)
    return (protocol.e_d * snr + VACUUM_ERROR) / (snr + 1.0)


def y1_lower_bound(q_mu, q_nu, y0, protocol):
    mu, nu = protocol.mu, protocol.nu
    value = (mu / (mu * nu - nu * nu)) * (
        q_nu * math.exp(nu)
        - q_mu * math.exp(mu) * nu * nu / (mu * mu)
        - (mu * mu - nu * nu) / (mu * mu) * y0
    )
    return min(max(value, 0.0), 1.0)


def e1_upper_bound(e_nu, q_nu, y0, y1_lower, protocol):
    if y1_lower <= 0:
        return 1.0
    value = (e_nu * q_nu * math.exp(protocol.nu) - VACUUM_ERROR * y0) / (y1_lower * protocol.nu)
    return min(max(value, 0.0), 1.0)


def decoy_bounds(gains, errors, protocol):
    """Weak+vacuum decoy bounds from gains (Q_mu, Q_nu, Q_omega) and errors (E_mu, E_nu)."""
    q_mu, q_nu, q_omega = gains
    _, e_nu = errors
    for v in (*gains, *errors):
        if not 0 <= v <= 1:
            raise ValueError(f"gains and error rates must lie in [0, 1], got {v}")
    y1 = y1_lower_bound(q_mu, q_nu, q_omega, protocol)
    return DecoyBounds(y1, e1_upper_bound(e_nu, q_nu, q_omega, y1, protocol))


def bounds_from_adjusted(adj, protocol):
    y1 = y1_lower_bound(adj.q_mu_upper, adj.q_nu_lower, adj.y0_upper, protocol)
    e1 = e1_upper_bound(adj.e_nu_upper, adj.q_nu_upper, adj.y0_lower, y1, protocol)
    return DecoyBounds(y1, e1)


def _sigma(p, n):
    if n <= 0:
        return 0.0
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / n)


def finite_size_adjust(stats, protocol):
    """Shift each decoy input by n_sigma binomial deviations in its worst direction.

    The yield bound sees a lower decoy gain and higher signal and vacuum gains;
    the error bound sees higher decoy error and gain and a lower vacuum gain.
    Signal gain and error used by the key term stay at their measured values.
    """
    if stats.sifted < protocol.block_size * (1.0 - 1e-9):
        raise InsufficientStatistics(
            f"block has {stats.sifted:.0f} sifted bits, need {protocol.block_size}")
    k = protocol.n_sigma
    sig, dec, vac = stats.classes
    q_mu, q_nu, y0 = sig.gain, dec.gain, vac.gain
    e_nu = dec.error_rate
    s_mu = _sigma(q_mu, sig.sent)
    s_nu = _sigma(q_nu, dec.sent)
    s_y0 = _sigma(y0, vac.sent)
    s_enu = _sigma(e_nu, dec.sifted)
    return AdjustedStats(
        q_mu=q_mu,
        e_mu=sig.error_rate,
        q_mu_upper=min(q_mu + k * s_mu, 1.0),
        q_nu_lower=max(q_nu - k * s_nu, 0.0),
        q_nu_upper=min(q_nu + k * s_nu, 1.0),
        e_nu_upper=min(e_nu + k * s_enu, 1.0),
        y0_lower=max(y0 - k * s_y0, 0.0),
        y0_upper=min(y0 + k * s_y0, 1.0),
    )


def secure_key_rate(q_mu, e_mu, y1_lower, e1_upper, protocol):
    """Asymptotic-form key rate (bps) from decoy bounds, clamped at zero."""
    q1 = y1_lower * protocol.mu * math.exp(-protocol.mu)
    per_pulse = q1 * (1.0 - binary_entropy(e1_upper)) - protocol.f_ec * q_mu * binary_entropy(e_mu)
    rate = protocol.sift_factor * protocol.rep_rate * protocol.probabilities[0] * per_pulse
    return max(rate, 0.0)


def rate_from_stats(stats, protocol):
    """Finite-size key rate (bps) and bounds from measured block tallies."""
    adj = finite_size_adjust(stats, protocol)
    bounds = bounds_from_adjusted(adj, protocol)
    rate = secure_key_rate(adj.q_mu, adj.e_mu, bounds.y1_lower, bounds.e1_upper, protocol)
    return rate, bounds, adj


# --- operating point -------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    """Link-level quantities the decoy model is built from.

    ``transmittance`` includes detector efficiency and the dead-time
    throughput factor; ``y0`` is the per-slot noise click probability.
    """

    loss_db: float
    n_mu: float
    n_actual: float
    noise: NoiseBudget
    transmittance: float
    y0: float


def raw_srs_rate(scenario):
    """Raman count rate (cps) at the receiver for the scenario's model, before slot gating."""
    traffic = scenario.traffic
    if traffic is None or scenario.fiber.length == 0:
        return 0.0
    cal = scenario.calibration
    if scenario.srs_model == "paper":
        rate = srs_rate_paper(scenario.fiber, traffic, scenario.filter)
    elif scenario.srs_model == "physical":
        k = cal.raman_coeff
        if k is None:
            k, _ = calibrate_raman_coeff(scenario.fiber.with_length(cal.reference_length), "both")
        rate = srs_rate_physical(scenario.fiber, traffic, scenario.filter, k)
    else:
        raise ValueError(f"srs_model must be one of {SRS_MODELS}, got {scenario.srs_model!r}")
    return cal.srs_scale * rate


def operating_point(scenario):
    det, protocol, cal = scenario.detector, scenario.protocol, scenario.calibration
    loss = link_loss(scenario.fiber, scenario.mux, scenario.filter, 1310) + cal.receiver_loss
    n_mu = expected_signal_rate(loss, protocol, det)
    n_actual = apply_dead_time(n_mu, det)
    throughput = n_actual / n_mu if n_mu > 0 else 1.0
    gate = slot_coincidence(det, protocol.rep_rate)
    has_traffic = scenario.traffic is not None
    noise = NoiseBudget(
        n_srs=gate * raw_srs_rate(scenario),
        n_dark=gate * dark_rate(det),
        n_after=gate * afterpulse_rate(n_actual, det),
        n_crosstalk=gate * crosstalk_rate(scenario.mux) if (has_traffic and cal.include_crosstalk) else 0.0,
    )
    transmittance = 10.0 ** (-loss / 10.0) * det.efficiency * throughput
    return OperatingPoint(loss, n_mu, n_actual, noise, transmittance, noise.total / protocol.rep_rate)


def expected_gains(transmittance, y0, protocol):
    """Gain Q_x and error-weighted gain E_x Q_x for each intensity class."""
    gains, err = [], []
    for x in protocol.intensities:
        signal = -math.expm1(-x * transmittance)
        gains.append(min(y0 + signal, 1.0))
        err.append(VACUUM_ERROR * y0 + protocol.e_d * signal)
    return gains, err


def true_single_photon(transmittance, y0, protocol):
    """Exact single-photon yield and error rate of the channel model."""
    y1 = min(y0 + transmittance, 1.0)
    e1 = (VACUUM_ERROR * y0 + protocol.e_d * transmittance) / y1 if y1 > 0 else VACUUM_ERROR
    return y1, e1


def expected_stats(transmittance, y0, protocol, sifted_bits=None):
    """Expected tallies for a block holding ``sifted_bits`` sifted bits in total."""
    sifted_bits = protocol.block_size if sifted_bits is None else sifted_bits
    gains, err = expected_gains(transmittance, y0, protocol)
    probs = protocol.probabilities
    mean_gain = sum(p * q for p, q in zip(probs, gains))
    if mean_gain <= 0:
        raise InsufficientStatistics("channel produces no detections")
    pulses = sifted_bits / (protocol.sift_factor * mean_gain)
    tallies = []
    for p, q, eq in zip(probs, gains, err):
        sent = p * pulses
        sifted = protocol.sift_factor * sent * q
        tallies.append(IntensityTally(sent, sent * q, sifted, protocol.sift_factor * sent * eq))
    return ObservedStats(*tallies)


def evaluate(scenario):
    protocol, det = scenario.protocol, scenario.detector
    op = operating_point(scenario)
    snr = qsnr(op.n_actual, op.noise, det, protocol)
    qber = qber_from_qsnr(snr, protocol)
    stats = expected_stats(op.transmittance, op.y0, protocol)
    rate, bounds, adj = rate_from_stats(stats, protocol)
    if qber > protocol.qber_cap:
        rate = 0.0
    return KeyRateReport(
        qsnr=snr,
        qber=qber,
        gain_mu=adj.q_mu,
        y1_lower=bounds.y1_lower,
        e1_upper=bounds.e1_upper,
        rate=rate,
        feasible=rate > 0 and qber <= protocol.qber_cap,
        noise=op.noise,
        error_mu=adj.e_mu,
        n_mu=op.n_mu,
        n_actual=op.n_actual,
        loss_db=op.loss_db,
        qsnr_unbounded=math.isinf(snr) and snr > 0,
        inputs=scenario.echo(),
    )


def _evaluate_all(scenarios, workers):
    if not workers or workers <= 1 or len(scenarios) < 2:
        return [evaluate(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves input order whatever the completion order
        return list(pool.map(evaluate, scenarios))


def sweep_power(scenario, powers, workers=None):
    return _evaluate_all([scenario.with_power(p) for p in powers], workers)


def sweep_distance(scenario, lengths, srs_model="physical", workers=None):
    base = scenario.with_srs_model(srs_model)
    return _evaluate_all([base.with_length(length) for length in lengths], workers)


# --- CSV -------------------------------------------------------------------

OUTPUT_COLUMNS = ("qsnr_db", "qber", "y1_lower", "e1_upper", "rate_bps", "feasible")


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".10g")
    return str(value)


def report_row(report):
    row = {k: format_value(v) for k, v in report.inputs}
    row.update({
        "qsnr_db": format_value(float(report.qsnr)),
        "qber": format_value(float(report.qber)),
        "y1_lower": format_value(float(report.y1_lower)),
        "e1_upper": format_value(float(report.e1_upper)),
        "rate_bps": format_value(float(report.rate)),
        "feasible": format_value(bool(report.feasible)),
    })
    return row


def write_reports_csv(reports, fh):
    rows = [report_row(r) for r in reports]
    if not rows:
        fh.write(",".join(OUTPUT_COLUMNS) + "\n")
        return
    writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def qsnr_from_qber(qber, protocol):
    """Inverse of ``qber_from_qsnr``."""
    if qber <= protocol.e_d:
        return math.inf
    if qber >= VACUUM_ERROR:
        return -math.inf
    return 10.0 * math.log10((VACUUM_ERROR - qber) / (qber - protocol.e_d))


def report_from_stats(stats, protocol, inputs=()):
    """Key-rate report built from one block's measured tallies."""
    rate, bounds, adj = rate_from_stats(stats, protocol)
    qber = stats.errors / stats.sifted if stats.sifted else VACUUM_ERROR
    if qber > protocol.qber_cap:
        rate = 0.0
    snr = qsnr_from_qber(qber, protocol)
    return KeyRateReport(
        qsnr=snr,
        qber=qber,
        gain_mu=adj.q_mu,
        y1_lower=bounds.y1_lower,
        e1_upper=bounds.e1_upper,
        rate=rate,
        feasible=rate > 0 and qber <= protocol.qber_cap,
        noise=NoiseBudget(),
        error_mu=adj.e_mu,
        qsnr_unbounded=math.isinf(snr) and snr > 0,
        inputs=tuple(inputs),
    )
