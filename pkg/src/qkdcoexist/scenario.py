"""Scenario description and its flat ``section.key = value`` text format."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, fields, replace
from importlib import resources
from typing import Optional

from .channel import ClassicalTrafficSpec, FiberSpec, FilterSpec, MuxSpec
from .detector import DetectorSpec, detector_preset
from .keyrate import SRS_MODELS, DecoyParams, ModelCalibration
from .presets import fiber_preset, filter_preset, mux_preset

DEFAULT_SEED = 24301
DEFAULT_SRS_MODEL = "physical"


class ScenarioError(ValueError):
    """Schema violation; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class CoexistenceScenario:
    fiber: FiberSpec
    traffic: Optional[ClassicalTrafficSpec]
    filter: FilterSpec
    mux: MuxSpec
    detector: DetectorSpec
    protocol: DecoyParams = DecoyParams()
    srs_model: str = DEFAULT_SRS_MODEL
    seed: int = DEFAULT_SEED
    calibration: ModelCalibration = ModelCalibration()
    name: str = "scenario"

    def __post_init__(self):
        if self.srs_model not in SRS_MODELS:
            raise ScenarioError("model.srs", f"must be one of {SRS_MODELS}, got {self.srs_model!r}")
        if self.seed < 0:
            raise ScenarioError("run.seed", "must be a non-negative integer")

    def with_power(self, launch_power):
        if self.traffic is None:
            raise ValueError("scenario carries no classical traffic to re-power")
        return replace(self, traffic=replace(self.traffic, launch_power=float(launch_power)))

    def with_length(self, length):
        return replace(self, fiber=self.fiber.with_length(float(length)))

    def with_srs_model(self, srs_model):
        return replace(self, srs_model=srs_model)

    def echo(self):
        """Input columns echoed in front of every CSV report row."""
        t = self.traffic
        return (
            ("scenario", self.name),
            ("fiber", self.fiber.name),
            ("length_km", float(self.fiber.length)),
            ("direction", t.direction if t else "none"),
            ("launch_power_dbm", float(t.launch_power) if t else "none"),
            ("passband_ghz", float(self.filter.passband)),
            ("detector", self.detector.name),
            ("srs_model", self.srs_model),
        )

    def digest(self):
        """SHA-256 of the canonical serialization."""
        return hashlib.sha256(serialize(self).encode("utf-8")).digest()


# --- field tables ----------------------------------------------------------


def _float(text):
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _opt_float(text):
    return None if text.lower() == "none" else _float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text}")
    return int(value)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text}")


def _range(text):
    lo, sep, hi = text.partition("-")
    if not sep:
        raise ValueError(f"expected LOW-HIGH, got {text}")
    return (_float(lo), _float(hi))


def _ratio(text):
    parts = tuple(_float(p) for p in text.split(":"))
    if len(parts) != 3:
        raise ValueError(f"expected A:B:C, got {text}")
    return parts


def _opt_auto(text):
    return None if text.lower() == "auto" else _float(text)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_range(value):
    return f"{_fmt(float(value[0]))}-{_fmt(float(value[1]))}"


def _fmt_ratio(value):
    return ":".join(_fmt(float(v)) for v in value)


def _fmt_auto(value):
    return "auto" if value is None else _fmt(float(value))


# (key, attribute, parser, formatter)
FIBER_FIELDS = [
    ("name", "name", str, str),
    ("att_1310_db_per_km", "att_1310", _float, _fmt),
    ("att_1550_db_per_km", "att_1550", _float, _fmt),
    ("length_km", "length", _float, _fmt),
    ("aeff_um2", "aeff", _float, _fmt),
    ("beta_srs_cps_per_dbm_km", "beta_srs", _float, _fmt),
    ("total_loss_1310_db", "measured_total_loss_1310", _opt_float, _fmt),
    ("total_loss_1550_db", "measured_total_loss_1550", _opt_float, _fmt),
]
TRAFFIC_FIELDS = [
    ("launch_power_dbm", "launch_power", _float, _fmt),
    ("direction", "direction", str, str),
    ("band_nm", "band", _range, _fmt_range),
    ("aggregate_rate", "aggregate_rate", str, str),
]
FILTER_FIELDS = [
    ("passband_ghz", "passband", _float, _fmt),
    ("insertion_loss_db", "insertion_loss", _float, _fmt),
    ("center_nm", "center_wavelength", _float, _fmt),
]
MUX_FIELDS = [
    ("mul_loss_1310_db", "mul_loss_1310", _float, _fmt),
    ("mul_loss_1550_db", "mul_loss_1550", _float, _fmt),
    ("demul_loss_1310_db", "demul_loss_1310", _float, _fmt),
    ("demul_loss_1550_db", "demul_loss_1550", _float, _fmt),
    ("isolation_mul_db", "isolation_mul", _float, _fmt),
    ("isolation_demul_db", "isolation_demul", _float, _fmt),
    ("crosstalk_cps", "crosstalk_floor", _float, _fmt),
]
DETECTOR_FIELDS = [
    ("name", "name", str, str),
    ("efficiency", "efficiency", _float, _fmt),
    ("dark_per_gate", "dark_per_gate", _opt_float, _fmt),
    ("dark_cps_per_detector", "dark_cps", _opt_float, _fmt),
    ("gate_rate_hz", "gate_rate", _float, _fmt),
    ("gate_width_ps", "gate_width", _float, _fmt),
    ("dead_time_s", "dead_time", _float, _fmt),
    ("afterpulse_prob", "afterpulse_prob", _float, _fmt),
    ("count", "num_detectors", _int, _fmt),
]
PROTOCOL_FIELDS = [
    ("mu", "mu", _float, _fmt),
    ("nu", "nu", _float, _fmt),
    ("omega", "omega", _float, _fmt),
    ("emission_ratio", "emission_probs", _ratio, _fmt_ratio),
    ("rep_rate_hz", "rep_rate", _float, _fmt),
    ("misalignment", "e_d", _float, _fmt),
    ("f_ec", "f_ec", _float, _fmt),
    ("sift_factor", "sift_factor", _float, _fmt),
    ("block_size_bits", "block_size", _int, _fmt),
    ("n_sigma", "n_sigma", _float, _fmt),
    ("qber_cap", "qber_cap", _float, _fmt),
]
MODEL_FIELDS = [
    ("receiver_loss_db", "receiver_loss", _float, _fmt),
    ("srs_scale", "srs_scale", _float, _fmt),
    ("reference_length_km", "reference_length", _float, _fmt),
    ("raman_coeff_cps_per_mw_km", "raman_coeff", _opt_auto, _fmt_auto),
    ("include_crosstalk", "include_crosstalk", _bool, _fmt),
]

_PRESET_LOOKUP = {
    "fiber": fiber_preset,
    "filter": filter_preset,
    "mux": mux_preset,
    "detector": detector_preset,
}
_SECTIONS = {
    "fiber": FIBER_FIELDS,
    "traffic": TRAFFIC_FIELDS,
    "filter": FILTER_FIELDS,
    "mux": MUX_FIELDS,
    "detector": DETECTOR_FIELDS,
    "protocol": PROTOCOL_FIELDS,
    "model": MODEL_FIELDS,
}
_EXTRA_KEYS = {"scenario.name", "model.srs", "run.seed", "traffic.enabled"}


def _known_keys():
    keys = set(_EXTRA_KEYS)
    for section, table in _SECTIONS.items():
        keys.update(f"{section}.{k}" for k, *_ in table)
    keys.update(f"{s}.preset" for s in _PRESET_LOOKUP)
    return keys


KNOWN_KEYS = frozenset(_known_keys())


def parse_pairs(text):
    """Split scenario text into an ordered ``{key: value}`` mapping."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ScenarioError(f"line {lineno}", f"expected 'section.key = value', got {raw.strip()!r}")
        if key not in KNOWN_KEYS:
            raise ScenarioError(key, "unknown key")
        if key in pairs:
            raise ScenarioError(key, f"duplicate key on line {lineno}")
        if not value:
            raise ScenarioError(key, "empty value")
        pairs[key] = value
    return pairs


def _build(section, cls, table, pairs, base):
    values = {f.name: getattr(base, f.name) for f in fields(cls)} if base is not None else {}
    for key, attr, parse, _ in table:
        full = f"{section}.{key}"
        if full in pairs:
            try:
                values[attr] = parse(pairs[full])
            except ValueError as exc:
                raise ScenarioError(full, str(exc)) from None
    try:
        return cls(**values)
    except TypeError as exc:
        missing = [f"{section}.{k}" for k, attr, *_ in table if attr not in values]
        raise ScenarioError(section, f"incomplete; missing {', '.join(missing) or exc}") from None
    except ValueError as exc:
        raise ScenarioError(section, str(exc)) from None


def _preset(section, pairs, default=None):
    key = f"{section}.preset"
    name = pairs.get(key, default)
    if name is None:
        return None
    try:
        return _PRESET_LOOKUP[section](name)
    except ValueError as exc:
        raise ScenarioError(key, str(exc)) from None


def from_text(text):
    pairs = parse_pairs(text)

    fiber_base = _preset("fiber", pairs)
    if fiber_base is not None and "fiber.length_km" in pairs:
        # a new length invalidates the measured span totals unless restated
        fiber_base = fiber_base.with_length(fiber_base.length)
    fiber = _build("fiber", FiberSpec, FIBER_FIELDS, pairs, fiber_base)

    enabled = True
    if "traffic.enabled" in pairs:
        try:
            enabled = _bool(pairs["traffic.enabled"])
        except ValueError as exc:
            raise ScenarioError("traffic.enabled", str(exc)) from None
    traffic_keys = [k for k in pairs if k.startswith("traffic.") and k != "traffic.enabled"]
    if not enabled and traffic_keys:
        raise ScenarioError(traffic_keys[0], "not allowed with traffic.enabled = false")
    if enabled and traffic_keys:
        traffic = _build("traffic", ClassicalTrafficSpec, TRAFFIC_FIELDS, pairs, None)
    elif enabled:
        raise ScenarioError("traffic.launch_power_dbm", "required unless traffic.enabled = false")
    else:
        traffic = None

    filt = _build("filter", FilterSpec, FILTER_FIELDS, pairs, _preset("filter", pairs, "fbg-20ghz"))
    mux = _build("mux", MuxSpec, MUX_FIELDS, pairs, _preset("mux", pairs, "default"))
    detector = _build("detector", DetectorSpec, DETECTOR_FIELDS, pairs, _preset("detector", pairs))
    protocol = _build("protocol", DecoyParams, PROTOCOL_FIELDS, pairs, DecoyParams())
    calibration = _build("model", ModelCalibration, MODEL_FIELDS, pairs, ModelCalibration())

    srs_model = pairs.get("model.srs", DEFAULT_SRS_MODEL)
    seed = DEFAULT_SEED
    if "run.seed" in pairs:
        try:
            seed = _int(pairs["run.seed"])
        except ValueError as exc:
            raise ScenarioError("run.seed", str(exc)) from None
    return CoexistenceScenario(
        fiber=fiber,
        traffic=traffic,
        filter=filt,
        mux=mux,
        detector=detector,
        protocol=protocol,
        srs_model=srs_model,
        seed=seed,
        calibration=calibration,
        name=pairs.get("scenario.name", "scenario"),
    )


def serialize(scenario):
    """Canonical text form: every field explicit, fixed key order."""
    lines = [f"scenario.name = {scenario.name}"]

    def emit(section, obj, table):
        for key, attr, _, fmt in table:
            lines.append(f"{section}.{key} = {fmt(getattr(obj, attr))}")

    emit("fiber", scenario.fiber, FIBER_FIELDS)
    if scenario.traffic is None:
        lines.append("traffic.enabled = false")
    else:
        emit("traffic", scenario.traffic, TRAFFIC_FIELDS)
    emit("filter", scenario.filter, FILTER_FIELDS)
    emit("mux", scenario.mux, MUX_FIELDS)
    emit("detector", scenario.detector, DETECTOR_FIELDS)
    emit("protocol", scenario.protocol, PROTOCOL_FIELDS)
    lines.append(f"model.srs = {scenario.srs_model}")
    emit("model", scenario.calibration, MODEL_FIELDS)
    lines.append(f"run.seed = {scenario.seed}")
    return "\n".join(lines) + "\n"


def bundled_names():
    root = resources.files("qkdcoexist") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def bundled_text(name):
    path = resources.files("qkdcoexist") / "scenarios" / f"{name}.scn"
    if not path.is_file():
        raise ScenarioError("--scenario", f"no file or bundled scenario named {name!r}; bundled: {bundled_names()}")
    return path.read_text(encoding="utf-8")


def load_scenario(ref):
    """Load a scenario from a file path or a bundled scenario name."""
    if os.path.isfile(ref):
        with open(ref, encoding="utf-8") as fh:
            return from_text(fh.read())
    return from_text(bundled_text(ref))


def build_scenario(fiber, direction="co", launch_power=21.0, filter="fbg-20ghz", detector="ingaas-2017",
                   srs_model=DEFAULT_SRS_MODEL, seed=DEFAULT_SEED, protocol=None, calibration=None, mux="default",
                   name=None):
    """Programmatic constructor accepting preset names or spec objects."""
    fiber = fiber_preset(fiber) if isinstance(fiber, str) else fiber
    filt = filter_preset(filter) if isinstance(filter, str) else filter
    det = detector_preset(detector) if isinstance(detector, str) else detector
    mux = mux_preset(mux) if isinstance(mux, str) else mux
    traffic = None if launch_power is None else ClassicalTrafficSpec(float(launch_power), direction)
    return CoexistenceScenario(
        fiber=fiber,
        traffic=traffic,
        filter=filt,
        mux=mux,
        detector=det,
        protocol=protocol or DecoyParams(),
        srs_model=srs_model,
        seed=seed,
        calibration=calibration or ModelCalibration(),
        name=name or f"{fiber.name}-{direction}",
    )
