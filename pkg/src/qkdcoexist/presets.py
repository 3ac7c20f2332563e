"""Named fiber, filter and multiplexer configurations."""

from .channel import FiberSpec, FilterSpec, MuxSpec

FIELD_LENGTH_KM = 66.0

# Raman coefficient (cps per dBm per km, 20 GHz) by effective area in um^2
BETA_BY_AEFF = {80.0: 18.0, 110.0: 10.0, 130.0: 8.0}

_TABLE = [
    # name, att1550, att1310, total1550, total1310, aeff
    ("G652-1", 0.197, 0.337, 13.01, 22.21, 80.0),
    ("G652-2", 0.196, 0.338, 12.94, 22.29, 80.0),
    ("G654-110-1", 0.184, 0.300, 12.13, 19.83, 110.0),
    ("G654-110-2", 0.174, 0.288, 11.51, 19.03, 110.0),
    ("G654-130-1", 0.210, 0.347, 13.84, 22.88, 130.0),
    ("G654-130-2", 0.208, 0.348, 13.73, 22.95, 130.0),
]

FIBER_PRESETS = {
    name: FiberSpec(
        name=name,
        att_1310=a13,
        att_1550=a15,
        length=FIELD_LENGTH_KM,
        aeff=aeff,
        beta_srs=BETA_BY_AEFF[aeff],
        measured_total_loss_1310=t13,
        measured_total_loss_1550=t15,
    )
    for name, a15, a13, t15, t13, aeff in _TABLE
}

# Fibers laid along the same direction as the QKD signal vs. the opposite one
CO_FIBERS = ("G652-1", "G654-110-1", "G654-130-1")
COUNTER_FIBERS = ("G652-2", "G654-110-2", "G654-130-2")

# Synthetic attenuation classes used in the filter/fiber comparison matrix
LOSS_CLASSES = {
    "low-loss": (0.288, 0.174),
    "standard": (0.337, 0.197),
}

FILTER_PRESETS = {
    "fbg-20ghz": FilterSpec(passband=20.0, insertion_loss=1.9, center_wavelength=1310.0),
    "dwdm-100ghz": FilterSpec(passband=100.0, insertion_loss=0.5, center_wavelength=1310.0),
}

MUX_PRESETS = {
    "default": MuxSpec(),
    "ideal": MuxSpec(
        mul_loss_1310=0.0, mul_loss_1550=0.0, demul_loss_1310=0.0, demul_loss_1550=0.0,
        isolation_mul=float("inf"), isolation_demul=float("inf"), crosstalk_floor=0.0,
    ),
}


def _lookup(table, kind, name):
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown {kind} preset {name!r}; known: {sorted(table)}") from None


def fiber_preset(name):
    return _lookup(FIBER_PRESETS, "fiber", name)


def filter_preset(name):
    return _lookup(FILTER_PRESETS, "filter", name)


def mux_preset(name):
    return _lookup(MUX_PRESETS, "mux", name)


def synthetic_fiber(loss_class, aeff, length=FIELD_LENGTH_KM):
    """Coefficient-only fiber of a given attenuation class and effective area."""
    a13, a15 = _lookup(LOSS_CLASSES, "loss class", loss_class)
    aeff = float(aeff)
    beta = _lookup(BETA_BY_AEFF, "effective area", aeff)
    return FiberSpec(
        name=f"{loss_class}-{int(aeff)}",
        att_1310=a13,
        att_1550=a15,
        length=length,
        aeff=aeff,
        beta_srs=beta,
    )
