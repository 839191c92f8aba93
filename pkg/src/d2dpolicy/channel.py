"""Radio layer: Rayleigh fading, SINR-based success/blockage probabilities.

Four nodes share one uplink channel: the licensed user ``U`` transmits to the
base station ``B`` while the D2D source ``S`` may transmit to ``D``. All
powers are linear watts; dB/dBm conversion happens at the configuration
boundary via :func:`dbm_to_watts` and :func:`db_to_linear`.

Fading magnitudes are always ordered ``(UD, UB, SD, SB)`` when stacked in an
array, see :data:`FADING_LINKS`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FADING_LINKS = ("UD", "UB", "SD", "SB")


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def dbm_to_watts(dbm):
    return _scalar_or_array(10.0 ** (np.asarray(dbm, dtype=float) / 10.0) / 1e3)


def watts_to_dbm(watts):
    return _scalar_or_array(10.0 * np.log10(watts) + 30.0)


def db_to_linear(db):
    return _scalar_or_array(10.0 ** (np.asarray(db, dtype=float) / 10.0))


def linear_to_db(x):
    return _scalar_or_array(10.0 * np.log10(x))


def _point(p):
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"expected a finite 2-D coordinate, got {p!r}")
    return (float(arr[0]), float(arr[1]))


@dataclass(frozen=True)
class Topology:
    """Node positions in metres. ``B`` sits at the origin by convention."""

    pos_U: tuple[float, float]
    pos_S: tuple[float, float]
    pos_D: tuple[float, float]
    pos_B: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("pos_B", "pos_U", "pos_S", "pos_D"):
            object.__setattr__(self, name, _point(getattr(self, name)))
        pts = {"B": self.pos_B, "U": self.pos_U, "S": self.pos_S, "D": self.pos_D}
        names = list(pts)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                if math.dist(pts[a], pts[b]) <= 0.0:
                    raise ValueError(f"nodes {a} and {b} coincide")

    @property
    def d_UB(self):
        return math.dist(self.pos_U, self.pos_B)

    @property
    def d_SB(self):
        return math.dist(self.pos_S, self.pos_B)

    @property
    def d_SD(self):
        return math.dist(self.pos_S, self.pos_D)

    @property
    def d_UD(self):
        return math.dist(self.pos_U, self.pos_D)

    @property
    def d_DB(self):
        return math.dist(self.pos_D, self.pos_B)


@dataclass(frozen=True)
class RadioParams:
    """Linear-unit radio constants.

    ``P_U``/``P_S`` are the transmit powers actually in use; strategies
    overwrite them (``dataclasses.replace``) from the targets ``rho`` (received
    power of U at B) and ``xi`` (D2D SNR at D).
    """

    A: float = 1.0
    alpha: float = 4.0
    N0: float = 1e-12  # -90 dBm
    theta: float = 1.0
    I_ic: float = 0.0
    P_U: float = 0.1
    P_S: float = 0.1
    rho: float = 1e-12
    xi: float = 10.0

    def __post_init__(self):
        for name in ("A", "N0", "theta", "P_U", "P_S", "rho", "xi"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not self.alpha >= 2:
            raise ValueError(f"alpha must be >= 2, got {self.alpha!r}")
        if not (np.isfinite(self.I_ic) and self.I_ic >= 0):
            raise ValueError(f"I_ic must be nonnegative, got {self.I_ic!r}")

    @property
    def noise(self):
        """Noise plus inter-cell interference, the floor every SINR sees."""
        return self.N0 + self.I_ic

    def gain(self, d):
        """Mean path gain ``A * d**-alpha``."""
        return self.A * np.asarray(d, dtype=float) ** (-self.alpha)


@dataclass(frozen=True)
class LinkRatios:
    """Average-power ratios that fully determine the ``p``/``q`` laws.

    ``gamma_XY`` is the interference-free SNR of X's signal at Y. ``R_D`` is
    S-over-U received power at D, ``R_B`` the same at B.
    """

    gamma_SD: float
    gamma_SB: float
    gamma_UD: float
    gamma_UB: float
    R_D: float
    R_B: float

    def __post_init__(self):
        for name in ("gamma_SD", "gamma_SB", "gamma_UD", "gamma_UB", "R_D", "R_B"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @classmethod
    def from_topology(cls, topology: Topology, radio: RadioParams) -> "LinkRatios":
        rx_SD = radio.P_S * radio.gain(topology.d_SD)
        rx_SB = radio.P_S * radio.gain(topology.d_SB)
        rx_UD = radio.P_U * radio.gain(topology.d_UD)
        rx_UB = radio.P_U * radio.gain(topology.d_UB)
        n = radio.noise
        return cls(
            gamma_SD=float(rx_SD / n),
            gamma_SB=float(rx_SB / n),
            gamma_UD=float(rx_UD / n),
            gamma_UB=float(rx_UB / n),
            R_D=float(rx_SD / rx_UD),
            R_B=float(rx_SB / rx_UB),
        )


@dataclass(frozen=True)
class SlotObservables:
    h_UD_sq: float
    h_UB_sq: float
    h_SD_sq: float
    h_SB_sq: float
    pi: float = field(default=0.0)
    phi: float = field(default=0.0)


def _check_links(links):
    for v in (links.gamma_SD, links.gamma_SB, links.R_D, links.R_B):
        if not v > 0:
            raise ValueError("link ratios must be strictly positive")


def sample_fading(rng: np.random.Generator, size=None):
    """|h|^2 of a unit-variance complex Gaussian: a unit-mean exponential."""
    return rng.standard_exponential(size)


def success_probability(links: LinkRatios, radio: RadioParams, h_UD_sq):
    """P[SINR_D >= theta] given U's fading towards D; vectorised over ``h_UD_sq``."""
    _check_links(links)
    h = np.asarray(h_UD_sq, dtype=float)
    out = np.exp(-radio.theta / links.gamma_SD - (radio.theta / links.R_D) * h)
    return out if out.ndim else float(out)


def blockage_probability(links: LinkRatios, radio: RadioParams, h_UB_sq):
    """P[SINR_B < theta] if S transmits, given U's fading towards B.

    The closed form exceeds one for weak U fades; it is clamped there.
    """
    _check_links(links)
    h = np.asarray(h_UB_sq, dtype=float)
    expo = 1.0 / links.gamma_SB - h / (links.R_B * radio.theta)
    out = np.exp(np.minimum(expo, 0.0))
    return out if out.ndim else float(out)


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("CDF argument must lie in [0, 1]")
    return x


def success_atom(links: LinkRatios, radio: RadioParams):
    """Largest attainable ``p`` (no interference from U); the CDF reaches 1 there."""
    return math.exp(-radio.theta / links.gamma_SD)


def cdf_success(x, links: LinkRatios, radio: RadioParams):
    """CDF of the success probability ``p`` over U->D fading."""
    x = _check_unit(x)
    x0 = success_atom(links, radio)
    s = links.R_D / radio.theta
    with np.errstate(divide="ignore"):
        # e^{R_D/gamma_SD} x^{R_D/theta} == (x/x0)^{R_D/theta}; this form cannot overflow
        body = np.power(x / x0, s)
    out = np.where(x > x0, 1.0, np.minimum(body, 1.0))
    return out if out.ndim else float(out)


def cdf_blockage(x, links: LinkRatios, radio: RadioParams):
    """P[q < x] over U->B fading. Mass ``1 - cdf_blockage(1)`` sits on q = 1."""
    x = _check_unit(x)
    r = links.R_B * radio.theta
    out = math.exp(-r / links.gamma_SB) * np.power(x, r)
    return out if out.ndim else float(out)


def draw_fading(rng: np.random.Generator, n_slots: int) -> np.ndarray:
    """``(n_slots, 4)`` array of fading magnitudes, columns per :data:`FADING_LINKS`.

    Row ``t`` consumes the stream exactly as ``n_slots`` successive calls to
    :func:`slot_observables` would.
    """
    return rng.standard_exponential((n_slots, 4))


def observables_from_fading(topology: Topology, radio: RadioParams, h):
    """Interference power from U at D (``pi``) and U's useful power at B (``phi``)."""
    h = np.asarray(h, dtype=float)
    pi = radio.P_U * radio.gain(topology.d_UD) * h[..., 0]
    phi = radio.P_U * radio.gain(topology.d_UB) * h[..., 1]
    return pi, phi


def slot_observables(topology: Topology, radio: RadioParams, rng: np.random.Generator) -> SlotObservables:
    h = rng.standard_exponential(4)
    pi, phi = observables_from_fading(topology, radio, h)
    return SlotObservables(
        h_UD_sq=float(h[0]),
        h_UB_sq=float(h[1]),
        h_SD_sq=float(h[2]),
        h_SB_sq=float(h[3]),
        pi=float(pi),
        phi=float(phi),
    )
