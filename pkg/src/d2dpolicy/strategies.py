"""Mode selection and per-slot decisions for the D2D source ``S``.

* AWA_S   single power ``xi d_SD^alpha N0``, transmit iff ``q < k p``
* AWAM_S  doubling power ladder, region map on ``(pi, phi)``
* GEO_S   D2D iff ``T_d d_SD^-alpha > d_SB^-alpha``; always transmits in D2D
* NO_D2D  both users share the uplink in TDMA

Every strategy sets U's power to ``rho d_UB^alpha``. In D2B mode S uses
``rho d_SB^alpha`` on even slots and U transmits on odd slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .channel import (
    LinkRatios,
    RadioParams,
    SlotObservables,
    Topology,
    blockage_probability,
    success_probability,
)
from .multipower import MultiPowerModel, cellular_grid, classify, solve_k_fixed_point
from .threshold import expected_reward_C, k_rayleigh, transmit_mask


class StrategyKind(str, Enum):
    AWA_S = "AWA_S"
    AWAM_S = "AWAM_S"
    GEO_S = "GEO_S"
    NO_D2D = "NO_D2D"


class Mode(str, Enum):
    D2D = "D2D"
    D2B = "D2B"


class SlotAction(str, Enum):
    TRANSMIT_D2D = "transmit_d2d"
    HALT = "halt"
    TRANSMIT_D2B = "transmit_d2b"


@dataclass(frozen=True)
class StrategyConfig:
    kind: StrategyKind
    gamma: float = 0.99
    W: int = 1
    xi: float = 10.0
    T_d: float = 0.8
    power_levels: tuple = ()
    fixed_point: str = "brent"
    grid_points: int = 256

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "power_levels", tuple(float(p) for p in self.power_levels))
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        if int(self.W) != self.W or self.W < 1:
            raise ValueError(f"W must be a positive integer, got {self.W!r}")
        if self.kind is StrategyKind.AWA_S and not self.xi > 0:
            raise ValueError("AWA_S needs xi > 0")
        if self.kind is StrategyKind.GEO_S and not self.T_d >= 0:
            raise ValueError("GEO_S needs T_d >= 0")
        if self.kind is StrategyKind.AWAM_S:
            lv = np.asarray(self.power_levels)
            if lv.size == 0 or np.any(lv <= 0):
                raise ValueError("AWAM_S needs positive power levels")
            if not np.allclose(lv[1:] / lv[:-1], 2.0, rtol=1e-9, atol=0):
                raise ValueError("AWAM_S power levels must double at each step")


@dataclass(frozen=True)
class ModeDecision:
    mode: Mode
    c_d2d: float
    c_d2b: float
    k: float | None = None


def power_ladder(base_dbm, count):
    """``count`` doubling levels starting at ``base_dbm`` (watts)."""
    return tuple(1e-3 * 10 ** (base_dbm / 10) * 2.0 ** np.arange(count))


def c_d2b(rho, N0, gamma, theta=1.0, A=1.0):
    """Discounted reward of relaying through B: one try every other slot at received power ``A rho``."""
    if not (rho > 0 and N0 > 0 and 0 <= gamma < 1):
        raise ValueError("need rho, N0 > 0 and 0 <= gamma < 1")
    return math.exp(-theta * N0 / (A * rho)) / (1.0 - gamma * gamma)


def select_mode(c_d2d, c_d2b, k=None) -> ModeDecision:
    mode = Mode.D2D if c_d2b <= c_d2d else Mode.D2B
    return ModeDecision(mode, float(c_d2d), float(c_d2b), k if mode is Mode.D2D else None)


def geo_s_mode(topology: Topology, alpha, T_d) -> Mode:
    d2d = T_d * topology.d_SD ** (-alpha) > topology.d_SB ** (-alpha)
    return Mode.D2D if d2d else Mode.D2B


def baseline_throughput(rho, N0, theta):
    return 0.5 * math.exp(-theta * N0 / rho)


def _with_uplink_power(topology, radio):
    return replace(radio, P_U=radio.rho * topology.d_UB ** radio.alpha)


def awa_s_radio(topology: Topology, radio: RadioParams, xi) -> RadioParams:
    radio = _with_uplink_power(topology, radio)
    return replace(radio, P_S=xi * topology.d_SD ** radio.alpha * radio.N0, xi=xi)


def awa_s_prepare(topology: Topology, radio: RadioParams, gamma, W, xi) -> ModeDecision:
    radio = awa_s_radio(topology, radio, xi)
    links = LinkRatios.from_topology(topology, radio)
    k = k_rayleigh(links, radio, gamma, W)
    c_b = c_d2b(radio.rho, radio.noise, gamma, radio.theta, radio.A)
    return select_mode(expected_reward_C(k, gamma, W), c_b, k)


def _d2b_action(slot):
    return SlotAction.TRANSMIT_D2B if slot % 2 == 0 else SlotAction.HALT


def awa_s_step(decision: ModeDecision, obs: SlotObservables, links: LinkRatios,
               radio: RadioParams, slot=0) -> SlotAction:
    if decision.mode is Mode.D2B:
        return _d2b_action(slot)
    p = success_probability(links, radio, obs.h_UD_sq)
    q = blockage_probability(links, radio, obs.h_UB_sq)
    return SlotAction.TRANSMIT_D2D if q < decision.k * p else SlotAction.HALT


def awam_s_prepare(topology: Topology, radio: RadioParams, gamma, W, power_levels,
                   method="brent", grid_points=256):
    """Solve the multi-level model for this topology and pick the mode.

    Returns ``(decision, model)``; ``model.k`` is set either way.
    """
    radio = replace(_with_uplink_power(topology, radio), P_S=power_levels[0])
    model = MultiPowerModel.from_cellular(topology, radio, power_levels[0], len(power_levels), gamma, W)
    fp = solve_k_fixed_point(model, cellular_grid(topology, radio, n=grid_points), method=method)
    model = model.with_k(fp.k)
    return select_mode(model.C, c_d2b(radio.rho, radio.noise, gamma, radio.theta, radio.A), fp.k), model


def awam_s_step(model: MultiPowerModel, obs: SlotObservables) -> int:
    return int(classify(model, obs.pi, obs.phi))


@dataclass(frozen=True, eq=False)
class PreparedStrategy:
    """Everything a session needs once the topology is known."""

    config: StrategyConfig
    topology: Topology
    radio: RadioParams  # powers in force for this topology
    decision: ModeDecision
    links: LinkRatios | None = None
    model: MultiPowerModel | None = None

    @property
    def mode(self):
        return self.decision.mode

    @property
    def d2b_power(self):
        return self.radio.rho * self.topology.d_SB ** self.radio.alpha

    def d2d_powers(self, h):
        """Per-slot transmit power of S in D2D mode (0 means stay quiet).

        ``h`` is the ``(n, 4)`` fading array; blockage is applied later.
        """
        h = np.asarray(h, dtype=float)
        kind = self.config.kind
        if kind is StrategyKind.GEO_S:
            return np.full(h.shape[0], self.radio.P_S)
        if kind is StrategyKind.AWA_S:
            p = success_probability(self.links, self.radio, h[:, 0])
            q = blockage_probability(self.links, self.radio, h[:, 1])
            return np.where(transmit_mask(p, q, self.decision.k), self.radio.P_S, 0.0)
        if kind is StrategyKind.AWAM_S:
            g_UD = self.radio.gain(self.topology.d_UD)
            g_UB = self.radio.gain(self.topology.d_UB)
            label = classify(self.model, self.radio.P_U * g_UD * h[:, 0], self.radio.P_U * g_UB * h[:, 1])
            table = np.concatenate([[0.0], self.model.powers])
            return table[label]
        raise ValueError(f"{kind} has no D2D mode")


def prepare(config: StrategyConfig, topology: Topology, radio: RadioParams) -> PreparedStrategy:
    kind = config.kind
    nan = float("nan")
    if kind is StrategyKind.NO_D2D:
        r = _with_uplink_power(topology, radio)
        return PreparedStrategy(config, topology, r, ModeDecision(Mode.D2B, nan, nan))
    if kind is StrategyKind.GEO_S:
        r = _with_uplink_power(topology, radio)
        r = replace(r, P_S=r.rho * topology.d_SD ** r.alpha)
        mode = geo_s_mode(topology, r.alpha, config.T_d)
        return PreparedStrategy(config, topology, r, ModeDecision(mode, nan, nan))
    if kind is StrategyKind.AWA_S:
        r = awa_s_radio(topology, radio, config.xi)
        links = LinkRatios.from_topology(topology, r)
        decision = awa_s_prepare(topology, radio, config.gamma, config.W, config.xi)
        return PreparedStrategy(config, topology, r, decision, links=links)
    if kind is StrategyKind.AWAM_S:
        decision, model = awam_s_prepare(topology, radio, config.gamma, config.W, config.power_levels,
                                         method=config.fixed_point, grid_points=config.grid_points)
        r = replace(_with_uplink_power(topology, radio), P_S=config.power_levels[0])
        return PreparedStrategy(config, topology, r, decision, model=model)
    raise ValueError(f"unknown strategy {kind!r}")
