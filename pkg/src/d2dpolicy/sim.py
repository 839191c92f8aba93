"""Slotted Monte Carlo over random single-cell topologies.

Topology ``i`` of a run uses its own stream ``SeedSequence(seed).spawn(n)[i]``:
first the node positions, then an ``(n_slots, 4)`` block of fading draws.
Results therefore do not depend on how sessions are spread over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import RadioParams, Topology, draw_fading
from .kernels import (
    N_BLOCK_EVENTS,
    N_BLOCKED_SLOTS,
    N_S_OK,
    N_S_TX,
    N_U_OK,
    d2d_session,
)
from .strategies import Mode, PreparedStrategy, StrategyConfig, prepare


@dataclass(frozen=True)
class SimConfig:
    radio: RadioParams
    strategy: StrategyConfig
    R: float = 250.0
    L: float = 100.0
    n_topologies: int = 500
    slots_per_topology: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not (self.R > 0 and self.L > 0):
            raise ValueError("R and L must be positive")
        if self.n_topologies < 1 or self.slots_per_topology < 1:
            raise ValueError("need at least one topology and one slot")


@dataclass(frozen=True)
class SimOutcome:
    omega_U: float
    omega_S: float
    d2d_mode_fraction: float
    blockage_fraction: float
    slots_simulated: int
    block_events: int = 0
    s_transmissions: int = 0
    omega_sum: float = field(init=False)
    omega_min: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "omega_sum", self.omega_U + self.omega_S)
        object.__setattr__(self, "omega_min", min(self.omega_U, self.omega_S))


def _uniform_in_disk(rng, radius, center=(0.0, 0.0)):
    r = radius * math.sqrt(rng.random())
    t = 2.0 * math.pi * rng.random()
    return (center[0] + r * math.cos(t), center[1] + r * math.sin(t))


def generate_topology(rng: np.random.Generator, R=250.0, L=100.0) -> Topology:
    if not (R > 0 and L > 0):
        raise ValueError("R and L must be positive")
    inner = 0.75 * R
    pos_U = _uniform_in_disk(rng, R)
    pos_S = _uniform_in_disk(rng, inner)
    while True:
        pos_D = _uniform_in_disk(rng, L, pos_S)
        if math.hypot(*pos_D) <= inner:
            break
    return Topology(pos_U=pos_U, pos_S=pos_S, pos_D=pos_D)


def _d2b_session(prep: PreparedStrategy, h):
    """TDMA: S on even slots, U on odd slots, both at received power ``A rho``."""
    r = prep.radio
    n = h.shape[0]
    even = np.arange(n) % 2 == 0
    rx = r.A * r.rho
    u_ok = (~even) & (rx * h[:, 1] >= r.theta * r.noise)
    s_ok = even & (rx * h[:, 3] >= r.theta * r.noise)
    return SimOutcome(
        omega_U=np.count_nonzero(u_ok) / n,
        omega_S=np.count_nonzero(s_ok) / n,
        d2d_mode_fraction=0.0,
        blockage_fraction=0.0,
        slots_simulated=n,
        s_transmissions=int(np.count_nonzero(even)),
    )


def run_session(topology: Topology, config: SimConfig, rng: np.random.Generator,
                prepared: PreparedStrategy | None = None) -> SimOutcome:
    prep = prepared if prepared is not None else prepare(config.strategy, topology, config.radio)
    h = draw_fading(rng, config.slots_per_topology)
    if prep.mode is Mode.D2B:
        return _d2b_session(prep, h)

    r = prep.radio
    gains = tuple(float(r.gain(d)) for d in (topology.d_UD, topology.d_UB, topology.d_SD, topology.d_SB))
    counts = d2d_session(prep.d2d_powers(h), h, gains, r.P_U, r.noise, r.theta, prep.config.W)
    n = h.shape[0]
    return SimOutcome(
        omega_U=counts[N_U_OK] / n,
        omega_S=counts[N_S_OK] / n,
        d2d_mode_fraction=1.0,
        blockage_fraction=counts[N_BLOCKED_SLOTS] / n,
        slots_simulated=n,
        block_events=int(counts[N_BLOCK_EVENTS]),
        s_transmissions=int(counts[N_S_TX]),
    )


def aggregate(outcomes) -> SimOutcome:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("nothing to aggregate")
    n = np.array([o.slots_simulated for o in outcomes], dtype=float)
    total = n.sum()

    def avg(attr):
        return float(np.dot(n, [getattr(o, attr) for o in outcomes]) / total)

    return SimOutcome(
        omega_U=avg("omega_U"),
        omega_S=avg("omega_S"),
        d2d_mode_fraction=avg("d2d_mode_fraction"),
        blockage_fraction=avg("blockage_fraction"),
        slots_simulated=int(total),
        block_events=sum(o.block_events for o in outcomes),
        s_transmissions=sum(o.s_transmissions for o in outcomes),
    )


def topology_streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _one(args):
    config, rng = args
    topo = generate_topology(rng, config.R, config.L)
    return run_session(topo, config, rng)


def run_sessions(config: SimConfig, threads=1):
    """Per-topology outcomes, in topology order."""
    jobs = [(config, rng) for rng in topology_streams(config.seed, config.n_topologies)]
    if threads <= 1:
        return [_one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_one, jobs))


def run_simulation(config: SimConfig, threads=1) -> SimOutcome:
    return aggregate(run_sessions(config, threads))
