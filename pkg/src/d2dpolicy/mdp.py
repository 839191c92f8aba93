"""Transmit/halt Markov decision process with a blockage chain.

State ``(lam, p, q)``: ``lam = 0`` means S is free, ``lam = i > 0`` means S is in
slot ``i`` of a ``W``-slot blockage. Transmitting from a free state earns ``p``
and enters ``lam = 1`` with probability ``q``.

Two flavours:

* uncorrelated -- ``(p', q')`` is drawn afresh each slot from a fixed marginal,
  so blocked states need no ``(p, q)`` label: ``|P||Q| + W`` states;
* correlated -- a full stochastic kernel over grid pairs,
  ``|P||Q|(W + 1)`` states.

State indices: uncorrelated free states come first in row-major ``(p, q)``
order, followed by ``lam = 1..W``. Correlated states are ``lam * |P||Q| + pair``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

_STOCHASTIC_TOL = 1e-12


class Action(str, Enum):
    T = "T"
    H = "H"


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class UndefinedSlope(ValueError):
    """The transmit/halt boundary never crosses the grid."""


@dataclass(frozen=True)
class MdpState:
    lam: int
    p_index: int | None = None
    q_index: int | None = None


@dataclass(frozen=True, eq=False)
class MdpModel:
    p_grid: np.ndarray
    q_grid: np.ndarray
    W: int
    gamma: float
    marginal: np.ndarray | None = None  # (|P|, |Q|), uncorrelated
    kernel: np.ndarray | None = None  # (|P||Q|, |P||Q|), correlated

    @property
    def correlated(self):
        return self.kernel is not None

    @property
    def n_pairs(self):
        return self.p_grid.size * self.q_grid.size

    @property
    def n_states(self):
        if self.correlated:
            return self.n_pairs * (self.W + 1)
        return self.n_pairs + self.W

    def pair(self, i_p, i_q):
        return i_p * self.q_grid.size + i_q

    def index(self, s: MdpState) -> int:
        if not 0 <= s.lam <= self.W:
            raise ValueError(f"lam={s.lam} outside 0..{self.W}")
        if self.correlated:
            return s.lam * self.n_pairs + self.pair(s.p_index, s.q_index)
        if s.lam == 0:
            return self.pair(s.p_index, s.q_index)
        return self.n_pairs + s.lam - 1

    def state(self, idx: int) -> MdpState:
        if not 0 <= idx < self.n_states:
            raise IndexError(idx)
        nq = self.q_grid.size
        if self.correlated:
            lam, pair = divmod(idx, self.n_pairs)
            return MdpState(lam, *divmod(pair, nq))
        if idx < self.n_pairs:
            return MdpState(0, *divmod(idx, nq))
        return MdpState(idx - self.n_pairs + 1)


@dataclass(frozen=True, eq=False)
class SolvedPolicy:
    values: np.ndarray
    transmit: np.ndarray  # bool per state
    iterations: int
    residual: float

    @property
    def actions(self):
        return np.where(self.transmit, Action.T.value, Action.H.value)


@dataclass(frozen=True)
class ThresholdFit:
    slope: float
    violation_fraction: float
    columns_used: int


def midpoint_grid(n):
    """``(i + 0.5) / n`` for ``i < n``: keeps grid points off 0 and 1."""
    return (np.arange(n) + 0.5) / n


def _check_grid(g, name):
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D grid")
    if np.any(g < 0) or np.any(g > 1) or np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly increasing within [0, 1]")
    return g


def _check_common(W, gamma):
    if int(W) != W or W < 1:
        raise ValueError(f"W must be a positive integer, got {W!r}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")


def build_uncorrelated(p_grid, q_grid, marginal, W, gamma) -> MdpModel:
    p_grid = _check_grid(p_grid, "p_grid")
    q_grid = _check_grid(q_grid, "q_grid")
    _check_common(W, gamma)
    marginal = np.asarray(marginal, dtype=float)
    if marginal.shape != (p_grid.size, q_grid.size):
        raise ValueError(f"marginal must have shape {(p_grid.size, q_grid.size)}")
    if np.any(marginal < 0) or abs(marginal.sum() - 1.0) > _STOCHASTIC_TOL:
        raise ValueError(f"marginal is not a distribution (sum={marginal.sum()!r})")
    return MdpModel(p_grid, q_grid, int(W), float(gamma), marginal=marginal)


def build_correlated(p_grid, q_grid, kernel, W, gamma) -> MdpModel:
    p_grid = _check_grid(p_grid, "p_grid")
    q_grid = _check_grid(q_grid, "q_grid")
    _check_common(W, gamma)
    kernel = np.asarray(kernel, dtype=float)
    n = p_grid.size * q_grid.size
    if kernel.shape != (n, n):
        raise ValueError(f"kernel must have shape {(n, n)}")
    if np.any(kernel < 0) or np.any(np.abs(kernel.sum(axis=1) - 1.0) > _STOCHASTIC_TOL):
        raise ValueError("kernel rows must be probability distributions")
    return MdpModel(p_grid, q_grid, int(W), float(gamma), kernel=kernel)


def uniform_model(n, W, gamma) -> MdpModel:
    """Uncorrelated model with uniform ``p`` and ``q`` on ``n``-point mid-point grids."""
    g = midpoint_grid(n)
    return build_uncorrelated(g, g, np.full((n, n), 1.0 / (n * n)), W, gamma)


def transition_kernel(model: MdpModel, s: MdpState, a) -> np.ndarray:
    """Distribution over next-state indices after action ``a`` in state ``s``."""
    a = Action(a)
    if s.lam > 0 and a is Action.T:
        raise ValueError("transmitting is illegal during a blockage")
    out = np.zeros(model.n_states)
    n_pairs = model.n_pairs

    if model.correlated:
        row = model.kernel[model.pair(s.p_index, s.q_index)]
        if s.lam == 0 and a is Action.T:
            q = model.q_grid[s.q_index]
            out[:n_pairs] = (1.0 - q) * row
            out[n_pairs:2 * n_pairs] = q * row
        else:
            nxt = 0 if s.lam in (0, model.W) else s.lam + 1
            out[nxt * n_pairs:(nxt + 1) * n_pairs] = row
        return out

    fresh = model.marginal.ravel()
    if s.lam == 0 and a is Action.T:
        q = model.q_grid[s.q_index]
        out[:n_pairs] = (1.0 - q) * fresh
        out[n_pairs] = q
    elif s.lam in (0, model.W):
        out[:n_pairs] = fresh
    else:
        out[n_pairs + s.lam] = 1.0  # lam -> lam + 1
    return out


def _sweep_uncorrelated(model, v_free, v_blk):
    g = model.gamma
    p = model.p_grid[:, None]
    q = model.q_grid[None, :]
    cont = float((model.marginal * v_free).sum())
    v_tx = p + g * ((1.0 - q) * cont + q * v_blk[0])
    v_halt = g * cont
    transmit = v_tx > v_halt  # ties resolve to H
    new_free = np.where(transmit, v_tx, v_halt)
    new_blk = np.empty_like(v_blk)
    new_blk[:-1] = g * v_blk[1:]
    new_blk[-1] = g * cont
    return new_free, new_blk, transmit


def _sweep_correlated(model, V):
    g = model.gamma
    K = model.kernel
    nq = model.q_grid.size
    p = np.repeat(model.p_grid, nq)
    q = np.tile(model.q_grid, model.p_grid.size)
    nxt = V @ K.T  # nxt[lam, s] = E[V[lam, s'] | s]
    v_tx = p + g * ((1.0 - q) * nxt[0] + q * nxt[1 if model.W >= 1 else 0])
    v_halt = g * nxt[0]
    transmit = v_tx > v_halt
    new = np.empty_like(V)
    new[0] = np.where(transmit, v_tx, v_halt)
    new[1:model.W] = g * nxt[2:model.W + 1]
    new[model.W] = g * nxt[0]
    return new, transmit


def value_iteration(model: MdpModel, epsilon=1e-9, max_iter=10**6) -> SolvedPolicy:
    """Greedy value iteration from ``V = 0`` until the sup-norm step is below ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    residual = np.inf
    if model.correlated:
        V = np.zeros((model.W + 1, model.n_pairs))
        for it in range(1, max_iter + 1):
            new, transmit = _sweep_correlated(model, V)
            residual = float(np.max(np.abs(new - V)))
            V = new
            if residual < epsilon:
                # policy is greedy w.r.t. the converged values
                _, transmit = _sweep_correlated(model, V)
                tx = np.zeros(model.n_states, dtype=bool)
                tx[:model.n_pairs] = transmit
                return SolvedPolicy(V.ravel(), tx, it, residual)
    else:
        v_free = np.zeros((model.p_grid.size, model.q_grid.size))
        v_blk = np.zeros(model.W)
        for it in range(1, max_iter + 1):
            new_free, new_blk, transmit = _sweep_uncorrelated(model, v_free, v_blk)
            residual = max(float(np.max(np.abs(new_free - v_free))),
                           float(np.max(np.abs(new_blk - v_blk))))
            v_free, v_blk = new_free, new_blk
            if residual < epsilon:
                _, _, transmit = _sweep_uncorrelated(model, v_free, v_blk)
                tx = np.zeros(model.n_states, dtype=bool)
                tx[:model.n_pairs] = transmit.ravel()
                return SolvedPolicy(np.concatenate([v_free.ravel(), v_blk]), tx, it, residual)
    raise ConvergenceError(
        f"value iteration did not converge in {max_iter} sweeps (residual {residual:.3e})",
        residual=residual,
    )


def free_transmit_grid(policy: SolvedPolicy, model: MdpModel) -> np.ndarray:
    """``(|P|, |Q|)`` boolean transmit map of the free states."""
    return policy.transmit[:model.n_pairs].reshape(model.p_grid.size, model.q_grid.size)


def monotonicity_violations(tx: np.ndarray) -> float:
    """Fraction of free states breaking "non-decreasing in p, non-increasing in q"."""
    bad = np.zeros(tx.shape, dtype=bool)
    bad[:-1, :] |= tx[:-1, :] & ~tx[1:, :]  # T at p, H at larger p
    bad[:, 1:] |= tx[:, 1:] & ~tx[:, :-1]  # T at larger q, H at smaller q
    return float(bad.mean())


def extract_threshold(policy: SolvedPolicy, model: MdpModel) -> ThresholdFit:
    """Least-squares slope through the origin of the transmit/halt boundary."""
    if model.correlated:
        raise ValueError("threshold extraction needs an uncorrelated model")
    tx = free_transmit_grid(policy, model)
    q = model.q_grid
    ps, bs = [], []
    for i, p in enumerate(model.p_grid):
        col = tx[i]
        n_tx = int(col.sum())
        if n_tx == 0 or n_tx == col.size:
            continue
        # with a monotone column, the T block is a prefix of the q axis
        ps.append(p)
        bs.append(0.5 * (q[n_tx - 1] + q[n_tx]))
    if not ps:
        raise UndefinedSlope("policy is all-transmit or all-halt on every column")
    ps = np.asarray(ps)
    bs = np.asarray(bs)
    slope = float((ps * bs).sum() / (ps * ps).sum())
    return ThresholdFit(slope, monotonicity_violations(tx), len(ps))
