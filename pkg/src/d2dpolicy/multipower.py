"""Multi-power-level policy on the ``(pi, phi)`` plane.

Level ``i`` (1-based) transmits at ``base_power * 2**(i-1)`` and has

    p_i = exp(-(a pi + b) / 2**(i-1))
    q_i = min(1, exp(-(c phi + d) / 2**(i-1)))

The optimal action maximises ``gamma C + p_i - q_i / k`` over levels, and
defers (label 0) when no level beats ``gamma C``. The plane is cut by a
defer boundary ``g0`` and by one curve per pair of neighbouring levels:
a function of ``pi`` when ``k <= 1`` and of ``phi`` when ``k > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .channel import RadioParams, Topology, dbm_to_watts
from .kernels import expected_excess
from .mdp import ConvergenceError
from .threshold import expected_reward_C

_RADICAND_SLACK = 1e-12


@dataclass(frozen=True)
class MultiPowerModel:
    N: int
    a: float
    b: float
    c: float
    d: float
    gamma: float
    W: int
    base_power: float = 1.0
    k: float | None = None
    C: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not (self.a > 0 and self.c > 0):
            raise ValueError("a and c must be positive")
        if not (np.isfinite(self.b) and np.isfinite(self.d)):
            raise ValueError("b and d must be finite")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        if int(self.W) != self.W or self.W < 1:
            raise ValueError(f"W must be a positive integer, got {self.W!r}")
        if self.k is not None:
            if not self.k > 0:
                raise ValueError(f"k must be positive, got {self.k!r}")
            C = expected_reward_C(self.k, self.gamma, self.W)
            if self.C is None:
                object.__setattr__(self, "C", C)
            elif abs(self.k * self.gamma * self.C * (1 - self.gamma ** self.W) - 1) > 1e-9:
                raise ValueError("k and C are inconsistent")

    @classmethod
    def from_cellular(cls, topology: Topology, radio: RadioParams, base_power, N, gamma, W, k=None):
        """Coefficients for the single-cell uplink with ``N`` doubling power levels.

        ``b`` and ``d`` use the full noise floor ``N0 + I_ic``.
        """
        rx_SD = radio.A * base_power * topology.d_SD ** (-radio.alpha)
        rx_SB = radio.A * base_power * topology.d_SB ** (-radio.alpha)
        a = radio.theta / rx_SD
        c = 1.0 / (radio.theta * rx_SB)
        return cls(N=N, a=a, b=radio.noise * a, c=c, d=-radio.theta * radio.noise * c,
                   gamma=gamma, W=W, base_power=base_power, k=k)

    def with_k(self, k):
        return replace(self, k=float(k), C=None)

    @property
    def powers(self):
        return self.base_power * 2.0 ** np.arange(self.N)

    @property
    def levels(self):
        """``2**(i-1)`` for ``i = 1..N``."""
        return 2.0 ** np.arange(self.N)

    def _need_k(self):
        if self.k is None:
            raise ValueError("model has no k yet; run solve_k_fixed_point first")
        return self.k


# --- probabilities and reward ----------------------------------------------

def _check_level(model, i):
    if int(i) != i or not 1 <= i <= model.N:
        raise ValueError(f"level {i!r} outside 1..{model.N}")
    return int(i)


def _p(model, pi, scale):
    return np.exp(-(model.a * np.asarray(pi, dtype=float) + model.b) / scale)


def _q(model, phi, scale):
    expo = -(model.c * np.asarray(phi, dtype=float) + model.d) / scale
    return np.exp(np.minimum(expo, 0.0))


def level_probabilities(model: MultiPowerModel, i, pi, phi):
    i = _check_level(model, i)
    if np.any(np.asarray(pi) < 0) or np.any(np.asarray(phi) < 0):
        raise ValueError("pi and phi must be nonnegative")
    s = 2.0 ** (i - 1)
    p, q = _p(model, pi, s), _q(model, phi, s)
    if np.ndim(p) == 0 and np.ndim(q) == 0:
        return float(p), float(q)
    return p, q


def level_table(model: MultiPowerModel, pi, phi):
    """``(p, q)`` with a trailing axis over levels: shapes ``pi.shape + (N,)``."""
    lv = model.levels
    p = _p(model, np.asarray(pi, dtype=float)[..., None], lv)
    q = _q(model, np.asarray(phi, dtype=float)[..., None], lv)
    return p, q


def reward(model: MultiPowerModel, pi, phi, i):
    k = model._need_k()
    p, q = level_probabilities(model, i, pi, phi)
    return model.gamma * model.C + p - q / k


def continuous_optimum(model: MultiPowerModel, pi, phi):
    """Maximiser ``x*`` of the reward over a continuous level index (NaN if none)."""
    k = model._need_k()
    u = model.c * np.asarray(phi, dtype=float) + model.d
    v = model.a * np.asarray(pi, dtype=float) + model.b
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (u - v) / (np.log(u) - np.log(v) - math.log(k))
        return 1.0 + np.log2(ratio)


# --- boundaries -----------------------------------------------------------------

def xi_level(model: MultiPowerModel, i):
    k = model._need_k()
    return (2.0 ** (i - 1) * math.log(1.0 / k) + model.b - model.d) / model.c


def _defer_level(model):
    # argmin of xi(i): level 1 when k <= 1, level N otherwise
    return 1 if model._need_k() <= 1.0 else model.N


def pi_threshold(model: MultiPowerModel):
    """Below this ``pi``, transmitting at the top level pays even under certain blockage.

    Only meaningful when ``q`` can saturate (``d < 0``) and ``k > 1``; returns
    ``-inf`` otherwise so the condition ``pi < pi_threshold`` never holds.
    """
    k = model._need_k()
    if model.d >= 0 or k <= 1.0:
        return -math.inf
    return (2.0 ** (model.N - 1) * math.log(k) - model.b) / model.a


def boundary_g0(model: MultiPowerModel, pi):
    """Defer boundary in ``phi`` as a function of ``pi``, including the step
    correction that applies when ``q`` saturates at 1."""
    pi = np.asarray(pi, dtype=float)
    g0 = (model.a / model.c) * pi + xi_level(model, _defer_level(model))
    step = np.where(pi - pi_threshold(model) >= 0.0, 1.0, 0.0)
    out = g0 * step
    return out if out.ndim else float(out)


def boundary_h0(model: MultiPowerModel, phi):
    """Inverse of the uncorrected ``g0``, raised to ``pi_threshold`` where that applies."""
    phi = np.asarray(phi, dtype=float)
    h0 = (model.c / model.a) * (phi - xi_level(model, _defer_level(model)))
    out = np.maximum(h0, pi_threshold(model))
    return out if out.ndim else float(out)


def _half_root(prod, coef):
    """``(1 - sqrt(1 - 4 coef prod)) / 2`` without cancellation, plus the radicand."""
    rad = 1.0 - 4.0 * coef * prod
    rad = np.where((rad < 0.0) & (rad > -_RADICAND_SLACK), 0.0, rad)
    with np.errstate(invalid="ignore"):
        root = np.sqrt(rad)
    return 2.0 * coef * prod / (1.0 + root), root, rad


def boundary_level(model: MultiPowerModel, i, abscissa):
    """Boundary between levels ``i`` and ``i + 1``.

    ``k <= 1``: ``phi = g_i(pi)``; ``k > 1``: ``pi = h_i(phi)``. NaN marks
    abscissae where the radicand is genuinely negative (no boundary).
    """
    k = model._need_k()
    if int(i) != i or not 1 <= i <= model.N - 1:
        raise ValueError(f"boundary index {i!r} outside 1..{model.N - 1}")
    x = np.asarray(abscissa, dtype=float)
    if np.any(x < 0):
        raise ValueError("abscissa must be nonnegative")
    s = 2.0 ** i
    with np.errstate(invalid="ignore", divide="ignore"):
        if k <= 1.0:
            p = np.exp(-(model.a * x + model.b) / s)
            y_lo, _, rad = _half_root(p * (1.0 - p), k)
            out = -model.d / model.c - (s / model.c) * np.log(y_lo)
        else:
            y = np.exp(-(model.c * x + model.d) / s)  # unclamped on purpose
            _, root, rad = _half_root(y * (1.0 - y), 1.0 / k)
            out = -model.b / model.a - (s / model.a) * np.log(0.5 + 0.5 * root)
        out = np.where(rad < 0.0, np.nan, out)
    return out if out.ndim else float(out)


def boundary_asymptote(model: MultiPowerModel, i, pi):
    """Straight line the ``k <= 1`` boundary ``i`` approaches for large ``pi``."""
    k = model._need_k()
    return (model.a / model.c) * np.asarray(pi, dtype=float) + (
        2.0 ** i * math.log(1.0 / k) + model.b - model.d) / model.c


def classify(model: MultiPowerModel, pi, phi):
    """Region label: 0 defers, ``i`` transmits at level ``i``. Ties take the lower label."""
    k = model._need_k()
    pi = np.asarray(pi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    pi, phi = np.broadcast_arrays(pi, phi)
    label = np.ones(pi.shape, dtype=np.int64)
    for i in range(1, model.N):
        if k <= 1.0:
            label += phi > boundary_level(model, i, pi)
        else:
            label += pi > boundary_level(model, i, phi)
    g0 = (model.a / model.c) * pi + xi_level(model, _defer_level(model))
    defer = (phi <= g0) & ~(pi < pi_threshold(model))
    label = np.where(defer, 0, label)
    return label if label.ndim else int(label)


def brute_force_label(model: MultiPowerModel, pi, phi):
    """Argmax of the reward over levels, 0 when nothing beats deferring."""
    k = model._need_k()
    p, q = level_table(model, pi, phi)
    ex = p - q / k
    best = ex.max(axis=-1)
    lab = np.where(best > 0.0, ex.argmax(axis=-1) + 1, 0)
    return lab if lab.ndim else int(lab)


# --- fixed point for k ---------------------------------------------------------

@dataclass(frozen=True)
class ObservableGrid:
    pi: np.ndarray
    phi: np.ndarray
    weights: np.ndarray  # (len(pi), len(phi)), sums to 1
    raw_mass: float = 1.0


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    k: float
    C: float
    iterations: int
    trace: list = field(default_factory=list)
    damped: bool = False


def exponential_grid(mean, n=256, lo=1e-4, hi=1e2):
    """Log-spaced abscissae over ``[lo, hi] * mean`` with trapezoid-weighted
    exponential density (not renormalised)."""
    if not mean > 0:
        raise ValueError("mean must be positive")
    x = np.geomspace(lo, hi, n) * mean
    dx = np.diff(x)
    tw = np.zeros(n)
    tw[:-1] += dx / 2
    tw[1:] += dx / 2
    return x, np.exp(-x / mean) / mean * tw


def product_grid(mean_pi, mean_phi, n=256, lo=1e-4, hi=1e2, mass_tol=1e-3):
    x, wx = exponential_grid(mean_pi, n, lo, hi)
    y, wy = exponential_grid(mean_phi, n, lo, hi)
    w = np.outer(wx, wy)
    raw = float(w.sum())
    if abs(raw - 1.0) > mass_tol:
        raise ValueError(f"grid captures mass {raw:.6f}; widen [lo, hi] or add points")
    return ObservableGrid(x, y, w / raw, raw)


def cellular_grid(topology: Topology, radio: RadioParams, n=256, lo=1e-4, hi=1e2):
    """Grid for independent exponential ``pi`` and ``phi`` (unit-mean fading)."""
    m_pi = radio.A * radio.P_U * topology.d_UD ** (-radio.alpha)
    m_phi = radio.A * radio.P_U * topology.d_UB ** (-radio.alpha)
    return product_grid(m_pi, m_phi, n, lo, hi)


def _k_from_C(C, gamma, W):
    return 1.0 / (gamma * C * (1.0 - gamma ** W))


def solve_k_fixed_point(model: MultiPowerModel, grid: ObservableGrid, tol=1e-10,
                        max_iter=100_000, method="iterate"):
    """Self-consistent ``k``: ``C = gamma C + E[max(0, max_i p_i - q_i/k)]``.

    ``method="iterate"`` starts at ``k = 1`` and repeats the update
    ``k <- 1 / (gamma C' (1 - gamma**W))``, switching to averaged steps if
    ``|dk|`` grows twice in a row. ``method="brent"`` solves the same
    scalar equation in ``C`` by bracketing, which is much faster.
    """
    g, W = model.gamma, model.W
    lv = model.levels
    p = _p(model, grid.pi[:, None], lv)
    q = _q(model, grid.phi[:, None], lv)
    w = grid.weights

    if method == "brent":
        def resid(C):
            return (1.0 - g) * C - expected_excess(p, q, w, _k_from_C(C, g, W))
        hi = 1.0 / (1.0 - g)
        if resid(hi) <= 0:
            C = hi
        else:
            C = brentq(resid, 1e-300, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        k = _k_from_C(C, g, W)
        return FixedPointResult(k, 1.0 / (g * k * (1.0 - g ** W)), 0, [k])
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")

    k = 1.0
    trace = [k]
    damped = False
    grow = 0
    prev_step = math.inf
    for it in range(1, max_iter + 1):
        C = g / (g * k * (1.0 - g ** W)) + expected_excess(p, q, w, k)
        k_new = _k_from_C(C, g, W)
        if damped:
            k_new = 0.5 * (k + k_new)
        step = abs(k_new - k)
        k = k_new
        trace.append(k)
        if step < tol:
            return FixedPointResult(k, expected_reward_C(k, g, W), it, trace, damped)
        grow = grow + 1 if step > prev_step else 0
        if grow >= 2 and not damped:
            damped = True
        prev_step = step
    raise ConvergenceError(f"k iteration did not settle in {max_iter} steps",
                           residual=prev_step, trace=trace)


# --- the four-node layout used for policy maps --------------------------------

# The policy-map layout does not state noise or U's power; this pair
# reproduces its published k values (see README).
LAYOUT_N0_DBM = -79.0
LAYOUT_P_U = 0.25


def layout_example(W, N0_dbm=LAYOUT_N0_DBM, P_U=LAYOUT_P_U, theta=1.0, gamma=0.99,
                   base_power=0.05, N=4):
    topo = Topology(pos_U=(0.0, 120.0), pos_S=(100.0, 0.0), pos_D=(100.0, 80.0))
    N0 = dbm_to_watts(N0_dbm)
    radio = RadioParams(N0=N0, theta=theta, P_U=P_U, P_S=base_power, rho=N0)
    model = MultiPowerModel.from_cellular(topo, radio, base_power, N, gamma, W)
    return topo, radio, model
