"""Single-power threshold policy: transmit iff ``q < k p``.

``k`` depends on the discount and blockage length only through
``beta = (1 - gamma) / (gamma (1 - gamma**W))``; it is the root of
``beta_of_k(k) = beta`` for the CDFs of ``p`` and ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .channel import LinkRatios, RadioParams, cdf_blockage, cdf_success, success_atom
from .mdp import Action

N_PANELS = 2048
GL_ORDER = 8
_GRADING_LEVELS = 40
_BRACKET_LO, _BRACKET_HI = 1e-6, 1e6
_BRACKET_LIMIT = 1e12


class QuadratureError(ArithmeticError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class NoSolutionError(ValueError):
    """``beta`` lies outside the range of ``beta_of_k``."""


class RootSearchError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PolicyParams:
    gamma: float
    W: int
    beta: float
    k: float
    C: float

    def __post_init__(self):
        if abs(self.k * self.gamma * self.C * (1.0 - self.gamma ** self.W) - 1.0) > 1e-9:
            raise ValueError("k and C are inconsistent")


def _check_gamma_W(gamma, W):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    if int(W) != W or W < 1:
        raise ValueError(f"W must be a positive integer, got {W!r}")


def beta_const(gamma, W):
    _check_gamma_W(gamma, W)
    return (1.0 - gamma) / (gamma * (1.0 - gamma ** W))


def expected_reward_C(k, gamma, W):
    if not k > 0:
        raise ValueError(f"k must be positive, got {k!r}")
    _check_gamma_W(gamma, W)
    return 1.0 / (gamma * k * (1.0 - gamma ** W))


def policy_params(gamma, W, k):
    return PolicyParams(gamma, int(W), beta_const(gamma, W), k, expected_reward_C(k, gamma, W))


# --- distribution functions ------------------------------------------------

class Cdf:
    """A CDF on [0, 1], extended by 1 to the right of 1.

    ``breaks`` lists interior points where the function is not smooth (kinks
    or jumps); quadrature panels are split and graded there.
    """

    def __init__(self, fn, breaks=(), name="cdf"):
        self._fn = fn
        self.breaks = tuple(sorted(float(b) for b in breaks if 0.0 < b < 1.0))
        self.name = name

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, 0.0, 1.0)
        return np.where(x > 1.0, 1.0, self._fn(inside))

    def __repr__(self):
        return f"Cdf({self.name})"


UNIFORM = Cdf(lambda x: x, name="uniform")


def rayleigh_cdfs(links: LinkRatios, radio: RadioParams):
    """``(cdf_p, cdf_q)`` induced by Rayleigh fading on the U->D and U->B links."""
    x0 = success_atom(links, radio)
    cdf_p = Cdf(lambda x: cdf_success(x, links, radio), breaks=(x0,), name="rayleigh_p")
    cdf_q = Cdf(lambda x: cdf_blockage(x, links, radio), name="rayleigh_q")
    return cdf_p, cdf_q


# --- quadrature ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _gl(order):
    return np.polynomial.legendre.leggauss(order)


def _panel_edges(lo, hi, n_panels):
    """Uniform edges plus geometric refinement towards both ends."""
    width = hi - lo
    uniform = np.linspace(lo, hi, n_panels + 1)
    h = width / n_panels
    geo = h * 0.5 ** np.arange(1, _GRADING_LEVELS + 1)
    edges = np.concatenate([uniform, lo + geo, hi - geo])
    edges = np.unique(edges[(edges >= lo) & (edges <= hi)])
    return edges


def _integrate(f, breakpoints, n_panels):
    xs, ws = _gl(GL_ORDER)
    pts = np.unique(np.clip(np.asarray(breakpoints, dtype=float), 0.0, 1.0))
    pts = np.union1d(pts, [0.0, 1.0])
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0.0:
            continue
        n = max(8, int(round(n_panels * (hi - lo))))
        e = _panel_edges(lo, hi, n)
        mid = 0.5 * (e[1:] + e[:-1])
        half = 0.5 * (e[1:] - e[:-1])
        x = (mid[:, None] + half[:, None] * xs[None, :]).ravel()
        total += float((f(x).reshape(-1, GL_ORDER) * ws).sum(axis=1) @ half)
    return total


def _beta_integral(k, cdf_p, cdf_q, n_panels):
    cuts = list(cdf_p.breaks) + [b / k for b in cdf_q.breaks] + [1.0 / k]
    if k <= 1.0:
        return k * _integrate(lambda x: cdf_q(k * x) * (1.0 - cdf_p(x)), cuts, n_panels)
    int_q = _integrate(cdf_q, list(cdf_q.breaks), n_panels)
    int_qp = _integrate(lambda x: cdf_q(k * x) * cdf_p(x), cuts, n_panels)
    return int_q - 1.0 + k * (1.0 - int_qp)


def beta_of_k(k, cdf_p=UNIFORM, cdf_q=UNIFORM, n_panels=N_PANELS, tol=1e-10):
    """The two-branch integral linking ``k`` and ``beta``.

    Raises :class:`QuadratureError` when halving the panel count moves the
    result by more than ``tol`` (relative to ``max(1, |beta|)``).
    """
    if not (k > 0 and np.isfinite(k)):
        raise ValueError(f"k must be positive and finite, got {k!r}")
    if n_panels < N_PANELS // 2:
        raise ValueError("use at least 1024 panels")
    fine = _beta_integral(k, cdf_p, cdf_q, n_panels)
    coarse = _beta_integral(k, cdf_p, cdf_q, n_panels // 2)
    err = abs(fine - coarse)
    if not np.isfinite(fine) or err > tol * max(1.0, abs(fine)):
        raise QuadratureError(f"beta_of_k({k!r}) unresolved, estimate {err:.2e}", err)
    return fine


def solve_k(beta, cdf_p=UNIFORM, cdf_q=UNIFORM, residual_tol=1e-9):
    """Invert the monotone map ``beta_of_k`` by bracketing and Brent's method."""
    if not (beta > 0 and np.isfinite(beta)):
        raise ValueError(f"beta must be positive and finite, got {beta!r}")

    def g(k):
        return beta_of_k(k, cdf_p, cdf_q) - beta

    lo, hi = _BRACKET_LO, _BRACKET_HI
    while g(lo) > 0:
        lo *= 1e-3
        if lo < 1.0 / _BRACKET_LIMIT:
            raise NoSolutionError(f"beta={beta!r} below every reachable value")
    while g(hi) < 0:
        hi *= 1e3
        if hi > _BRACKET_LIMIT:
            raise NoSolutionError(f"beta={beta!r} exceeds the supremum of beta_of_k")
    k = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = abs(g(k))
    if res > residual_tol:
        raise RootSearchError(f"solve_k residual {res:.2e} for beta={beta!r}")
    return k


def k_uniform(beta):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if beta <= 1.0 / 6.0:
        return math.sqrt(6.0 * beta)
    b = beta + 0.5
    return b + math.sqrt(b * b - 1.0 / 3.0)


# --- Rayleigh closed form -------------------------------------------------

def beta_ell(links: LinkRatios, radio: RadioParams):
    """``beta`` at ``k = exp(theta / gamma_SD)``, the end of the closed-form range."""
    th = radio.theta
    r = links.R_B * th
    s = links.R_D / th
    return links.R_D * math.exp(-th / links.gamma_UB) / (th * (1.0 + r) * (1.0 + r + s))


def k_rayleigh(links: LinkRatios, radio: RadioParams, gamma, W):
    return k_rayleigh_for_beta(beta_const(gamma, W), links, radio)


def k_rayleigh_for_beta(beta, links: LinkRatios, radio: RadioParams, branch="auto"):
    """Closed form up to ``beta_ell``, a 1-D root search beyond it.

    ``branch`` forces ``"closed"`` or ``"numeric"`` (used to check that the
    two agree where they meet).
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    th = radio.theta
    r = links.R_B * th
    s = links.R_D / th
    if th / links.gamma_SD > 700.0:
        # p < e^-700: S never gets through, C -> 0 and k -> inf
        return math.inf
    k_ell = math.exp(th / links.gamma_SD)
    b_ell = beta_ell(links, radio)
    if branch == "auto":
        branch = "closed" if beta <= b_ell else "numeric"
    if branch == "closed":
        return (beta / b_ell) ** (1.0 / (1.0 + r)) * k_ell
    if branch != "numeric":
        raise ValueError(f"unknown branch {branch!r}")

    e = math.exp(-th / links.gamma_UB)
    z1 = 1.0 / (1.0 + s)
    z2 = e / (1.0 + r + s)
    tail = e / (1.0 + r) - 1.0 - beta

    # k^{-s} e^{1/gamma_UD} == (k_ell/k)^s because R_D/gamma_SD == 1/gamma_UD;
    # the ratio form stays finite when gamma_UD is tiny
    def f(k):
        return (k / k_ell) * (1.0 - z1) + (k_ell / k) ** s * (z1 - z2) + tail

    if f(k_ell) >= 0:
        return k_ell
    hi = 2.0 * k_ell
    while f(hi) < 0:
        hi *= 2.0
        if hi > _BRACKET_LIMIT * k_ell:
            raise RootSearchError("no bracket for the Rayleigh k equation")
    try:
        return brentq(f, k_ell, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise RootSearchError(str(exc)) from exc


# --- decisions ----------------------------------------------------------------

def transmit_mask(p, q, k):
    """Vectorised decision rule; ties go to halt."""
    return np.asarray(q) < k * np.asarray(p)


def optimal_action(p, q, k) -> Action:
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("p and q must be probabilities")
    return Action.T if q < k * p else Action.H
