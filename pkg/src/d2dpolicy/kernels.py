"""Hot inner loops, each in a numba and a numpy flavour.

``d2d_session``
    Walks the slots of one D2D-mode session, enforcing the base-station
    blockage and counting delivered packets. Slots are sequential because a
    failed uplink slot silences S for the next ``W`` slots.
``expected_excess``
    ``sum_{pi,phi} w * max(0, max_i(p_i(pi) - q_i(phi)/k))``, the inner sweep of
    the multi-power fixed point.

The dispatchers pick the compiled path unless ``D2DPOLICY_DISABLE_NUMBA`` is
set. The two session paths evaluate identical float expressions, so their
integer counts agree bit for bit.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# session counters, in order
N_U_OK, N_S_OK, N_S_TX, N_BLOCKED_SLOTS, N_BLOCK_EVENTS = range(5)


@njit
def d2d_session_numba(tx_power, h_UD, h_UB, h_SD, h_SB,
                      gain_UD, gain_UB, gain_SD, gain_SB,
                      P_U, noise, theta, W):
    n = tx_power.shape[0]
    counts = np.zeros(5, dtype=np.int64)
    blocked = 0
    for t in range(n):
        sig_U = P_U * gain_UB * h_UB[t]
        transmit = False
        if blocked > 0:
            blocked -= 1
            counts[N_BLOCKED_SLOTS] += 1
        elif tx_power[t] > 0.0:
            transmit = True
        if transmit:
            P = tx_power[t]
            counts[N_S_TX] += 1
            if P * gain_SD * h_SD[t] >= theta * (noise + P_U * gain_UD * h_UD[t]):
                counts[N_S_OK] += 1
            if sig_U >= theta * (noise + P * gain_SB * h_SB[t]):
                counts[N_U_OK] += 1
            else:
                blocked = W
                counts[N_BLOCK_EVENTS] += 1
        elif sig_U >= theta * noise:
            counts[N_U_OK] += 1
    return counts


def d2d_session_masks(tx_power, h_UD, h_UB, h_SD, h_SB,
                      gain_UD, gain_UB, gain_SD, gain_SB,
                      P_U, noise, theta, W):
    """Per-slot boolean masks of one session (numpy path, also used by tests)."""
    n = tx_power.shape[0]
    want = tx_power > 0.0
    sig_U = P_U * gain_UB * h_UB
    s_ok = tx_power * gain_SD * h_SD >= theta * (noise + P_U * gain_UD * h_UD)
    u_ok_tx = sig_U >= theta * (noise + tx_power * gain_SB * h_SB)
    u_ok_quiet = sig_U >= theta * noise

    # S is free until the first wanted slot that fails the uplink; it then
    # sits out W slots. Jump from trigger to trigger instead of slot to slot.
    triggers = np.flatnonzero(want & ~u_ok_tx)
    blocked = np.zeros(n, dtype=bool)
    trigger_slots = []
    t = 0
    while True:
        j = np.searchsorted(triggers, t)
        if j == triggers.size:
            break
        tt = int(triggers[j])
        blocked[tt + 1:tt + 1 + W] = True
        trigger_slots.append(tt)
        t = tt + 1 + W
    tx = want & ~blocked
    return {
        "tx": tx,
        "blocked": blocked,
        "u_ok": np.where(tx, u_ok_tx, u_ok_quiet),
        "s_ok": tx & s_ok,
        "triggers": np.asarray(trigger_slots, dtype=np.int64),
    }


def d2d_session_numpy(tx_power, h_UD, h_UB, h_SD, h_SB,
                      gain_UD, gain_UB, gain_SD, gain_SB,
                      P_U, noise, theta, W):
    m = d2d_session_masks(tx_power, h_UD, h_UB, h_SD, h_SB,
                          gain_UD, gain_UB, gain_SD, gain_SB, P_U, noise, theta, W)
    counts = np.zeros(5, dtype=np.int64)
    counts[N_U_OK] = np.count_nonzero(m["u_ok"])
    counts[N_S_OK] = np.count_nonzero(m["s_ok"])
    counts[N_S_TX] = np.count_nonzero(m["tx"])
    counts[N_BLOCKED_SLOTS] = np.count_nonzero(m["blocked"])
    counts[N_BLOCK_EVENTS] = m["triggers"].size
    return counts


def _session_args(tx_power, h, gains, P_U, noise, theta, W):
    h = np.ascontiguousarray(h, dtype=np.float64)
    return (np.ascontiguousarray(tx_power, dtype=np.float64),
            h[:, 0].copy(), h[:, 1].copy(), h[:, 2].copy(), h[:, 3].copy(),
            float(gains[0]), float(gains[1]), float(gains[2]), float(gains[3]),
            float(P_U), float(noise), float(theta), int(W))


def d2d_session(tx_power, h, gains, P_U, noise, theta, W):
    """Dispatch the session walk.

    ``h`` is the ``(n, 4)`` fading array (UD, UB, SD, SB) and ``gains`` the
    matching mean path gains. ``tx_power[t] == 0`` means S wants to stay quiet.
    """
    args = _session_args(tx_power, h, gains, P_U, noise, theta, W)
    fn = d2d_session_numba if USE_NUMBA else d2d_session_numpy
    return fn(*args)


def session_masks(tx_power, h, gains, P_U, noise, theta, W):
    """Same walk as :func:`d2d_session`, returning the per-slot masks."""
    return d2d_session_masks(*_session_args(tx_power, h, gains, P_U, noise, theta, W))


@njit
def expected_excess_numba(p, q, weights, inv_k):
    n_pi, n_lev = p.shape
    n_phi = q.shape[0]
    total = 0.0
    for i in range(n_pi):
        row = 0.0
        for j in range(n_phi):
            best = 0.0
            for m in range(n_lev):
                v = p[i, m] - q[j, m] * inv_k
                if v > best:
                    best = v
            row += weights[i, j] * best
        total += row
    return total


def expected_excess_numpy(p, q, weights, inv_k, chunk=64):
    total = 0.0
    for i0 in range(0, p.shape[0], chunk):
        pc = p[i0:i0 + chunk]
        ex = (pc[:, None, :] - q[None, :, :] * inv_k).max(axis=-1)
        total += float((weights[i0:i0 + chunk] * np.maximum(ex, 0.0)).sum())
    return total


def expected_excess(p, q, weights, k):
    """Expected positive part of the best per-level excess ``p_i - q_i/k``.

    ``p`` is ``(n_pi, N)``, ``q`` is ``(n_phi, N)``, ``weights`` ``(n_pi, n_phi)``.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    fn = expected_excess_numba if USE_NUMBA else expected_excess_numpy
    return float(fn(p, q, w, 1.0 / float(k)))
