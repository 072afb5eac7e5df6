"""Pure-Python/numpy reference implementation of the hot kernels.

The compiled module ``_kernels`` exports the same functions with the same
signatures and semantics; ``kernels.py`` picks one at import time.
"""
from __future__ import annotations

import math

import numpy as np

NEWTON_ITERS = 60
STEP_TOL = 1e-10


def _phase_objective(c, w, th):
    # sum_k ln(c_k + Re(e^{-j th} w_k))
    return float(np.sum(np.log(c + np.real(np.exp(-1j * th) * w))))


def _evaluate(c, w, th):
    """Objective, first and second derivative, and sum_k w_k / t_k at ``th``."""
    ct, st = math.cos(th), math.sin(th)
    re = ct * w.real + st * w.imag
    im = ct * w.imag - st * w.real
    t = c + re
    rs = -im / t
    rc = re / t
    e = float(np.sum(np.log(t)))
    return e, -float(np.sum(rs)), -float(np.sum(rc + rs * rs)), complex(np.sum(w / t))


def _ascend(c, w, th):
    """Safeguarded Newton ascent on the single-phase objective from ``th``.

    Falls back to the fixed-point direction ``angle(sum w_k / t_k)`` where
    the objective is not locally concave, and halves steps that would
    lower it. Returns ``(theta, objective)``.
    """
    e, d1, d2, s = _evaluate(c, w, th)
    for _ in range(NEWTON_ITERS):
        if d2 < 0:
            step = -d1 / d2
        else:
            step = math.remainder(math.atan2(s.imag, s.real) - th, 2 * math.pi)
        if abs(step) < STEP_TOL:
            break
        lam = 1.0
        while True:
            tn = th + lam * step
            en, d1n, d2n, sn = _evaluate(c, w, tn)
            if en >= e:
                break
            lam *= 0.5
            if abs(lam * step) < STEP_TOL:
                return th, e
        th, e, d1, d2, s = tn, en, d1n, d2n, sn
    return th, e


def best_phase(c, w, t_now, extra_starts):
    """Maximize sum_k ln(c_k + Re(e^{-j th} w_k)) over th.

    Starts from the closed-form weighted-angle estimate (weights 1/t_now)
    and from the peaks of the ``extra_starts`` most influential terms.
    Returns ``(theta, zero_argument_flag)``.
    """
    s = np.sum(w / t_now)
    if s == 0:
        th0, flag = 0.0, True
    else:
        th0, flag = float(np.angle(s)), False
    if extra_starts < 0:
        return th0, flag
    best_th, best_e = _ascend(c, w, th0)
    if extra_starts:
        order = np.argsort(-np.abs(w) / c, kind="stable")[:extra_starts]
        for k in order:
            if w[k] == 0:
                continue
            th, e = _ascend(c, w, float(np.angle(w[k])))
            if e > best_e:
                best_th, best_e = th, e
    return best_th, flag


def fc_sweep(g, hem, f, t, snr, rows, levels, extra_starts):
    """Coordinate-ascent sweep over the elements ``rows`` of one analog column.

    g      (K, N, N) complex   per-subcarrier G matrices
    hem    (K, N) complex      per-subcarrier H_em vectors
    f      (N,) complex        column being optimized, updated in place
    t      (K,) float          determinant arguments M[k], updated in place
    levels int                 codebook size 2^b, or 0 for continuous phases
    extra_starts int           -1: closed-form phase only; >= 0: refine with
                               that many extra starting points
    Returns the number of elements whose weighted sum was exactly zero.
    """
    n_ant = f.shape[0]
    amp = 1.0 / math.sqrt(n_ant)
    step = 2.0 * math.pi / levels if levels else 0.0
    zeros = 0
    for n in rows:
        z = g[:, n, :] @ f - g[:, n, n] * f[n] - hem[:, n]
        c = t - 2.0 * snr * np.real(np.conj(f[n]) * z)
        w = (2.0 * snr * amp) * z
        th, flag = best_phase(c, w, t, extra_starts)
        zeros += flag
        if levels:
            x = (th % (2 * math.pi)) / step
            lo = math.floor(x)
            idx = lo + 1 if x - lo > 0.5 else lo
            th = (idx % levels) * step
        f[n] = amp * complex(math.cos(th), math.sin(th))
        t[:] = c + 2.0 * snr * np.real(np.conj(f[n]) * z)
    return zeros


def ds_candidate_matrices(h_ii, u, n_rf, levels, n_ant):
    """Rank-2 increments X for every nonzero candidate row.

    Returns (K, n_rf*levels, n_rf, n_rf). Candidate ``j`` drives chain
    ``j // levels`` with phase index ``j % levels``.
    """
    K = u.shape[0]
    amp = 1.0 / math.sqrt(n_ant)
    phases = 2.0 * np.pi * np.arange(levels) / levels
    x = np.zeros((K, n_rf * levels, n_rf, n_rf), dtype=complex)
    for c in range(n_rf):
        for p in range(levels):
            j = c * levels + p
            wv = amp * np.exp(1j * phases[p])
            x[:, j, :, c] += wv * u
            x[:, j, c, :] += np.conj(wv) * np.conj(u)
            x[:, j, c, c] += h_ii / n_ant
    return x


def ds_sweep(hhat, q_inv, choice, n_rf, levels, tie_tol):
    """One ascending row-by-row pass of the selection-matrix search.

    hhat    (K, N, N) complex  SNR-scaled Gram matrices H^H H
    q_inv   (K, R, R) complex  inverse of F_BB F_BB^H + alpha I
    choice  (N,) int64         incumbent dictionary index per row, -1 = off;
                               overwritten with the new choice
    Returns per-row best scores (mean over k of log2|E_i[k]|).
    """
    K, n_ant, _ = hhat.shape
    amp = 1.0 / math.sqrt(n_ant)
    n_cand = n_rf * levels
    phases = 2.0 * np.pi * np.arange(levels) / levels
    d = q_inv.copy()
    rows_f = np.zeros((n_ant, n_rf), dtype=complex)  # F_RF rows fixed so far
    scores = np.zeros(n_ant)
    eye = np.eye(n_rf)
    for i in range(n_ant):
        u = np.einsum("lc,kl->kc", rows_f[:i].conj(), hhat[:, :i, i])
        h_ii = np.real(hhat[:, i, i])
        x = ds_candidate_matrices(h_ii, u, n_rf, levels, n_ant)
        d_inv = np.linalg.inv(d)
        e = eye + d_inv[:, None] @ x
        val = np.log2(np.real(np.linalg.det(e)))
        cand = np.concatenate([val.mean(axis=0), [0.0]])  # last entry: row off
        inc = choice[i] if choice[i] >= 0 else n_cand
        best = int(np.argmax(cand))
        top = cand[best]
        if cand[inc] >= top - tie_tol * max(1.0, abs(top)):
            best = inc
        else:
            near = np.flatnonzero(cand >= top - tie_tol * max(1.0, abs(top)))
            best = int(near[0])
        scores[i] = cand[best]
        if best == n_cand:
            choice[i] = -1
            continue
        choice[i] = best
        ch, p = divmod(best, levels)
        rows_f[i, ch] = amp * np.exp(1j * phases[p])
        d += x[:, best]
    return scores
