# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, atan2, log, log2, sqrt, floor, fabs, remainder, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef int NEWTON_ITERS = 60
cdef double STEP_TOL = 1e-10


cdef inline double creal_conj_mul(double complex a, double complex b) nogil:
    # Re(conj(a) * b)
    return a.real * b.real + a.imag * b.imag


cdef double evaluate(double[::1] c, double complex[::1] w, double th,
                     double* d1, double* d2, double complex* s) nogil:
    # objective, derivatives and sum_k w_k / t_k at th
    cdef Py_ssize_t k
    cdef double ct = cos(th), st = sin(th), e = 0.0, a1 = 0.0, a2 = 0.0
    cdef double re, im, t, rs, rc
    cdef double complex acc = 0.0
    for k in range(c.shape[0]):
        re = ct * w[k].real + st * w[k].imag
        im = ct * w[k].imag - st * w[k].real
        t = c[k] + re
        rs = -im / t
        rc = re / t
        e += log(t)
        a1 -= rs
        a2 -= rc + rs * rs
        acc = acc + w[k] / t
    d1[0] = a1
    d2[0] = a2
    s[0] = acc
    return e


cdef double ascend(double[::1] c, double complex[::1] w, double th, double* e_out) nogil:
    cdef int it
    cdef double d1, d2, d1n, d2n, step, lam, tn, en
    cdef double complex s, sn
    cdef double e = evaluate(c, w, th, &d1, &d2, &s)
    for it in range(NEWTON_ITERS):
        if d2 < 0:
            step = -d1 / d2
        else:
            step = remainder(atan2(s.imag, s.real) - th, 2.0 * M_PI)
        if fabs(step) < STEP_TOL:
            break
        lam = 1.0
        while True:
            tn = th + lam * step
            en = evaluate(c, w, tn, &d1n, &d2n, &sn)
            if en >= e:
                break
            lam *= 0.5
            if fabs(lam * step) < STEP_TOL:
                e_out[0] = e
                return th
        th = tn
        e = en
        d1 = d1n
        d2 = d2n
        s = sn
    e_out[0] = e
    return th


cdef double choose_phase(double[::1] c, double complex[::1] w, double[::1] t_now,
                         int extra_starts, char[::1] used, int* flag) nogil:
    # closed-form start, then Newton refinement from the most influential terms
    cdef Py_ssize_t K = c.shape[0], k, kk, j
    cdef double th, e, best_e, best_th, ratio, best_ratio
    cdef double complex s = 0.0
    for k in range(K):
        s = s + w[k] / t_now[k]
    flag[0] = s.real == 0.0 and s.imag == 0.0
    th = 0.0 if flag[0] else atan2(s.imag, s.real)
    if extra_starts < 0:
        return th
    best_th = ascend(c, w, th, &best_e)
    for k in range(K):
        used[k] = 0
    for j in range(extra_starts):
        # next most influential term by |w_k| / c_k (stable order)
        kk = -1
        best_ratio = -1.0
        for k in range(K):
            if used[k]:
                continue
            ratio = sqrt(w[k].real * w[k].real + w[k].imag * w[k].imag) / c[k]
            if ratio > best_ratio:
                best_ratio = ratio
                kk = k
        if kk < 0:
            break
        used[kk] = 1
        if w[kk].real == 0.0 and w[kk].imag == 0.0:
            continue
        th = ascend(c, w, atan2(w[kk].imag, w[kk].real), &e)
        if e > best_e:
            best_e = e
            best_th = th
    return best_th


def best_phase(double[::1] c, double complex[::1] w, double[::1] t_now, int extra_starts):
    cdef int flag = 0
    cdef char[::1] used = np.zeros(c.shape[0], dtype=np.int8)
    cdef double th
    with nogil:
        th = choose_phase(c, w, t_now, extra_starts, used, &flag)
    return th, bool(flag)


def fc_sweep(double complex[:, :, ::1] g, double complex[:, ::1] hem,
             double complex[::1] f, double[::1] t, double snr,
             long[::1] rows, int levels, int extra_starts):
    cdef Py_ssize_t K = g.shape[0], N = g.shape[1]
    cdef Py_ssize_t r, n, k, l
    cdef double amp = 1.0 / sqrt(<double>N)
    cdef double step = 2.0 * M_PI / levels if levels else 0.0
    cdef double th, x, lo
    cdef double complex zk, fn
    cdef int zeros = 0, flag = 0, idx
    cdef double[::1] c = np.empty(K)
    cdef double complex[::1] z = np.empty(K, dtype=complex)
    cdef double complex[::1] w = np.empty(K, dtype=complex)
    cdef char[::1] used = np.zeros(K, dtype=np.int8)
    with nogil:
        for r in range(rows.shape[0]):
            n = rows[r]
            for k in range(K):
                zk = 0.0
                for l in range(N):
                    zk = zk + g[k, n, l] * f[l]
                zk = zk - g[k, n, n] * f[n] - hem[k, n]
                z[k] = zk
                c[k] = t[k] - 2.0 * snr * creal_conj_mul(f[n], zk)
                w[k] = (2.0 * snr * amp) * zk
            th = choose_phase(c, w, t, extra_starts, used, &flag)
            zeros += flag
            if levels:
                th = th - 2.0 * M_PI * floor(th / (2.0 * M_PI))
                x = th / step
                lo = floor(x)
                idx = <int>lo + 1 if x - lo > 0.5 else <int>lo
                idx = idx % levels
                th = idx * step
            fn = amp * (cos(th) + 1j * sin(th))
            f[n] = fn
            for k in range(K):
                t[k] = c[k] + 2.0 * snr * creal_conj_mul(fn, z[k])
    return zeros


# ------------------------------------------------------------ small dense LA

cdef double complex lu_det(double complex* a, int n) nogil:
    """Determinant by Gaussian elimination with partial pivoting (destroys a)."""
    cdef int i, j, r, piv
    cdef double best, mag
    cdef double complex det = 1.0, tmp, factor
    for i in range(n):
        piv = i
        best = -1.0
        for r in range(i, n):
            mag = a[r * n + i].real * a[r * n + i].real + a[r * n + i].imag * a[r * n + i].imag
            if mag > best:
                best = mag
                piv = r
        if best == 0.0:
            return 0.0
        if piv != i:
            for j in range(n):
                tmp = a[i * n + j]
                a[i * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            det = -det
        det = det * a[i * n + i]
        for r in range(i + 1, n):
            factor = a[r * n + i] / a[i * n + i]
            for j in range(i, n):
                a[r * n + j] = a[r * n + j] - factor * a[i * n + j]
    return det


cdef int gj_inverse(double complex* a, double complex* out, int n) nogil:
    """Gauss-Jordan inverse with partial pivoting (destroys a). 0 on success."""
    cdef int i, j, r, piv
    cdef double best, mag
    cdef double complex tmp, factor, pv
    for i in range(n):
        for j in range(n):
            out[i * n + j] = 1.0 if i == j else 0.0
    for i in range(n):
        piv = i
        best = -1.0
        for r in range(i, n):
            mag = a[r * n + i].real * a[r * n + i].real + a[r * n + i].imag * a[r * n + i].imag
            if mag > best:
                best = mag
                piv = r
        if best == 0.0:
            return 1
        if piv != i:
            for j in range(n):
                tmp = a[i * n + j]; a[i * n + j] = a[piv * n + j]; a[piv * n + j] = tmp
                tmp = out[i * n + j]; out[i * n + j] = out[piv * n + j]; out[piv * n + j] = tmp
        pv = a[i * n + i]
        for j in range(n):
            a[i * n + j] = a[i * n + j] / pv
            out[i * n + j] = out[i * n + j] / pv
        for r in range(n):
            if r == i:
                continue
            factor = a[r * n + i]
            if factor.real == 0.0 and factor.imag == 0.0:
                continue
            for j in range(n):
                a[r * n + j] = a[r * n + j] - factor * a[i * n + j]
                out[r * n + j] = out[r * n + j] - factor * out[i * n + j]
    return 0


def ds_sweep(double complex[:, :, ::1] hhat, double complex[:, :, ::1] q_inv,
             long[::1] choice, int n_rf, int levels, double tie_tol):
    cdef Py_ssize_t K = hhat.shape[0], N = hhat.shape[1]
    cdef int n_cand = n_rf * levels
    cdef int R = n_rf, RR = n_rf * n_rf
    cdef double amp = 1.0 / sqrt(<double>N)
    cdef Py_ssize_t i, k, l, a, b, m, cidx, ch, p
    cdef int inc, best, err = 0
    cdef double top, thr, h_ii
    cdef double complex wv, acc
    cdef double complex[:, :, ::1] d = np.array(q_inv, copy=True)
    cdef double complex[:, ::1] rows_f = np.zeros((N, R), dtype=complex)
    cdef double complex[:, ::1] u = np.zeros((K, R), dtype=complex)
    cdef double complex[:, :, ::1] d_inv = np.zeros((K, R, R), dtype=complex)
    cdef double complex[::1] wtab = np.exp(1j * 2.0 * np.pi * np.arange(levels) / levels) * amp
    cdef double[::1] cand = np.zeros(n_cand + 1)
    cdef double[::1] scores = np.zeros(N)
    cdef double complex* work = <double complex*> malloc(RR * sizeof(double complex))
    cdef double complex* x = <double complex*> malloc(RR * sizeof(double complex))
    cdef double complex* e = <double complex*> malloc(RR * sizeof(double complex))
    try:
        with nogil:
            for i in range(N):
                # u[k, c] = sum_{l<i} conj(F[l, c]) Hhat[k, l, i]
                for k in range(K):
                    for a in range(R):
                        acc = 0.0
                        for l in range(i):
                            if rows_f[l, a].real != 0.0 or rows_f[l, a].imag != 0.0:
                                acc = acc + rows_f[l, a].conjugate() * hhat[k, l, i]
                        u[k, a] = acc
                    for a in range(R):
                        for b in range(R):
                            work[a * R + b] = d[k, a, b]
                    if gj_inverse(work, &d_inv[k, 0, 0], R):
                        err = 1
                if err:
                    break
                for cidx in range(n_cand + 1):
                    cand[cidx] = 0.0
                for cidx in range(n_cand):
                    ch = cidx // levels
                    p = cidx % levels
                    wv = wtab[p]
                    for k in range(K):
                        h_ii = hhat[k, i, i].real
                        # X = (h_ii/N) e_c e_c^T + w u e_c^T + conj(w) e_c u^H
                        for a in range(RR):
                            x[a] = 0.0
                        for a in range(R):
                            x[a * R + ch] = x[a * R + ch] + wv * u[k, a]
                            x[ch * R + a] = x[ch * R + a] + wv.conjugate() * u[k, a].conjugate()
                        x[ch * R + ch] = x[ch * R + ch] + h_ii / N
                        # E = I + D^{-1} X
                        for a in range(R):
                            for b in range(R):
                                acc = 1.0 if a == b else 0.0
                                for m in range(R):
                                    acc = acc + d_inv[k, a, m] * x[m * R + b]
                                e[a * R + b] = acc
                        cand[cidx] += log2(lu_det(e, R).real)
                    cand[cidx] /= K
                inc = <int>choice[i] if choice[i] >= 0 else n_cand
                best = 0
                top = cand[0]
                for cidx in range(1, n_cand + 1):
                    if cand[cidx] > top:
                        top = cand[cidx]
                        best = <int>cidx
                thr = top - tie_tol * (fabs(top) if fabs(top) > 1.0 else 1.0)
                if cand[inc] >= thr:
                    best = inc
                else:
                    for cidx in range(n_cand + 1):
                        if cand[cidx] >= thr:
                            best = <int>cidx
                            break
                scores[i] = cand[best]
                if best == n_cand:
                    choice[i] = -1
                    continue
                choice[i] = best
                ch = best // levels
                p = best % levels
                wv = wtab[p]
                rows_f[i, ch] = wv
                for k in range(K):
                    h_ii = hhat[k, i, i].real
                    for a in range(R):
                        d[k, a, ch] = d[k, a, ch] + wv * u[k, a]
                        d[k, ch, a] = d[k, ch, a] + wv.conjugate() * u[k, a].conjugate()
                    d[k, ch, ch] = d[k, ch, ch] + h_ii / N
    finally:
        free(work)
        free(x)
        free(e)
    if err:
        raise ArithmeticError("D_i[k] became singular during the row search")
    return np.asarray(scores)
