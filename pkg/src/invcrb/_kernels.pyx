# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, frexp, ldexp, M_PI

cnp.import_array()

cdef int _RESCALE_EXP = 500
cdef double _BIG = ldexp(1.0, 500)
cdef double _SMALL = ldexp(1.0, -500)


def miller_start(int lmax, double x):
    cdef double top = lmax if lmax > x else x
    return <int>(top + 25.0 + 6.0 * sqrt(top + 1.0))


def jn_scaled(int lmax, double x):
    cdef int top = lmax if lmax > 1 else 1
    cdef int nstart = miller_start(top, x)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f = np.zeros(top + 1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt = np.zeros(top + 1, dtype=np.int64)
    cdef double f_next = 0.0, f_cur = 1.0, f_prev
    cdef long c = 0
    cdef int l
    for l in range(nstart, 0, -1):
        f_prev = (2 * l + 1) / x * f_cur - f_next
        if fabs(f_prev) > _BIG:
            f_prev *= _SMALL
            f_cur *= _SMALL
            c += 1
        f_next = f_cur
        f_cur = f_prev
        if l - 1 <= top:
            f[l - 1] = f_cur
            cnt[l - 1] = c
    cdef double j0 = sin(x) / x
    cdef double j1 = sin(x) / (x * x) - cos(x) / x
    cdef int ref
    cdef double jref
    if fabs(j0) >= fabs(j1):
        ref = 0
        jref = j0
    else:
        ref = 1
        jref = j1
    cdef int k_ref, k_l, ee
    cdef double m_ref = frexp(f[ref], &k_ref)
    cdef double m_l, mm
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mant = np.zeros(lmax + 1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] exp2 = np.zeros(lmax + 1, dtype=np.int64)
    for l in range(lmax + 1):
        if f[l] == 0.0:
            continue
        m_l = frexp(f[l], &k_l)
        mm = frexp(m_l / m_ref * jref, &ee)
        mant[l] = mm
        exp2[l] = ee + k_l - k_ref + _RESCALE_EXP * (cnt[l] - cnt[ref])
    return mant, exp2


def hn_scaled(int lmax, double x):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] vals = np.zeros(lmax + 2, dtype=complex)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnts = np.zeros(lmax + 2, dtype=np.int64)
    cdef double complex e = cos(x) + 1j * sin(x)
    cdef double complex h_prev = -1j * e / x
    cdef double complex h_cur = -(1.0 + 1j / x) * e / x
    cdef double complex h_next
    cdef long c = 0
    cdef int l, k
    vals[0] = h_prev
    vals[1] = h_cur
    for l in range(1, lmax):
        h_next = (2 * l + 1) / x * h_cur - h_prev
        if abs(h_next) > _BIG:
            h_next *= _SMALL
            h_cur *= _SMALL
            c += 1
        h_prev = h_cur
        h_cur = h_next
        vals[l + 1] = h_cur
        cnts[l + 1] = c
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] mant = np.zeros(lmax + 1, dtype=complex)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] exp2 = np.zeros(lmax + 1, dtype=np.int64)
    for l in range(lmax + 1):
        frexp(abs(vals[l]), &k)
        mant[l] = vals[l] * ldexp(1.0, -k)
        exp2[l] = k + _RESCALE_EXP * cnts[l]
    return mant, exp2


cdef void _legendre_column(int top, double x, double u, double[:, ::1] P,
                           double[:, ::1] Q) noexcept nogil:
    # fills P[l, m], Q[l, m] for 0 <= m <= l <= top
    cdef double cm = 1.0 / sqrt(4.0 * M_PI)
    cdef double um1 = 1.0  # u**(m-1)
    cdef double s, a, b
    cdef int l, m
    for m in range(top + 1):
        if m > 0:
            cm = cm * (-sqrt((2 * m + 1) / (2.0 * m)))
            if m > 1:
                um1 = um1 * u
            Q[m, m] = cm * um1
            P[m, m] = Q[m, m] * u
        else:
            P[0, 0] = cm
            Q[0, 0] = 0.0
        if m + 1 <= top:
            s = sqrt(2 * m + 3.0)
            P[m + 1, m] = s * x * P[m, m]
            Q[m + 1, m] = s * x * Q[m, m]
        for l in range(m + 2, top + 1):
            a = sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
            Q[l, m] = a * (x * Q[l - 1, m] - b * Q[l - 2, m])
    for l in range(top + 1):
        Q[l, 0] = 0.0


cdef void _dtheta(int lmax, double x, double[:, ::1] P, double[:, ::1] Q,
                  double[:, ::1] dP) noexcept nogil:
    cdef int l, m
    cdef double c
    for l in range(lmax + 1):
        if l >= 1:
            dP[l, 0] = sqrt(l * (l + 1.0)) * P[l, 1]
        else:
            dP[0, 0] = 0.0
        for m in range(1, l + 1):
            c = sqrt((2 * l + 1.0) * (l + 1.0 + m) * (l + 1.0 - m) / (2 * l + 3.0))
            dP[l, m] = -(l + 1.0) * x * Q[l, m] + c * Q[l + 1, m]


def legendre_table(int lmax, cos_theta, sin_theta):
    cdef double[::1] xs = np.ascontiguousarray(np.asarray(cos_theta, dtype=float).ravel())
    cdef double[::1] us = np.ascontiguousarray(np.asarray(sin_theta, dtype=float).ravel())
    cdef Py_ssize_t n = xs.shape[0], i
    cdef int top = lmax + 1, l, m
    P_out = np.zeros((n, lmax + 1, lmax + 1))
    Q_out = np.zeros((n, lmax + 1, lmax + 1))
    dP_out = np.zeros((n, lmax + 1, lmax + 1))
    cdef double[:, :, ::1] Pv = P_out
    cdef double[:, :, ::1] Qv = Q_out
    cdef double[:, :, ::1] dPv = dP_out
    cdef double[:, ::1] P = np.zeros((top + 1, top + 1))
    cdef double[:, ::1] Q = np.zeros((top + 1, top + 1))
    cdef double[:, ::1] dP = np.zeros((lmax + 1, lmax + 1))
    cdef double x
    with nogil:
        for i in range(n):
            x = xs[i]
            _legendre_column(top, x, us[i], P, Q)
            _dtheta(lmax, x, P, Q, dP)
            for l in range(lmax + 1):
                for m in range(l + 1):
                    Pv[i, l, m] = P[l, m]
                    Qv[i, l, m] = Q[l, m]
                    dPv[i, l, m] = dP[l, m]
    return P_out, Q_out, dP_out


def project_plane_waves(int lmax, theta, phi, beta_theta, beta_phi):
    cdef double[:, ::1] th = np.ascontiguousarray(np.atleast_2d(np.asarray(theta, dtype=float)))
    cdef double[:, ::1] ph = np.ascontiguousarray(np.atleast_2d(np.asarray(phi, dtype=float)))
    cdef double complex[:, ::1] bt = np.ascontiguousarray(
        np.atleast_2d(np.asarray(beta_theta, dtype=complex)))
    cdef double complex[:, ::1] bp = np.ascontiguousarray(
        np.atleast_2d(np.asarray(beta_phi, dtype=complex)))
    cdef Py_ssize_t nreal = th.shape[0], K = th.shape[1], r, k
    out = np.zeros((nreal, 2, lmax + 1, 2 * lmax + 1), dtype=complex)
    cdef double complex[:, :, :, ::1] o = out
    cdef int top = lmax + 1, l, m
    cdef double[:, ::1] P = np.zeros((top + 1, top + 1))
    cdef double[:, ::1] Q = np.zeros((top + 1, top + 1))
    cdef double[:, ::1] dP = np.zeros((lmax + 1, lmax + 1))
    cdef double[::1] norm = np.zeros(lmax + 1)
    cdef double complex[::1] em = np.zeros(lmax + 1, dtype=complex)
    for l in range(1, lmax + 1):
        norm[l] = 1.0 / sqrt(l * (l + 1.0))
    cdef double x, mq, d, sgn
    cdef double complex e1, b_t, b_p, a1c, a2c, a1, a2
    with nogil:
        for r in range(nreal):
            for k in range(K):
                x = cos(th[r, k])
                _legendre_column(top, x, sin(th[r, k]), P, Q)
                _dtheta(lmax, x, P, Q, dP)
                e1 = cos(ph[r, k]) - 1j * sin(ph[r, k])
                em[0] = 1.0
                for m in range(1, lmax + 1):
                    em[m] = em[m - 1] * e1
                b_t = bt[r, k]
                b_p = bp[r, k]
                for m in range(lmax + 1):
                    sgn = -1.0 if m % 2 else 1.0
                    for l in range(m if m > 1 else 1, lmax + 1):
                        mq = m * Q[l, m]
                        d = dP[l, m]
                        a1c = (-1j * mq * b_t - d * b_p) * em[m]
                        a2c = (d * b_t - 1j * mq * b_p) * em[m]
                        o[r, 0, l, lmax + m] += norm[l] * a1c
                        o[r, 1, l, lmax + m] += norm[l] * a2c
                        if m > 0:
                            a1 = (1j * mq * b_t - d * b_p) * em[m].conjugate()
                            a2 = (d * b_t + 1j * mq * b_p) * em[m].conjugate()
                            o[r, 0, l, lmax - m] += sgn * norm[l] * a1
                            o[r, 1, l, lmax - m] += sgn * norm[l] * a2
    return out
