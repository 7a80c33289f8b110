"""Pure-Python/numpy implementations of the numerical kernels.

This module mirrors ``_kernels.pyx`` function for function.  It is used when
the compiled extension is unavailable or when ``INVCRB_PURE_PYTHON`` is set.

Scaled representations: a value ``v`` is returned as ``(mant, exp2)`` with
``v = mant * 2**exp2`` and ``0.5 <= |mant| < 1`` (or ``mant == 0``).  This
keeps spherical Bessel values usable far below the double-precision range.
"""

import math

import numpy as np

_RESCALE_EXP = 500
_BIG = 2.0 ** _RESCALE_EXP
_SMALL = 2.0 ** -_RESCALE_EXP


def miller_start(lmax, x):
    """Starting order for the downward recurrence of j_l(x)."""
    top = max(float(lmax), x)
    return int(top + 25.0 + 6.0 * math.sqrt(top + 1.0))


def jn_scaled(lmax, x):
    """j_0..j_lmax at x > 0 by Miller downward recurrence.

    Normalized against the larger of the closed forms j_0 and j_1, so the
    normalization never sits on a zero.
    """
    top = max(lmax, 1)
    nstart = miller_start(top, x)
    f = [0.0] * (top + 1)
    cnt = [0] * (top + 1)
    f_next = 0.0
    f_cur = 1.0
    c = 0
    for l in range(nstart, 0, -1):
        f_prev = (2 * l + 1) / x * f_cur - f_next
        if abs(f_prev) > _BIG:
            f_prev *= _SMALL
            f_cur *= _SMALL
            c += 1
        f_next = f_cur
        f_cur = f_prev
        if l - 1 <= top:
            f[l - 1] = f_cur
            cnt[l - 1] = c
    j0 = math.sin(x) / x
    j1 = math.sin(x) / (x * x) - math.cos(x) / x
    if abs(j0) >= abs(j1):
        ref, jref = 0, j0
    else:
        ref, jref = 1, j1
    m_ref, k_ref = math.frexp(f[ref])
    mant = np.zeros(lmax + 1)
    exp2 = np.zeros(lmax + 1, dtype=np.int64)
    for l in range(lmax + 1):
        if f[l] == 0.0:
            continue
        m_l, k_l = math.frexp(f[l])
        mm, ee = math.frexp(m_l / m_ref * jref)
        mant[l] = mm
        exp2[l] = ee + k_l - k_ref + _RESCALE_EXP * (cnt[l] - cnt[ref])
    return mant, exp2


def hn_scaled(lmax, x):
    """h^(1)_0..h^(1)_lmax at x > 0 by upward recurrence (stable for h)."""
    mant = np.zeros(lmax + 1, dtype=complex)
    exp2 = np.zeros(lmax + 1, dtype=np.int64)
    e = complex(math.cos(x), math.sin(x))
    h_prev = -1j * e / x
    h_cur = -(1.0 + 1j / x) * e / x
    vals = [h_prev, h_cur]
    cnts = [0, 0]
    c = 0
    for l in range(1, lmax):
        h_next = (2 * l + 1) / x * h_cur - h_prev
        if abs(h_next) > _BIG:
            h_next *= _SMALL
            h_cur *= _SMALL
            c += 1
        h_prev, h_cur = h_cur, h_next
        vals.append(h_cur)
        cnts.append(c)
    for l in range(lmax + 1):
        v = vals[l]
        _, k = math.frexp(abs(v))
        mant[l] = v * 2.0 ** (-k)
        exp2[l] = k + _RESCALE_EXP * cnts[l]
    return mant, exp2


def legendre_table(lmax, cos_theta, sin_theta):
    """Normalized associated Legendre data at polar angles theta.

    Takes cos(theta) and sin(theta) (sin >= 0) separately so callers keep full
    precision near the poles.

    Returns ``(P, Q, dP)`` of shape ``(n, lmax + 1, lmax + 1)`` indexed
    ``[point, l, m]`` for ``0 <= m <= l``:

    * ``P`` -- sqrt((2l+1)/4pi (l-m)!/(l+m)!) P_l^m(cos theta), Condon-Shortley
      phase included;
    * ``Q`` -- ``P / sin(theta)`` for m >= 1 (regular at the poles), 0 for m = 0;
    * ``dP`` -- d P / d theta.
    """
    x = np.asarray(cos_theta, dtype=float).ravel()
    u = np.asarray(sin_theta, dtype=float).ravel()
    n = x.size
    top = lmax + 1
    P = np.zeros((n, top + 1, top + 1))
    Q = np.zeros((n, top + 1, top + 1))
    cm = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(top + 1):
        if m > 0:
            cm *= -math.sqrt((2 * m + 1) / (2.0 * m))
            Q[:, m, m] = cm * u ** (m - 1)
            P[:, m, m] = Q[:, m, m] * u
        else:
            P[:, 0, 0] = cm
        if m + 1 <= top:
            s = math.sqrt(2 * m + 3.0)
            P[:, m + 1, m] = s * x * P[:, m, m]
            Q[:, m + 1, m] = s * x * Q[:, m, m]
        for l in range(m + 2, top + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[:, l, m] = a * (x * P[:, l - 1, m] - b * P[:, l - 2, m])
            Q[:, l, m] = a * (x * Q[:, l - 1, m] - b * Q[:, l - 2, m])
    Q[:, :, 0] = 0.0
    dP = np.zeros((n, lmax + 1, lmax + 1))
    for l in range(lmax + 1):
        if l >= 1:
            dP[:, l, 0] = math.sqrt(l * (l + 1.0)) * P[:, l, 1]
        for m in range(1, l + 1):
            c = math.sqrt((2 * l + 1.0) * (l + 1.0 + m) * (l + 1.0 - m) / (2 * l + 3.0))
            dP[:, l, m] = -(l + 1.0) * x * Q[:, l, m] + c * Q[:, l + 1, m]
    return (
        np.ascontiguousarray(P[:, : lmax + 1, : lmax + 1]),
        np.ascontiguousarray(Q[:, : lmax + 1, : lmax + 1]),
        dP,
    )


def project_plane_waves(lmax, theta, phi, beta_theta, beta_phi):
    """Project plane-wave amplitudes onto conjugated vector harmonics.

    All inputs have shape ``(nreal, K)``: ``K`` directions per realization,
    each carrying complex amplitude components along the local theta/phi unit
    vectors.  Returns ``out[r, tau - 1, l, m + lmax] = sum_k conj(A_tau,l,m(k_hat)) . beta_k``
    for tau in {1, 2}, 1 <= l <= lmax, |m| <= l.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    bt = np.atleast_2d(np.asarray(beta_theta, dtype=complex))
    bp = np.atleast_2d(np.asarray(beta_phi, dtype=complex))
    nreal, K = theta.shape
    out = np.zeros((nreal, 2, lmax + 1, 2 * lmax + 1), dtype=complex)
    if K == 0:
        return out
    _, Q, dP = legendre_table(lmax, np.cos(theta).ravel(), np.sin(theta).ravel())
    Q = Q.reshape(nreal, K, lmax + 1, lmax + 1)
    dP = dP.reshape(nreal, K, lmax + 1, lmax + 1)
    for m in range(lmax + 1):
        em = np.exp(-1j * m * phi)
        sgn = -1.0 if m % 2 else 1.0
        for l in range(max(m, 1), lmax + 1):
            norm = 1.0 / math.sqrt(l * (l + 1.0))
            mq = m * Q[:, :, l, m]
            d = dP[:, :, l, m]
            a1c = (-1j * mq * bt - d * bp) * em
            a2c = (d * bt - 1j * mq * bp) * em
            out[:, 0, l, lmax + m] = norm * a1c.sum(axis=1)
            out[:, 1, l, lmax + m] = norm * a2c.sum(axis=1)
            if m > 0:
                emc = np.conj(em)
                a1 = (1j * mq * bt - d * bp) * emc
                a2 = (d * bt + 1j * mq * bp) * emc
                out[:, 0, l, lmax - m] = sgn * norm * a1.sum(axis=1)
                out[:, 1, l, lmax - m] = sgn * norm * a2.sum(axis=1)
    return out
