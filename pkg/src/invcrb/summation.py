"""Compensated running sums and tail diagnostics for series known only to a truncation."""

import math

import numpy as np

CONVERGED = "converged"
DIVERGING = "diverging"
UNDETERMINED = "undetermined"

# a fitted term ratio below this means geometric (or faster) decay
RATIO_THRESHOLD = 0.999
MIN_TERMS = 8


def compensated_cumsum(terms):
    """Running partial sums with Neumaier compensation.

    ``np.cumsum`` loses everything below the running total's ulp; the spectra
    here span hundreds of dB, so every partial sum carries its own correction.
    """
    terms = np.asarray(terms, dtype=float).ravel()
    out = np.empty_like(terms)
    s = 0.0
    c = 0.0
    for i, t in enumerate(terms):
        u = s + t
        if abs(s) >= abs(t):
            c += (s - u) + t
        else:
            c += (t - u) + s
        s = u
        out[i] = s + c
    return out


def compensated_sum(terms):
    return math.fsum(np.asarray(terms, dtype=float).ravel())


def tail_ratio(terms=None, log_terms=None):
    """Least-squares geometric ratio of the last quartile of a positive series.

    Fits log(term) against its index, so interleaved subsequences (e.g. two
    polarizations per multipole order) do not confuse the estimate the way a
    consecutive-term ratio would.  Algebraic decay such as 1/n fits a ratio
    below 1 over any finite window and so reads as converged; only geometric
    behaviour is resolved.  Returns ``None`` when fewer than
    ``MIN_TERMS`` terms are available.  Exact zeros count as decay to -inf.
    """
    if log_terms is None:
        t = np.asarray(terms, dtype=float).ravel()
        with np.errstate(divide="ignore"):
            log_terms = np.log(np.abs(t))
    log_terms = np.asarray(log_terms, dtype=float).ravel()
    n = log_terms.size
    if n < MIN_TERMS:
        return None
    start = n - max(n // 4, 4)
    tail = log_terms[start:]
    idx = np.arange(start, n, dtype=float)
    finite = np.isfinite(tail)
    if not finite.any():
        return 0.0
    if finite.sum() < 2:
        return 0.0 if np.all(tail[~finite] < 0) else math.inf
    if not finite.all() and np.any(tail[~finite] > 0):
        return math.inf
    slope = np.polyfit(idx[finite], tail[finite], 1)[0]
    if not finite.all():
        # underflowed terms only make decay steeper
        slope = min(slope, math.log(RATIO_THRESHOLD) * 2)
    return math.exp(slope) if slope < 700 else math.inf


def diagnose(terms=None, log_terms=None):
    """Classify a nonnegative series as converged, diverging or undetermined."""
    r = tail_ratio(terms, log_terms)
    if r is None:
        return UNDETERMINED
    return CONVERGED if r < RATIO_THRESHOLD else DIVERGING
