"""Fisher information and Cramer-Rao bounds in the shared-eigenvector case.

The forward Jacobian J has singular system (sigma_i, u_i, v_i) and the noise
covariance B has eigenpairs (lambda_j, phi_j).  When u_i = phi_i the Fisher
information operator is diagonal in v_i with eigenvalues

    mu_i = c * sigma_i^2 / lambda_i,   c = 2 (real parameter), 1 (complex),

and the Cramer-Rao bound for the first r parameters is sum_{i<=r} 1/mu_i.
When the bases differ, the overlap matrix G_ji = |<phi_j, u_i>|^2 still gives
the Fisher trace and the range-condition series used by the diagnostics.

All spectra carry multiplicities so degenerate eigenvalues are stored once.
"""

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .summation import CONVERGED, DIVERGING, UNDETERMINED, compensated_cumsum, diagnose, tail_ratio


class PairingError(ValueError):
    """Two spectra do not share index labels."""


class SingularNoiseError(ValueError):
    """A noise eigenvalue vanishes where the signal does not."""


class RankError(ValueError):
    """A zero singular value inside the requested truncation."""


class ScalarField(enum.Enum):
    REAL = "real"
    COMPLEX = "complex"

    @property
    def factor(self):
        return 2.0 if self is ScalarField.REAL else 1.0

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"field must be 'real' or 'complex', got {value!r}") from None


BY_LABEL = "by-label"
BY_VALUE_DESC = "by-value-desc"
_ORDERINGS = (BY_LABEL, BY_VALUE_DESC)


def _label_key(label):
    # (tau, l) labels order by l first, then tau
    return label[::-1]


def _as_labels(labels, n):
    if labels is None:
        return tuple((i,) for i in range(n))
    out = tuple(tuple(lab) if isinstance(lab, (tuple, list)) else (lab,) for lab in labels)
    if len(out) != n:
        raise ValueError("one label per entry is required")
    if len(set(out)) != n:
        raise ValueError("labels must be unique")
    return out


@dataclass(frozen=True)
class ModalSpectrum:
    """Nonnegative modal values with multiplicities.

    ``squared`` records whether ``values`` already hold squares (e.g.
    sigma^2 rather than sigma); consumers use :meth:`squares` and
    :meth:`roots` instead of guessing.  ``underflow`` marks entries whose
    value fell below double range and was stored as 0.
    """

    values: np.ndarray
    multiplicity: np.ndarray = None
    labels: tuple = None
    ordering: str = BY_LABEL
    squared: bool = False
    underflow: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        n = v.size
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectrum values must be finite and nonnegative")
        mult = np.ones(n, dtype=np.int64) if self.multiplicity is None else np.array(
            self.multiplicity, dtype=np.int64
        ).ravel()
        if mult.size != n or np.any(mult < 1):
            raise ValueError("multiplicities must be integers >= 1, one per entry")
        if self.ordering not in _ORDERINGS:
            raise ValueError(f"ordering must be one of {_ORDERINGS}")
        uf = np.zeros(n, dtype=bool) if self.underflow is None else np.array(
            self.underflow, dtype=bool
        ).ravel()
        labels = _as_labels(self.labels, n)
        if self.ordering == BY_VALUE_DESC:
            order = np.argsort(-v, kind="stable")
            v, mult, uf = v[order], mult[order], uf[order]
            labels = tuple(labels[i] for i in order)
        for arr in (v, mult, uf):
            arr.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "multiplicity", mult)
        object.__setattr__(self, "underflow", uf)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(zip(self.labels, self.values, self.multiplicity))

    @property
    def total_count(self):
        return int(self.multiplicity.sum())

    def squares(self):
        return self.values if self.squared else self.values ** 2

    def roots(self):
        return np.sqrt(self.values) if self.squared else self.values

    def replace(self, **changes):
        kw = dict(
            values=self.values,
            multiplicity=self.multiplicity,
            labels=self.labels,
            ordering=self.ordering,
            squared=self.squared,
            underflow=self.underflow,
        )
        kw.update(changes)
        return ModalSpectrum(**kw)

    def reordered(self, ordering):
        """Same entries under another ordering (by-label restores label order)."""
        if ordering == BY_LABEL:
            order = sorted(range(len(self)), key=lambda i: _label_key(self.labels[i]))
            return ModalSpectrum(
                self.values[order],
                self.multiplicity[order],
                [self.labels[i] for i in order],
                BY_LABEL,
                self.squared,
                self.underflow[order],
            )
        return self.replace(ordering=ordering)

    def expanded(self):
        """Values repeated by multiplicity."""
        return np.repeat(self.values, self.multiplicity)


def _pair(sigma, lam):
    if sigma.labels != lam.labels:
        if set(sigma.labels) != set(lam.labels):
            raise PairingError("spectra do not share index labels")
        pos = {lab: i for i, lab in enumerate(lam.labels)}
        idx = [pos[lab] for lab in sigma.labels]
        lam = ModalSpectrum(
            lam.values[idx],
            lam.multiplicity[idx],
            sigma.labels,
            BY_LABEL,
            lam.squared,
            lam.underflow[idx],
        )
    if np.any(sigma.multiplicity != lam.multiplicity):
        raise PairingError("paired modes carry different multiplicities")
    return sigma, lam


@dataclass(frozen=True)
class OverlapMatrix:
    """G[j, i] = |<phi_j, u_i>|^2: rows are noise eigenvectors, columns Jacobian vectors."""

    G: np.ndarray

    def __post_init__(self):
        g = np.array(self.G, dtype=float)
        if g.ndim != 2:
            raise ValueError("overlap matrix must be 2-D")
        tol = 1e-12
        if np.any(g < -tol) or np.any(g > 1 + tol):
            raise ValueError("overlap entries must lie in [0, 1]")
        if np.any(g.sum(axis=0) > 1 + 1e-9):
            raise ValueError("overlap column sums exceed 1 (Bessel inequality)")
        g.setflags(write=False)
        object.__setattr__(self, "G", g)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def from_bases(cls, phi, u):
        """Overlaps from orthonormal columns ``phi`` (noise) and ``u`` (Jacobian)."""
        return cls(np.abs(np.conj(np.asarray(phi)).T @ np.asarray(u)) ** 2)


@dataclass(frozen=True)
class FisherSpectrum:
    """Fisher eigenvalues mu_i > 0 with multiplicities and field tag."""

    values: np.ndarray
    multiplicity: np.ndarray
    labels: tuple
    field: ScalarField
    ordering: str = BY_LABEL

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size and (np.any(~(v > 0)) or np.any(~np.isfinite(v))):
            raise ValueError("Fisher eigenvalues must be finite and strictly positive")
        mult = np.array(self.multiplicity, dtype=np.int64).ravel()
        labels = _as_labels(self.labels, v.size)
        if self.ordering not in _ORDERINGS:
            raise ValueError(f"ordering must be one of {_ORDERINGS}")
        if self.ordering == BY_VALUE_DESC:
            order = np.argsort(-v, kind="stable")
            v, mult = v[order], mult[order]
            labels = tuple(labels[i] for i in order)
        v.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "multiplicity", mult)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "field", ScalarField.parse(self.field))

    def __len__(self):
        return self.values.size

    @property
    def total_count(self):
        return int(self.multiplicity.sum())

    def reordered(self, ordering):
        if ordering == BY_LABEL:
            order = sorted(range(len(self)), key=lambda i: _label_key(self.labels[i]))
            return FisherSpectrum(
                self.values[order], self.multiplicity[order],
                [self.labels[i] for i in order], self.field, BY_LABEL,
            )
        return FisherSpectrum(self.values, self.multiplicity, self.labels, self.field, ordering)


@dataclass(frozen=True)
class CrbCurve:
    """Cramer-Rao bound against truncation.

    ``truncation`` counts multiplicity-expanded parameters (or multipole
    order L for the curves built by ``emsource.crb_L``).  ``monotone`` means
    non-decreasing: an increment below one ulp of the running total cannot
    show up as a strict increase in floating point.
    """

    truncation: np.ndarray
    values: np.ndarray
    diagnosis: str
    monotone: bool = field(init=False)

    def __post_init__(self):
        t = np.array(self.truncation).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if t.size != v.size:
            raise ValueError("truncation and values differ in length")
        object.__setattr__(self, "truncation", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "monotone", bool(np.all(np.diff(v) >= 0)))

    def __len__(self):
        return self.values.size

    def at(self, r):
        hits = np.nonzero(self.truncation == r)[0]
        if hits.size == 0:
            raise KeyError(r)
        return float(self.values[hits[0]])


# ---------------------------------------------------------------------------


def fisher_eigenvalues(sigma, lam, field=ScalarField.COMPLEX):
    """mu_i = c sigma_i^2 / lambda_i; modes with sigma_i = 0 are the null space and are dropped."""
    field = ScalarField.parse(field)
    sigma, lam = _pair(sigma, lam)
    s2 = sigma.squares()
    lv = lam.values
    keep = s2 > 0
    bad = keep & ~(lv > 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise SingularNoiseError(f"lambda = 0 with sigma > 0 at mode {sigma.labels[i]}")
    with np.errstate(over="raise"):
        mu = field.factor * s2[keep] / lv[keep]
    labels = [lab for lab, k in zip(sigma.labels, keep) if k]
    return FisherSpectrum(mu, sigma.multiplicity[keep], labels, field, sigma.ordering)


def _expanded_partial_sums(inc, mult, r_max):
    """Partial sums over the multiplicity-expanded sequence, r = 1..r_max."""
    block = compensated_cumsum(inc * mult)
    start = np.concatenate(([0.0], block[:-1]))
    ends = np.cumsum(mult)
    r = np.arange(1, r_max + 1)
    which = np.searchsorted(ends, r, side="left")
    prior = np.concatenate(([0], ends[:-1]))[which]
    out = start[which] + (r - prior) * inc[which]
    # increments are nonnegative; undo one-ulp dips from re-rounding
    return np.maximum.accumulate(out)


def crb_curve(mu, r_max=None):
    """CRB(r) = sum over the first r (expanded) parameters of 1/mu_i."""
    if len(mu) == 0:
        raise ValueError("empty Fisher spectrum")
    total = mu.total_count
    if r_max is None:
        r_max = total
    r_max = int(r_max)
    if not 1 <= r_max <= total:
        raise ValueError(f"r_max must lie in [1, {total}]")
    inc = 1.0 / mu.values
    vals = _expanded_partial_sums(inc, mu.multiplicity, r_max)
    return CrbCurve(np.arange(1, r_max + 1), vals, diagnose(inc * mu.multiplicity))


@dataclass(frozen=True)
class SeriesReport:
    """Partial sums of a nonnegative series with a tail diagnosis."""

    increments: np.ndarray
    partial_sums: np.ndarray
    diagnosis: str
    tail_ratio: float

    @property
    def total(self):
        return float(self.partial_sums[-1]) if self.partial_sums.size else 0.0

    @property
    def divergent(self):
        return self.diagnosis == DIVERGING


def _overlap_series(sigma, lam, overlap, power):
    s2 = sigma.squares()
    lv = lam.values
    if overlap is None:
        sigma, lam = _pair(sigma, lam)
        lv = lam.values
        G = None
    else:
        G = overlap.G
        if G.shape != (len(lam), len(sigma)):
            raise PairingError(
                f"overlap shape {G.shape} does not match ({len(lam)}, {len(sigma)})"
            )
    keep = s2 > 0
    if G is None:
        bad = keep & ~(lv > 0)
        if bad.any():
            raise SingularNoiseError("lambda = 0 with sigma > 0")
        w = np.zeros_like(s2)
        w[keep] = 1.0 / lv[keep] ** power
    else:
        zero = ~(lv > 0)
        if np.any(G[zero][:, keep] > 0):
            raise SingularNoiseError("lambda_j = 0 overlaps a mode with sigma > 0")
        inv = np.zeros_like(lv)
        inv[~zero] = 1.0 / lv[~zero] ** power
        w = inv @ G
    inc = sigma.multiplicity * s2 * w
    inc = inc[keep]
    ratio = tail_ratio(inc)
    return SeriesReport(
        inc, compensated_cumsum(inc), diagnose(inc), math.nan if ratio is None else ratio
    )


def fisher_trace(sigma, lam, overlap=None):
    """Truncated Fisher trace sum_i mult_i sigma_i^2 sum_j G_ji / lambda_j.

    ``overlap=None`` means shared eigenvectors (identity overlap, paired by
    label).  The returned report's ``divergent`` flag stands in for +inf.
    """
    return _overlap_series(sigma, lam, overlap, 1)


SATISFIED = "satisfied-at-truncation"
GROWING = "growing"


@dataclass(frozen=True)
class RangeReport:
    series: SeriesReport
    classification: str


def range_condition_diagnostic(sigma, lam, overlap=None, truncation=None):
    """Partial sums of sum_i sigma_i^2 sum_j G_ji / lambda_j^2 and their classification."""
    if truncation is not None:
        truncation = int(truncation)
        if not 1 <= truncation <= len(sigma):
            raise ValueError("truncation outside the provided data")
        sigma = ModalSpectrum(
            sigma.values[:truncation],
            sigma.multiplicity[:truncation],
            sigma.labels[:truncation],
            BY_LABEL,
            sigma.squared,
            sigma.underflow[:truncation],
        )
        if overlap is not None:
            overlap = OverlapMatrix(overlap.G[:, :truncation])
        else:
            lam = ModalSpectrum(
                lam.values[:truncation],
                lam.multiplicity[:truncation],
                lam.labels[:truncation],
                BY_LABEL,
                lam.squared,
                lam.underflow[:truncation],
            )
    rep = _overlap_series(sigma, lam, overlap, 2)
    cls = {CONVERGED: SATISFIED, DIVERGING: GROWING}.get(rep.diagnosis, UNDETERMINED)
    return RangeReport(rep, cls)


def constructed_noise_spectrum(sigma, sigma_w2, q):
    """lambda_i = sigma_w2 for the first q modes and sqrt(sigma_i) beyond.

    With this choice the Fisher information is trace class while the
    Cameron-Martin singular values follow sigma_i^(3/2) in the tail.
    """
    q = int(q)
    if q < 1:
        raise ValueError("q must be >= 1")
    if not sigma_w2 > 0:
        raise ValueError("sigma_w2 must be positive")
    s = sigma.roots()
    if np.any(np.diff(s) > 0):
        raise ValueError("sigma must be sorted in descending order")
    lam = np.where(np.arange(s.size) < q, float(sigma_w2), np.sqrt(s))
    if s.size > q and diagnose(np.sqrt(s[q:]) * sigma.multiplicity[q:]) == DIVERGING:
        warnings.warn("sum of sqrt(sigma_i) does not appear to converge", RuntimeWarning, stacklevel=2)
    return ModalSpectrum(lam, sigma.multiplicity, sigma.labels, sigma.ordering)


def cameron_martin_spectrum(sigma, lam):
    """Singular values sigma_i / sqrt(lambda_i) of the whitened Jacobian."""
    sigma, lam = _pair(sigma, lam)
    s = sigma.roots()
    lv = lam.values
    if np.any((s > 0) & ~(lv > 0)):
        raise SingularNoiseError("lambda = 0 with sigma > 0")
    out = np.zeros_like(s)
    pos = lv > 0
    out[pos] = s[pos] / np.sqrt(lv[pos])
    return ModalSpectrum(out, sigma.multiplicity, sigma.labels, sigma.ordering)


TRACE_CLASS_FIM = "trace-class-FIM"
TRACE_CLASS_CRB = "trace-class-CRB"
BOTH_FINITE_ONLY = "both-finite-truncations-only"


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    fisher: str
    crb: str


def regime_report(sigma, lam):
    sigma, lam = _pair(sigma, lam)
    s2 = sigma.squares()
    keep = s2 > 0
    if np.any(keep & ~(lam.values > 0)):
        raise SingularNoiseError("lambda = 0 with sigma > 0")
    mult = sigma.multiplicity[keep]
    n = int(keep.sum())
    if n < 8:
        return RegimeReport(UNDETERMINED, UNDETERMINED, UNDETERMINED)
    # logs keep both directions exact when the ratio spans hundreds of dB
    lr = np.log(s2[keep]) - np.log(lam.values[keep])
    lm = np.log(mult)
    fim = diagnose(log_terms=lm + lr)
    crb = diagnose(log_terms=lm - lr)
    if fim == CONVERGED and crb == DIVERGING:
        regime = TRACE_CLASS_FIM
    elif crb == CONVERGED and fim == DIVERGING:
        regime = TRACE_CLASS_CRB
    elif fim == DIVERGING and crb == DIVERGING:
        regime = BOTH_FINITE_ONLY
    else:
        regime = UNDETERMINED
    return RegimeReport(regime, fim, crb)


def regime_classify(sigma, lam):
    """Which of the Fisher trace and the CRB series converges on the given modes."""
    return regime_report(sigma, lam).regime


def pseudo_inverse_estimate(meas_coeffs, sigma, lam, field, r):
    """Truncated pseudo-inverse in coefficient space: theta_i = xi_i / sigma_i, i <= r.

    ``meas_coeffs`` hold one complex projection per multiplicity-expanded
    mode.  For a real parameter the estimate keeps only the real part, which
    halves the noise variance and attains 1/mu_i with mu_i = 2 sigma^2/lambda.
    """
    field = ScalarField.parse(field)
    r = int(r)
    xi = np.asarray(meas_coeffs, dtype=complex).ravel()
    if r == 0:
        return np.zeros(0, dtype=float if field is ScalarField.REAL else complex)
    sigma, lam = _pair(sigma, lam)
    s = np.repeat(sigma.roots(), sigma.multiplicity)
    if r < 0 or r > s.size or r > xi.size:
        raise ValueError("truncation exceeds the available modes")
    if np.any(s[:r] == 0):
        raise RankError("zero singular value inside the truncation")
    if np.any(~(np.repeat(lam.values, lam.multiplicity)[:r] > 0)):
        raise SingularNoiseError("lambda = 0 inside the truncation")
    est = xi[:r] / s[:r]
    return est.real.copy() if field is ScalarField.REAL else est


# ---------------------------------------------------------------------------
# CSV

SPECTRUM_HEADER = ["index", "tau", "l", "value", "multiplicity"]


def write_spectrum_csv(spectrum, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTRUM_HEADER)
        for i, (lab, val, mult) in enumerate(spectrum):
            if len(lab) == 2:
                row = [i, lab[0], lab[1]]
            else:
                row = [lab[0], "", ""]
            w.writerow(row + [repr(float(val)), int(mult)])


class CsvFormatError(ValueError):
    """Malformed spectrum file; the message names the offending row."""


def read_spectrum_csv(path, squared=False):
    """Read a spectrum written by :func:`write_spectrum_csv`.

    Lines starting with ``#`` are metadata.  Row numbers in errors count
    physical lines of the file, starting at 1.
    """
    labels, values, mults = [], [], []
    with open(path, newline="") as fh:
        lines = list(enumerate(fh, start=1))
    data = [(n, ln) for n, ln in lines if not ln.startswith("#") and ln.strip()]
    if not data:
        raise CsvFormatError(f"{path}: empty file")
    header_row, header = data[0]
    if next(csv.reader([header])) != SPECTRUM_HEADER:
        raise CsvFormatError(
            f"{path}: row {header_row}: expected header {','.join(SPECTRUM_HEADER)}"
        )
    for n, ln in data[1:]:
        row = next(csv.reader([ln]))
        try:
            if len(row) != len(SPECTRUM_HEADER):
                raise ValueError(f"expected {len(SPECTRUM_HEADER)} fields, got {len(row)}")
            index, tau, l, value, mult = row
            if tau and l:
                labels.append((int(tau), int(l)))
            else:
                labels.append((int(index),))
            v = float(value)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"value must be finite and >= 0, got {value!r}")
            m = int(mult)
            if m < 1:
                raise ValueError(f"multiplicity must be >= 1, got {mult!r}")
        except ValueError as exc:
            raise CsvFormatError(f"{path}: row {n}: {exc}") from None
        values.append(v)
        mults.append(m)
    try:
        return ModalSpectrum(values, mults, labels, BY_LABEL, squared)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None
