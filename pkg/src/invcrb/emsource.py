"""Electromagnetic inverse source problem in a sphere.

A current density supported in the ball r < r0 radiates a field observed
tangentially on the sphere r = r1 > r0, in the presence of spherically
isotropic noise (plane waves from all directions with uncorrelated amplitudes)
plus optional white noise.  Both the forward operator and the noise covariance
are diagonal in vector spherical waves, so everything reduces to the
m-independent modal scalars

    sigma^2_tl = k^4 eta0^2 r1^2 |f_tl|^2 sbar^2_tl       (Jacobian)
    lambda_tl  = E0^2 r1^2 g_tl^2 + sigma_w^2              (noise)

with f_1 = h_l(k r1), f_2 = (x h_l)'/x, g_1 = j_l(k r1), g_2 = (x j_l)'/x, and
sbar^2 the volume norm of the regular wave over the source ball (Lommel
integrals).  Each (tau, l) carries multiplicity 2l + 1.

Internally all values are held as mantissa/exponent pairs so the spectra stay
exact where plain doubles would underflow.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .fisher import (
    BY_LABEL,
    CrbCurve,
    FisherSpectrum,
    ModalSpectrum,
    ScalarField,
    regime_report,
)
from .specfun import DomainError
from .summation import compensated_cumsum, diagnose, tail_ratio

LN2 = math.log(2.0)
LOG_MAX = math.log(np.finfo(float).max)
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid source configuration."""


@dataclass(frozen=True)
class SourceConfig:
    k: float = 10.0
    r0: float = 1.0
    r1: float = 1.5
    E0: float = 1.0
    eta0: float = 1.0
    field: ScalarField = ScalarField.COMPLEX
    sigma_w2: Optional[float] = None
    wnr_db: Optional[float] = None
    lmax: int = 40

    def __post_init__(self):
        try:
            object.__setattr__(self, "field", ScalarField.parse(self.field))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("k", "r0", "r1", "E0", "eta0"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{name} must be a finite number")
            object.__setattr__(self, name, float(v))
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if not 0 < self.r0 < self.r1:
            raise ConfigError("radii must satisfy 0 < r0 < r1")
        if not self.E0 > 0:
            raise ConfigError("E0 must be positive")
        if not self.eta0 > 0:
            raise ConfigError("eta0 must be positive")
        if isinstance(self.lmax, bool) or int(self.lmax) != self.lmax or self.lmax < 1:
            raise ConfigError("lmax must be an integer >= 1")
        object.__setattr__(self, "lmax", int(self.lmax))
        if self.sigma_w2 is not None and self.wnr_db is not None:
            raise ConfigError("sigma_w2 and wnr_db are mutually exclusive")
        if self.sigma_w2 is not None:
            if not (math.isfinite(self.sigma_w2) and self.sigma_w2 >= 0):
                raise ConfigError("sigma_w2 must be finite and >= 0")
            object.__setattr__(self, "sigma_w2", float(self.sigma_w2))
        if self.wnr_db is not None:
            if not math.isfinite(self.wnr_db):
                raise ConfigError("wnr_db must be finite")
            object.__setattr__(self, "wnr_db", float(self.wnr_db))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        d["field"] = self.field.value
        d["schema_version"] = SCHEMA_VERSION
        return d

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        if "wnr_db" in changes and changes["wnr_db"] is not None:
            d["sigma_w2"] = None
        if "sigma_w2" in changes and changes["sigma_w2"] is not None:
            d["wnr_db"] = None
        return SourceConfig(**d)


class EmMode(NamedTuple):
    tau: int
    l: int

    @property
    def multiplicity(self):
        return 2 * self.l + 1


def mode_list(lmax):
    """Modes ordered by increasing l, then tau."""
    return [EmMode(tau, l) for l in range(1, lmax + 1) for tau in (1, 2)]


# ---------------------------------------------------------------------------
# scaled arithmetic: value = mant * 2**exp


def _from_float(v):
    m, e = math.frexp(v)
    return m, e


def _sub_scaled(m1, e1, m2, e2):
    """m1*2^e1 - m2*2^e2 (arrays), returned scaled."""
    e = np.maximum(e1, e2)
    d1 = np.clip(e1 - e, -2000, 0).astype(np.int32)
    d2 = np.clip(e2 - e, -2000, 0).astype(np.int32)
    m = np.ldexp(m1.real, d1) - np.ldexp(m2.real, d2)
    if np.iscomplexobj(m1) or np.iscomplexobj(m2):
        m = m + 1j * (np.ldexp(np.imag(m1), d1) - np.ldexp(np.imag(m2), d2))
    return m, e


def _log_abs(m, e):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(m)) + e * LN2


def _to_linear(logv):
    """exp of a log value with an underflow mask."""
    logv = np.asarray(logv, dtype=float)
    with np.errstate(under="ignore"):
        out = np.exp(logv)
    return out, (out == 0) | (out < 1e-300)


def _j_ext(lmax, x):
    """Scaled j_{-1}..j_{lmax+1}(x); index i holds j_{i-1}."""
    mj, ej = kernels.jn_scaled(lmax + 1, x)
    m0, e0 = _from_float(math.cos(x) / x)
    return np.concatenate(([m0], mj)), np.concatenate(([e0], ej)).astype(np.int64)


def _check_order(tau, l):
    if tau not in (1, 2):
        raise DomainError(f"tau must be 1 or 2, got {tau}")
    if l < 1:
        raise DomainError(f"l must be >= 1, got {l}")


def _log_f(lmax, x):
    """log|f_1l|, log|f_2l| for l = 1..lmax."""
    mh, eh = kernels.hn_scaled(lmax, x)
    l = np.arange(1, lmax + 1)
    logf1 = _log_abs(mh[1:], eh[1:])
    m2, e2 = _sub_scaled(mh[:-1], eh[:-1], mh[1:] * (l / x), eh[1:])
    return logf1, _log_abs(m2, e2)


def _g_scaled(lmax, x):
    mj, ej = _j_ext(lmax, x)
    l = np.arange(1, lmax + 1)
    g1 = (mj[2:-1], ej[2:-1])
    g2 = _sub_scaled(mj[1:-2], ej[1:-2], mj[2:-1] * (l / x), ej[2:-1])
    return g1, g2


def radial_factor_f(tau, l, kr1):
    """f_1 = h_l(x), f_2 = (x h_l(x))'/x at x = k r1."""
    _check_order(tau, l)
    if not kr1 > 0:
        raise DomainError("kr1 must be positive")
    mh, eh = kernels.hn_scaled(l, float(kr1))
    h = np.ldexp(mh.real, eh.astype(np.int32)) + 1j * np.ldexp(mh.imag, eh.astype(np.int32))
    if tau == 1:
        return complex(h[l])
    return complex(h[l - 1] - l / kr1 * h[l])


def radial_factor_g(tau, l, kr1):
    """g_1 = j_l(x), g_2 = (x j_l(x))'/x at x = k r1 (real)."""
    _check_order(tau, l)
    if not kr1 > 0:
        raise DomainError("kr1 must be positive")
    g1, g2 = _g_scaled(l, float(kr1))
    m, e = (g1 if tau == 1 else g2)
    return float(np.ldexp(m[l - 1], int(np.clip(e[l - 1], -2000, 2000))))


def _log_sbar1(lmax, x, r0):
    """log sbar^2_1l for l = 0..lmax+1 (l = 0 feeds the tau = 2, l = 1 recursion)."""
    mj, ej = _j_ext(lmax + 1, x)
    # index i <-> order i - 1; need l = 0..lmax+1 with neighbours l-1, l+1
    lo, mid, hi = slice(0, lmax + 2), slice(1, lmax + 3), slice(2, lmax + 4)
    a_m = mj[mid] * mj[mid]
    a_e = 2 * ej[mid]
    b_m = mj[lo] * mj[hi]
    b_e = ej[lo] + ej[hi]
    d_m, d_e = _sub_scaled(a_m, a_e, b_m, b_e)
    return 3 * math.log(r0) - LN2 + _log_abs(d_m, d_e)


def _log_sbar(lmax, x, r0):
    s1 = _log_sbar1(lmax, x, r0)  # l = 0..lmax+1
    l = np.arange(1, lmax + 1)
    t1 = s1[1 : lmax + 1]
    # (l+1) s_{l-1} + l s_{l+1} over (2l+1), summed in logs
    t2 = np.logaddexp(np.log(l + 1.0) + s1[0:lmax], np.log(l) + s1[2 : lmax + 2]) - np.log(
        2.0 * l + 1.0
    )
    return t1, t2


def mode_volume_norm(tau, l, config):
    """sbar^2_tl: volume integral of |v_tlm|^2 over the source ball r < r0."""
    _check_order(tau, l)
    s1, s2 = _log_sbar(l, config.k * config.r0, config.r0)
    return float(math.exp((s1 if tau == 1 else s2)[l - 1]))


def log_mode_volume_norms(config, lmax=None):
    """log sbar^2 arrays for tau = 1, 2 and l = 1..lmax."""
    lmax = config.lmax if lmax is None else lmax
    return _log_sbar(lmax, config.k * config.r0, config.r0)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class EmSpectra:
    """Log-domain modal quantities, rows in ``mode_list`` order."""

    modes: tuple
    log_sigma2: np.ndarray
    log_lambda_iso: np.ndarray
    sigma_w2: float
    field: ScalarField

    @property
    def multiplicity(self):
        return np.array([m.multiplicity for m in self.modes], dtype=np.int64)

    @property
    def log_lambda(self):
        if self.sigma_w2 > 0:
            return np.logaddexp(self.log_lambda_iso, math.log(self.sigma_w2))
        return self.log_lambda_iso

    @property
    def log_mu(self):
        return math.log(self.field.factor) + self.log_sigma2 - self.log_lambda


def _interleave(a1, a2):
    out = np.empty(2 * a1.size)
    out[0::2] = a1
    out[1::2] = a2
    return out


def _isotropic_logs(config, lmax):
    x1 = config.k * config.r1
    logf1, logf2 = _log_f(lmax, x1)
    s1, s2 = _log_sbar(lmax, config.k * config.r0, config.r0)
    pre = 4 * math.log(config.k) + 2 * math.log(config.eta0) + 2 * math.log(config.r1)
    log_sigma2 = pre + _interleave(2 * logf1 + s1, 2 * logf2 + s2)
    (g1m, g1e), (g2m, g2e) = _g_scaled(lmax, x1)
    pre_n = 2 * math.log(config.E0) + 2 * math.log(config.r1)
    log_lam = pre_n + 2 * _interleave(_log_abs(g1m, g1e), _log_abs(g2m, g2e))
    return log_sigma2, log_lam


def white_noise_variance(config):
    """sigma_w^2 from the config: explicit, from WNR, or 0."""
    if config.sigma_w2 is not None:
        return config.sigma_w2
    if config.wnr_db is None:
        return 0.0
    _, log_lam = _isotropic_logs(config, config.lmax)
    return 10.0 ** (config.wnr_db / 10.0) * float(np.exp(np.max(log_lam)))


def em_spectra(config, lmax=None):
    lmax = config.lmax if lmax is None else int(lmax)
    log_sigma2, log_lam = _isotropic_logs(config, lmax)
    return EmSpectra(
        tuple(mode_list(lmax)), log_sigma2, log_lam, white_noise_variance(config), config.field
    )


def _modal(values_log, modes):
    vals, uf = _to_linear(values_log)
    vals = np.where(uf, 0.0, vals)
    return ModalSpectrum(
        vals, [m.multiplicity for m in modes], [tuple(m) for m in modes], BY_LABEL, True, uf
    )


def jacobian_spectrum(config):
    """sigma^2_tl with multiplicity 2l + 1, ordered by l then tau (values are squares)."""
    sp = em_spectra(config)
    return _modal(sp.log_sigma2, sp.modes)


def noise_spectrum(config):
    """lambda_tl = E0^2 r1^2 g_tl^2 + sigma_w^2 with multiplicity 2l + 1."""
    sp = em_spectra(config)
    return _modal(sp.log_lambda, sp.modes)


def fisher_spectrum(config):
    """Fisher eigenvalues computed in the log domain (no underflowed 0/0).

    Raises OverflowError when some mu exceeds the double range; the log
    values in ``em_spectra(config).log_mu`` remain available.
    """
    sp = em_spectra(config)
    big = np.flatnonzero(sp.log_mu > LOG_MAX)
    if big.size:
        tau, l = sp.modes[big[0]]
        raise OverflowError(f"Fisher eigenvalue overflows at tau={tau}, l={l}; use log_mu")
    return FisherSpectrum(
        np.exp(sp.log_mu), sp.multiplicity, [tuple(m) for m in sp.modes], config.field
    )


def _per_l_increments(sp):
    """CRB increments summed over tau for each l: sum_tau (2l+1) / mu_tl."""
    inc = sp.multiplicity * np.exp(-sp.log_mu)
    return inc[0::2] + inc[1::2]


def crb_L(config, L=None):
    """CRB(L): sum over tau, l <= L and m of 1/mu_tl, for L = 1..L."""
    L = config.lmax if L is None else int(L)
    if not 1 <= L <= config.lmax:
        raise DomainError(f"L must lie in [1, {config.lmax}]")
    sp = em_spectra(config, L)
    inc = _per_l_increments(sp)
    return CrbCurve(np.arange(1, L + 1), compensated_cumsum(inc), diagnose(inc))


def crb_increments(config, L=None):
    L = config.lmax if L is None else int(L)
    return _per_l_increments(em_spectra(config, L))


@dataclass(frozen=True)
class RatioReport:
    modes: tuple
    ratio: np.ndarray
    log_increments: np.ndarray
    fisher_diagnosis: str
    crb_diagnosis: str
    regime: str
    tail_ratio: float


def fisher_ratio_diagnostic(config, L=None):
    """Per-mode sigma^2/lambda, its log increments along l, and the regime."""
    L = config.lmax if L is None else int(L)
    sp = em_spectra(config, L)
    log_ratio = sp.log_sigma2 - sp.log_lambda
    sigma = _modal(sp.log_sigma2, sp.modes)
    lam = _modal(sp.log_lambda, sp.modes)
    rep = regime_report(sigma, lam)
    inc = np.diff(log_ratio.reshape(-1, 2), axis=0).ravel() if L > 1 else np.zeros(0)
    tr = tail_ratio(log_terms=np.log(sp.multiplicity) + log_ratio)
    return RatioReport(
        sp.modes,
        np.exp(log_ratio),
        inc,
        rep.fisher,
        rep.crb,
        rep.regime,
        math.nan if tr is None else tr,
    )


# ---------------------------------------------------------------------------
# CSV

SPECTRUM_COLUMNS = [
    "tau", "l", "multiplicity", "sigma2", "lambda_iso", "lambda_total", "fisher_mu", "crb_increment",
]
DB_COLUMNS = ["sigma2_db", "lambda_iso_db", "lambda_total_db"]
CURVE_COLUMNS = ["L", "crb", "crb_db"]


def fmt_linear(v):
    return "0" if v == 0 else f"{v:.16e}"


def fmt_db_log(logv):
    """10 log10 of a value given by its natural log."""
    if not np.isfinite(logv):
        return "-inf"
    return f"{10.0 * logv / math.log(10.0):.6g}"


def spectrum_rows(config, with_db=True):
    sp = em_spectra(config)
    ll = sp.log_lambda
    rows = []
    for i, mode in enumerate(sp.modes):
        mult = mode.multiplicity
        logs = (sp.log_sigma2[i], sp.log_lambda_iso[i], ll[i])
        lin = [float(np.exp(v)) if v > -690 else 0.0 for v in logs]
        mu = float(np.exp(sp.log_mu[i]))
        row = [mode.tau, mode.l, mult] + [fmt_linear(v) for v in lin]
        row += [fmt_linear(mu), fmt_linear(mult / mu)]
        if with_db:
            row += [fmt_db_log(v) for v in logs]
        rows.append(row)
    return rows


def _write(path, header, rows, meta):
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + meta + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_spectrum_csv(config, path, with_db=True, meta=None):
    header = SPECTRUM_COLUMNS + (DB_COLUMNS if with_db else [])
    _write(path, header, spectrum_rows(config, with_db), meta)


def curve_rows(curve):
    return [
        [int(L), fmt_linear(v), fmt_db_log(math.log(v) if v > 0 else -math.inf)]
        for L, v in zip(curve.truncation, curve.values)
    ]


def write_curve_csv(curve, path, meta=None):
    _write(path, CURVE_COLUMNS, curve_rows(curve), meta)
