"""Special functions and vector spherical wave primitives.

Conventions
-----------
* ``j_l``, ``y_l``, ``h_l = j_l + i y_l`` are spherical Bessel/Hankel functions.
* ``assoc_legendre`` returns the unnormalized P_l^m with the Condon-Shortley
  phase, so ``scalar_harmonic`` needs no further (-1)^m factor; the resulting
  Y_lm are the usual orthonormal harmonics with Y_{l,-m} = (-1)^m conj(Y_lm).
* Vector harmonics (tau = 1, 2, 3)::

      A_1 = curl(r Y) / sqrt(l(l+1))
      A_2 = r_hat x A_1
      A_3 = r_hat Y

  returned as components in the local (r_hat, theta_hat, phi_hat) frame.
* Regular vector waves ``v_1 = j_l A_1`` and
  ``v_2 = (x j_l)'/x A_2 + sqrt(l(l+1)) j_l/x A_3`` with x = k r.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class UnderflowWarning(RuntimeWarning):
    """A value fell below the representable range and was returned as 0."""


# |j_l| below this is flagged; log-domain helpers stay exact past it
UNDERFLOW_LIMIT = 1e-300
_LOG2_UNDERFLOW = math.log2(UNDERFLOW_LIMIT)


def _check_x(x):
    x = float(x)
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError(f"argument must be finite and > 0, got {x!r}")
    return x


# ---------------------------------------------------------------------------
# spherical Bessel / Hankel


def log_abs_sph_jn(lmax, x):
    """Signs and natural logs of |j_l(x)| for l = 0..lmax.

    Exact far below the double range (no underflow), which is what the
    spectra code relies on at large l.
    """
    x = _check_x(x)
    mant, exp2 = kernels.jn_scaled(int(lmax), x)
    sign = np.sign(mant)
    with np.errstate(divide="ignore"):
        logabs = np.log(np.abs(mant)) + exp2 * math.log(2.0)
    return sign, logabs


def sph_jn_array(lmax, x):
    """j_0(x)..j_lmax(x); values below ``UNDERFLOW_LIMIT`` are flagged."""
    x = _check_x(x)
    mant, exp2 = kernels.jn_scaled(int(lmax), x)
    tiny = (mant != 0) & (exp2 < _LOG2_UNDERFLOW)
    if tiny.any():
        warnings.warn(
            f"j_l({x}) underflows for l >= {int(np.argmax(tiny))}", UnderflowWarning, stacklevel=2
        )
    out = np.ldexp(mant, exp2.astype(np.int32).clip(-2000, 2000))
    out[tiny] = 0.0
    return out


def sph_bessel_j(l, x):
    """Spherical Bessel function j_l(x) for integer l >= -1 and x > 0.

    ``l = -1`` gives cos(x)/x.  Uses Miller's downward recurrence, which is
    stable for j_l in every regime.
    """
    l = int(l)
    if l < -1:
        raise DomainError(f"order must be >= -1, got {l}")
    x = _check_x(x)
    if l == -1:
        return math.cos(x) / x
    with warnings.catch_warnings():
        warnings.simplefilter("error", UnderflowWarning)
        try:
            return float(sph_jn_array(l, x)[l])
        except UnderflowWarning:
            pass
    warnings.warn(f"j_{l}({x}) underflows", UnderflowWarning, stacklevel=2)
    return 0.0


def sph_hn_array(lmax, x):
    """h^(1)_0(x)..h^(1)_lmax(x) by upward recurrence."""
    x = _check_x(x)
    mant, exp2 = kernels.hn_scaled(int(lmax), x)
    e = exp2.astype(np.int32).clip(-2000, 2000)
    return np.ldexp(mant.real, e) + 1j * np.ldexp(mant.imag, e)


def log_abs_sph_hn(lmax, x):
    """Natural logs of |h^(1)_l(x)| for l = 0..lmax (overflow free)."""
    x = _check_x(x)
    mant, exp2 = kernels.hn_scaled(int(lmax), x)
    return np.log(np.abs(mant)) + exp2 * math.log(2.0)


def sph_hankel1(l, x):
    """Spherical Hankel function of the first kind h_l^(1)(x)."""
    l = int(l)
    if l < 0:
        raise DomainError(f"order must be >= 0, got {l}")
    return complex(sph_hn_array(l, x)[l])


def sph_bessel_y(l, x):
    """Spherical Neumann function y_l(x) = Im h_l^(1)(x)."""
    return sph_hankel1(l, x).imag


def riccati_factor(kind, l, x):
    """(x z_l(x))' / x for z = j_l ("regular") or h_l^(1) ("outgoing").

    Evaluated as z_{l-1}(x) - (l/x) z_l(x).
    """
    l = int(l)
    if l < 1:
        raise DomainError(f"order must be >= 1, got {l}")
    x = _check_x(x)
    if kind == "regular":
        z = sph_jn_array(l, x)
        return complex(z[l - 1] - l / x * z[l])
    if kind == "outgoing":
        z = sph_hn_array(l, x)
        return complex(z[l - 1] - l / x * z[l])
    raise DomainError(f"kind must be 'regular' or 'outgoing', got {kind!r}")


def regular_wave_radial(lmax, x):
    """Radial factors of the regular waves for l = 0..lmax.

    Returns ``(j_l(x), (x j_l)'/x, j_l(x)/x)``; x = 0 is allowed and uses the
    limits j_l(0) = delta_l0, (x j_1)'/x -> 2/3, j_1/x -> 1/3.
    """
    lmax = int(lmax)
    if x < 0:
        raise DomainError("radial argument must be >= 0")
    j = np.zeros(lmax + 1)
    dj = np.zeros(lmax + 1)
    jx = np.zeros(lmax + 1)
    if x == 0.0:
        j[0] = 1.0
        if lmax >= 1:
            dj[1] = 2.0 / 3.0
            jx[1] = 1.0 / 3.0
        dj[0] = 1.0
        return j, dj, jx
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderflowWarning)
        j[:] = sph_jn_array(lmax, x)
    jm1 = math.cos(x) / x
    prev = np.concatenate(([jm1], j[:-1]))
    ls = np.arange(lmax + 1)
    dj[:] = prev - ls / x * j
    jx[:] = j / x
    return j, dj, jx


# ---------------------------------------------------------------------------
# directions and vectors


@dataclass(frozen=True)
class Direction:
    """Unit direction given by polar angle theta in [0, pi] and azimuth phi in [0, 2 pi)."""

    theta: float
    phi: float

    def __post_init__(self):
        th = float(self.theta)
        ph = float(self.phi)
        if not (math.isfinite(th) and math.isfinite(ph)):
            raise DomainError("direction angles must be finite")
        th = math.fmod(th, 2.0 * math.pi)
        if th < 0:
            th += 2.0 * math.pi
        if th > math.pi:
            th = 2.0 * math.pi - th
            ph += math.pi
        ph = math.fmod(ph, 2.0 * math.pi)
        if ph < 0:
            ph += 2.0 * math.pi
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "phi", ph)

    @classmethod
    def from_cartesian(cls, v):
        v = np.asarray(v, dtype=float)
        r = float(np.linalg.norm(v))
        if r == 0.0:
            return cls(0.0, 0.0)
        return cls(math.acos(max(-1.0, min(1.0, v[2] / r))), math.atan2(v[1], v[0]))

    def unit(self):
        st, ct = math.sin(self.theta), math.cos(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), ct])

    def frame(self):
        """Rows r_hat, theta_hat, phi_hat in Cartesian components."""
        return spherical_frame(np.array([self.theta]), np.array([self.phi]))[0]


def spherical_frame(theta, phi):
    """Local frames, shape (n, 3, 3): rows r_hat, theta_hat, phi_hat."""
    theta = np.asarray(theta, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    z = np.zeros_like(theta)
    rhat = np.stack([st * cp, st * sp, ct], axis=-1)
    that = np.stack([ct * cp, ct * sp, -st], axis=-1)
    phat = np.stack([-sp, cp, z], axis=-1)
    return np.stack([rhat, that, phat], axis=1)


@dataclass(frozen=True)
class ComplexVec3:
    """Complex 3-vector tagged with its frame.

    ``frame`` is ``"spherical"`` (components along r_hat, theta_hat, phi_hat
    at ``direction``) or ``"cartesian"``.
    """

    components: np.ndarray
    frame: str = "cartesian"
    direction: Direction = None

    def __post_init__(self):
        c = np.asarray(self.components, dtype=complex).reshape(3)
        if not np.all(np.isfinite(c)):
            raise DomainError("vector components must be finite")
        if self.frame not in ("spherical", "cartesian"):
            raise DomainError(f"unknown frame {self.frame!r}")
        if self.frame == "spherical" and self.direction is None:
            raise DomainError("spherical components need a direction")
        object.__setattr__(self, "components", c)

    def to_cartesian(self):
        if self.frame == "cartesian":
            return self
        return ComplexVec3(self.components @ self.direction.frame(), "cartesian")

    def _other(self, other):
        if other.frame != self.frame or (
            self.frame == "spherical" and other.direction != self.direction
        ):
            return other.to_cartesian(), self.to_cartesian()
        return other, self

    def __add__(self, other):
        o, s = self._other(other)
        return ComplexVec3(s.components + o.components, s.frame, s.direction)

    def __sub__(self, other):
        o, s = self._other(other)
        return ComplexVec3(s.components - o.components, s.frame, s.direction)

    def __mul__(self, scalar):
        return ComplexVec3(self.components * scalar, self.frame, self.direction)

    __rmul__ = __mul__

    def dot(self, other):
        """Bilinear product a . b (no conjugation)."""
        o, s = self._other(other)
        return complex(np.dot(s.components, o.components))

    def vdot(self, other):
        """Hermitian product conj(a) . b."""
        o, s = self._other(other)
        return complex(np.vdot(s.components, o.components))

    def norm(self):
        return float(np.linalg.norm(self.components))


# ---------------------------------------------------------------------------
# Legendre functions and harmonics


def _check_lm(l, m):
    l, m = int(l), int(m)
    if l < 0:
        raise DomainError(f"degree must be >= 0, got {l}")
    if abs(m) > l:
        raise DomainError(f"|m| must not exceed l (l={l}, m={m})")
    return l, m


def _norm_log(l, m):
    return 0.5 * (
        math.log((2 * l + 1) / (4 * math.pi)) + math.lgamma(l - m + 1) - math.lgamma(l + m + 1)
    )


def assoc_legendre(l, m, x):
    """Unnormalized associated Legendre function P_l^m(x), Condon-Shortley phase included."""
    l, m = int(l), int(m)
    if m < 0:
        raise DomainError("assoc_legendre takes 0 <= m <= l")
    _check_lm(l, m)
    x = float(x)
    if not -1.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [-1, 1], got {x}")
    u = math.sqrt((1.0 - x) * (1.0 + x))
    P, _, _ = kernels.legendre_table(l, np.array([x]), np.array([u]))
    pbar = P[0, l, m]
    if pbar == 0.0:
        return 0.0
    return math.copysign(math.exp(math.log(abs(pbar)) - _norm_log(l, m)), pbar)


def scalar_harmonic(l, m, direction):
    """Orthonormal spherical harmonic Y_lm at ``direction``."""
    l, m = _check_lm(l, m)
    d = direction
    am = abs(m)
    P, _, _ = kernels.legendre_table(l, np.array([math.cos(d.theta)]), np.array([math.sin(d.theta)]))
    y = P[0, l, am] * complex(math.cos(am * d.phi), math.sin(am * d.phi))
    if m < 0:
        y = (-1) ** am * y.conjugate()
    return complex(y)


def harmonic_tables(lmax, theta, phi):
    """Scalar and vector harmonics for all |m| <= l <= lmax at many directions.

    Returns ``(Y, A)``: ``Y[n, l, m + lmax]`` and
    ``A[tau - 1, n, l, m + lmax, c]`` with c indexing (r, theta, phi)
    components.  Entries with |m| > l, and A for l = 0, are zero.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    n = theta.size
    P, Q, dP = kernels.legendre_table(lmax, np.cos(theta), np.sin(theta))
    Y = np.zeros((n, lmax + 1, 2 * lmax + 1), dtype=complex)
    A = np.zeros((3, n, lmax + 1, 2 * lmax + 1, 3), dtype=complex)
    ls = np.arange(lmax + 1)
    with np.errstate(divide="ignore"):
        inv = np.where(ls > 0, 1.0 / np.sqrt(ls * (ls + 1.0)), 0.0)
    for m in range(lmax + 1):
        em = np.exp(1j * m * phi)[:, None]
        y = P[:, :, m] * em
        imq = 1j * m * Q[:, :, m] * em
        dth = dP[:, :, m] * em
        a1t = imq * inv
        a1p = -dth * inv
        blocks = [(m, y, a1t, a1p, 1.0)]
        if m > 0:
            s = (-1.0) ** m
            blocks.append((-m, s * np.conj(y), s * np.conj(a1t), s * np.conj(a1p), s))
        for mm, yy, at, ap, _ in blocks:
            Y[:, :, lmax + mm] = yy
            A[0, :, :, lmax + mm, 1] = at
            A[0, :, :, lmax + mm, 2] = ap
            # A_2 = r_hat x A_1: (theta, phi) -> (-phi, theta)
            A[1, :, :, lmax + mm, 1] = -ap
            A[1, :, :, lmax + mm, 2] = at
            A[2, :, :, lmax + mm, 0] = yy
    for l in range(lmax + 1):
        Y[:, l, : lmax - l] = 0.0
        Y[:, l, lmax + l + 1 :] = 0.0
    A[:, :, :, :, :] *= (np.abs(np.arange(-lmax, lmax + 1))[None, :] <= ls[:, None])[
        None, None, :, :, None
    ]
    A[0:2, :, 0] = 0.0
    return Y, A


def vector_harmonic(tau, l, m, direction):
    """Vector spherical harmonic A_tau,l,m at ``direction`` (spherical frame)."""
    tau = int(tau)
    if tau not in (1, 2, 3):
        raise DomainError(f"tau must be 1, 2 or 3, got {tau}")
    l, m = _check_lm(l, m)
    if l < 1 and tau != 3:
        raise DomainError("A_1 and A_2 need l >= 1")
    d = direction
    _, A = harmonic_tables(l, [d.theta], [d.phi])
    return ComplexVec3(A[tau - 1, 0, l, l + m], "spherical", d)


def sphere_quadrature(order):
    """Gauss-Legendre (in cos theta) x trapezoid (in phi) rule on the unit sphere.

    ``order`` points in each angle; the rule is exact for band-limited
    functions of degree < ``order`` in each variable.  Returns flattened
    ``(theta, phi, weights)`` with weights summing to 4 pi.
    """
    order = int(order)
    x, w = np.polynomial.legendre.leggauss(order)
    phi = 2.0 * np.pi * np.arange(order) / order
    th = np.arccos(x)
    T, F = np.meshgrid(th, phi, indexing="ij")
    W = np.outer(w, np.full(order, 2.0 * np.pi / order))
    return T.ravel(), F.ravel(), W.ravel()


# ---------------------------------------------------------------------------
# regular waves and the Green's dyadic


def regular_waves(lmax, kr_vec):
    """Cartesian components of v_tau,l,m(k r) for tau = 1, 2 and l <= lmax.

    ``kr_vec`` is the dimensionless position k r.  Returns complex array
    ``V[tau - 1, l, m + lmax, c]`` with c the Cartesian component.
    """
    kr_vec = np.asarray(kr_vec, dtype=float).reshape(3)
    x = float(np.linalg.norm(kr_vec))
    d = Direction.from_cartesian(kr_vec)
    j, dj, jx = regular_wave_radial(lmax, x)
    _, A = harmonic_tables(lmax, [d.theta], [d.phi])
    A = A[:, 0]
    ls = np.arange(lmax + 1)
    root = np.sqrt(ls * (ls + 1.0))
    V = np.zeros((2, lmax + 1, 2 * lmax + 1, 3), dtype=complex)
    V[0] = j[:, None, None] * A[0]
    V[1] = dj[:, None, None] * A[1] + (root * jx)[:, None, None] * A[2]
    V[:, 0] = 0.0
    return V @ d.frame()


def _sinc_terms(u):
    """s = sin(u)/u, s'(u)/u and s''(u), with series near u = 0."""
    if u < 0.5:
        # s = sum c_n u^(2n), c_n = (-1)^n / (2n+1)!
        s = d1u = d2 = 0.0
        for n in range(13):
            c = (-1) ** n / math.factorial(2 * n + 1)
            s += c * u ** (2 * n)
            if n >= 1:
                d1u += 2 * n * c * u ** (2 * n - 2)
                d2 += 2 * n * (2 * n - 1) * c * u ** (2 * n - 2)
        return s, d1u, d2
    su, cu = math.sin(u), math.cos(u)
    s = su / u
    d1u = (u * cu - su) / u ** 3
    d2 = -su / u - 2.0 * cu / u ** 2 + 2.0 * su / u ** 3
    return s, d1u, d2


def green_imag_closed(k, r, rp):
    """(1/k) Im G_e(k, r, r') = (1/4 pi) (I + grad grad / k^2) sinc(k |r - r'|).

    Real symmetric 3x3 dyadic in Cartesian components; regular at r = r'
    where it equals I / (6 pi).
    """
    k = float(k)
    if not (k > 0 and math.isfinite(k)):
        raise DomainError("wavenumber must be positive")
    R = np.asarray(r, dtype=float).reshape(3) - np.asarray(rp, dtype=float).reshape(3)
    if not np.all(np.isfinite(R)):
        raise DomainError("positions must be finite")
    dist = float(np.linalg.norm(R))
    u = k * dist
    s, d1u, d2 = _sinc_terms(u)
    iso = s + d1u
    aniso = d2 - d1u
    if dist > 0:
        Rh = R / dist
        out = iso * np.eye(3) + aniso * np.outer(Rh, Rh)
    else:
        out = iso * np.eye(3)
    return out / (4.0 * math.pi)
