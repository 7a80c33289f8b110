"""Monte Carlo checks of the noise model, the estimator and the Green identity.

Isotropic noise is drawn as a finite superposition of K plane waves with
uniformly random directions and independent circular complex Gaussian
amplitudes (variance E0^2 4pi/K per polarization).  Expanding each plane
wave in regular vector waves gives the coefficient

    c_tlm = sum_k i^(l - tau + 1) conj(A_tlm(k_k)) . beta_k,

whose variance is E0^2 exactly for any K.  The tangential field on r = r1
projected onto the normalized surface harmonic A_tlm / r1 is then
N_tlm = r1 g_tl c_tlm, with variance lambda_tl.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels, specfun
from .emsource import em_spectra
from .fisher import BY_LABEL, ModalSpectrum, RankError, ScalarField, pseudo_inverse_estimate


class PreconditionError(ValueError):
    """Inputs outside the range where the check is meaningful."""


@dataclass(frozen=True)
class RngSpec:
    """Deterministic, splittable random stream.

    Child ``i`` of stream ``s`` is seeded by ``SeedSequence(seed, spawn_key=(s, i))``,
    so realizations can be generated in any order or in parallel.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise TypeError("seed must be an integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream) < 0:
            raise ValueError("stream id must be >= 0")

    def generator(self, i=0):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(i)))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream):
        return RngSpec(self.seed, stream)


def _as_generator(rng):
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngSpec or numpy Generator")


def complex_normal(gen, size, variance=1.0):
    """Circular complex Gaussian: E|z|^2 = variance, E z^2 = 0."""
    s = math.sqrt(variance / 2.0)
    return s * (gen.standard_normal(size) + 1j * gen.standard_normal(size))


def mode_index(lmax):
    """(tau, l, m) labels in coefficient order: l, then tau, then m."""
    return [(tau, l, m) for l in range(1, lmax + 1) for tau in (1, 2) for m in range(-l, l + 1)]


def flatten(coeffs):
    """(..., 2, lmax+1, 2lmax+1) coefficient arrays -> (..., n_modes) in ``mode_index`` order."""
    lmax = coeffs.shape[-2] - 1
    parts = [coeffs[..., tau - 1, l, lmax - l : lmax + l + 1] for l in range(1, lmax + 1) for tau in (1, 2)]
    return np.concatenate(parts, axis=-1)


def plane_wave_coefficients(lmax, theta, phi, beta_theta, beta_phi):
    """c_tlm with sum_k beta_k exp(i k_k . r) = 4 pi sum_tlm c_tlm v_tlm(k r).

    The 4 pi is kept outside so that Var(c_tlm) = E0^2 under the sampling
    convention of ``sample_isotropic_coeffs``.

    Inputs of shape (K,) or (nreal, K); output (nreal, 2, lmax+1, 2lmax+1).
    """
    c = kernels.project_plane_waves(lmax, theta, phi, beta_theta, beta_phi)
    l = np.arange(lmax + 1)
    phase = np.stack([1j ** ((l - tau + 1) % 4) for tau in (1, 2)])
    return c * phase[None, :, :, None]


def _check_sampling(lmax, n_directions):
    if int(n_directions) < 1:
        raise ValueError("n_directions must be >= 1")
    if int(lmax) < 1:
        raise ValueError("lmax must be >= 1")


def _surface_factors(config, lmax):
    """r1 g_tl stacked as (2, lmax+1, 1), and the white-noise variance."""
    j, dj, _ = specfun.regular_wave_radial(lmax, config.k * config.r1)
    return config.r1 * np.stack([j, dj])[:, :, None], em_spectra(config, lmax).sigma_w2


def _draw(config, lmax, K, gen, factors, sigma_w2):
    theta = np.arccos(gen.uniform(-1.0, 1.0, K))
    phi = gen.uniform(0.0, 2.0 * np.pi, K)
    var = config.E0 ** 2 * 4.0 * np.pi / K
    bt = complex_normal(gen, K, var)
    bp = complex_normal(gen, K, var)
    c = plane_wave_coefficients(lmax, theta[None], phi[None], bt[None], bp[None])[0]
    N = factors * c
    if sigma_w2 > 0:
        N = N + complex_normal(gen, N.shape, sigma_w2) * _mask(lmax)
    return N


def sample_isotropic_coeffs(config, lmax, n_directions, rng):
    """One realization of the surface-projected noise coefficients N_tlm.

    Returns a complex array (2, lmax+1, 2lmax+1) indexed [tau-1, l, m+lmax];
    white noise of variance sigma_w^2 is added when the config has any.
    """
    _check_sampling(lmax, n_directions)
    gen = _as_generator(rng)
    factors, sigma_w2 = _surface_factors(config, lmax)
    return _draw(config, lmax, int(n_directions), gen, factors, sigma_w2)


def _mask(lmax):
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None, :]
    one = ((np.abs(m) <= l) & (l >= 1)).astype(float)
    return np.stack([one, one])


def noise_targets(config, lmax):
    """lambda_tl expanded over m, in ``mode_index`` order."""
    sp = em_spectra(config, lmax)
    return np.repeat(np.exp(sp.log_lambda), sp.multiplicity)


@dataclass(frozen=True)
class TrialReport:
    """Per-mode sample moments with standard errors.

    ``mean_se`` is sqrt(var / trials); ``var_se`` is the sample standard
    deviation of |x - mean|^2 divided by sqrt(trials).
    """

    labels: tuple
    trials: int
    mean: np.ndarray
    var: np.ndarray
    mean_se: np.ndarray
    var_se: np.ndarray
    target_mean: np.ndarray
    target_var: np.ndarray
    mse: np.ndarray = None
    cross: dict = None
    pseudo: np.ndarray = None
    pseudo_se: np.ndarray = None

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("trials must be >= 2")

    @property
    def bias_z(self):
        d = self.mean - self.target_mean
        return np.abs(d) / self.mean_se

    @property
    def var_z(self):
        return (self.var - self.target_var) / self.var_se

    @property
    def var_ratio(self):
        return self.var / self.target_var

    def write_csv(self, path, meta=None):
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write("# " + meta + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "target", "emp_mean_re", "emp_mean_im", "emp_var", "stderr", "z_score"])
            for i in range(len(self.labels)):
                w.writerow([
                    i,
                    f"{self.target_var[i]:.16e}",
                    f"{self.mean[i].real:.16e}",
                    f"{self.mean[i].imag:.16e}",
                    f"{self.var[i]:.16e}",
                    f"{self.var_se[i]:.16e}",
                    f"{self.var_z[i]:.6g}",
                ])


def _moments(x, target_mean, target_var, labels):
    x = np.asarray(x)
    n = x.shape[0]
    mean = x.mean(axis=0)
    dev = np.abs(x - mean) ** 2
    var = dev.sum(axis=0) / (n - 1)
    return dict(
        labels=tuple(labels),
        trials=n,
        mean=mean,
        var=var,
        mean_se=np.sqrt(var / n),
        var_se=dev.std(axis=0, ddof=1) / math.sqrt(n),
        target_mean=np.broadcast_to(np.asarray(target_mean, dtype=complex), mean.shape).copy(),
        target_var=np.broadcast_to(np.asarray(target_var, dtype=float), mean.shape).copy(),
    )


def _complex_se(p):
    # standard error of a complex sample mean: sqrt(E|p - Ep|^2 / n)
    n = p.shape[0]
    return np.sqrt((np.abs(p - p.mean(axis=0)) ** 2).sum(axis=0) / (n - 1) / n)


def empirical_covariance(realizations, targets=None, labels=None, pairs=None):
    """Sample mean, variance, pseudo-covariance and selected cross-covariances.

    ``realizations`` has shape (n_real, n_modes).  ``pairs`` lists index
    pairs (a, b) whose cross-covariance E{N_a conj(N_b)} is estimated; each
    entry of ``report.cross`` is ``(estimate, standard_error)``.
    """
    X = np.asarray(realizations, dtype=complex)
    if X.ndim != 2:
        raise ValueError("realizations must be a 2-D array (n_real, n_modes)")
    n = X.shape[0]
    if n < 100:
        raise ValueError(f"at least 100 realizations are required, got {n}")
    if labels is None:
        labels = range(X.shape[1])
    if targets is None:
        targets = np.full(X.shape[1], np.nan)
    mom = _moments(X, 0.0, targets, labels)
    Xc = X - mom["mean"]
    prod = Xc * Xc
    pseudo = prod.sum(axis=0) / (n - 1)
    pseudo_se = _complex_se(prod)
    cross = {}
    for a, b in pairs or ():
        p = Xc[:, a] * np.conj(Xc[:, b])
        cross[(a, b)] = (p.sum() / (n - 1), float(_complex_se(p)))
    return TrialReport(**mom, cross=cross, pseudo=pseudo, pseudo_se=pseudo_se)


def sample_noise_realizations(config, lmax, n_directions, n_real, rng):
    """(n_real, n_modes) array of N_tlm, one RNG child per realization."""
    if not isinstance(rng, RngSpec):
        raise TypeError("rng must be an RngSpec")
    _check_sampling(lmax, n_directions)
    factors, sigma_w2 = _surface_factors(config, lmax)
    K = int(n_directions)
    return np.stack(
        [flatten(_draw(config, lmax, K, rng.generator(i), factors, sigma_w2)) for i in range(int(n_real))]
    )


def em_estimation_spectra(config, r):
    """sigma, lambda and 1/mu for the first r multiplicity-expanded EM modes."""
    lmax = 1
    while 2 * (lmax * (lmax + 2)) < r:
        lmax += 1
    sp = em_spectra(config, lmax)
    mult = sp.multiplicity
    labels = [tuple(m) for m in sp.modes]
    sigma = ModalSpectrum(np.exp(sp.log_sigma2), mult, labels, BY_LABEL, True)
    lam = ModalSpectrum(np.exp(sp.log_lambda), mult, labels, BY_LABEL, False)
    inv_mu = np.repeat(np.exp(-sp.log_mu), mult)[:r]
    return sigma, lam, inv_mu


def simulate_linear_estimation(config, true_coeffs, r, trials, rng):
    """Truncated pseudo-inverse on xi_i = sigma_i theta_i + w_i, w_i ~ CN(0, lambda_i).

    One RNG child per trial.  For a real-parameter config ``true_coeffs``
    must be real and the estimator keeps Re(xi)/sigma.
    """
    r = int(r)
    trials = int(trials)
    if trials < 100:
        raise ValueError("trials must be >= 100")
    if not isinstance(rng, RngSpec):
        raise TypeError("rng must be an RngSpec")
    theta = np.asarray(true_coeffs, dtype=complex).ravel()
    if theta.size < r:
        raise ValueError("need one true coefficient per retained mode")
    theta = theta[:r]
    field = config.field
    if field is ScalarField.REAL and np.any(theta.imag != 0):
        raise ValueError("real-parameter model needs real true coefficients")
    sigma, lam, inv_mu = em_estimation_spectra(config, r)
    s = np.repeat(sigma.roots(), sigma.multiplicity)[:r]
    lv = np.repeat(lam.values, lam.multiplicity)[:r]
    if np.any(s == 0):
        raise RankError("zero singular value inside the truncation")
    est = np.empty((trials, r), dtype=float if field is ScalarField.REAL else complex)
    for t in range(trials):
        gen = rng.generator(t)
        xi = s * theta + complex_normal(gen, r) * np.sqrt(lv)
        est[t] = pseudo_inverse_estimate(xi, sigma, lam, field, r)
    target = theta.real if field is ScalarField.REAL else theta
    mom = _moments(est, target, inv_mu, [f"mode{i}" for i in range(r)])
    mse = (np.abs(est - target) ** 2).mean(axis=0)
    return TrialReport(**mom, mse=mse)


def green_identity_check(config, lmax, point_pairs):
    """Max Frobenius-relative error of the truncated mode sum against the closed form.

    ``point_pairs`` are (r, r') Cartesian positions in the config's length
    units.  Returns 0.0 for an empty list.
    """
    lmax = int(lmax)
    pairs = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in point_pairs]
    if not pairs:
        return 0.0
    rmax = max(max(np.linalg.norm(a), np.linalg.norm(b)) for a, b in pairs)
    if math.e * config.k * rmax / 2.0 >= lmax:
        raise PreconditionError(
            f"lmax = {lmax} too small for k|r| = {config.k * rmax:.3g} (need e k|r|/2 < lmax)"
        )
    e2 = config.E0 ** 2
    worst = 0.0
    for a, b in pairs:
        Va = specfun.regular_waves(lmax, config.k * a)
        Vb = specfun.regular_waves(lmax, config.k * b)
        M = e2 * np.einsum("tlmc,tlmd->cd", Va, np.conj(Vb))
        G = e2 * specfun.green_imag_closed(config.k, a, b)
        worst = max(worst, float(np.linalg.norm(M - G) / np.linalg.norm(G)))
    return worst
