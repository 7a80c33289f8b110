import json
import math

import numpy as np
import pytest
from scipy import integrate, special

from invcrb import emsource as em
from invcrb import fisher as fi
from invcrb import specfun
from invcrb.emsource import ConfigError, SourceConfig

CFG = SourceConfig()  # k = 10, r0 = 1, r1 = 1.5, E0 = 1, eta0 = 1
LN_RATIO = 2 * math.log(CFG.r0 / CFG.r1)

# mpmath, 30 digits
J1_OF_15 = 0.053536029035730826549


def _quad(f, a, b):
    val, _ = integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=400)
    return val


def _sbar1_quad(l, k, r0):
    return _quad(lambda r: r * r * special.spherical_jn(l, k * r) ** 2, 0, r0)


def _sbar2_quad(l, k, r0):
    def f(r):
        x = k * r
        j = special.spherical_jn(l, x)
        dj = special.spherical_jn(l, x, derivative=True)
        return r * r * ((j / x + dj) ** 2 + l * (l + 1) * (j / x) ** 2)

    return _quad(f, 0, r0)


# --- radial factors ----------------------------------------------------------


@pytest.mark.parametrize("l", [1, 3, 12])
def test_f1_is_hankel(l):
    assert em.radial_factor_f(1, l, 15.0) == specfun.sph_hankel1(l, 15.0)


def test_g1_is_bessel_and_real():
    g = em.radial_factor_g(1, 1, 15.0)
    assert isinstance(g, float)
    assert g == pytest.approx(J1_OF_15, rel=1e-14)


@pytest.mark.parametrize("l", [1, 3, 7])
def test_f2_finite_difference(l):
    x, h = 15.0, 1e-5
    xh = lambda t: t * specfun.sph_hankel1(l, t)  # noqa: E731
    fd = (xh(x + h) - xh(x - h)) / (2 * h) / x
    assert abs(em.radial_factor_f(2, l, x) - fd) < 1e-8


@pytest.mark.parametrize("l", [1, 4, 10])
def test_g2_finite_difference(l):
    x, h = 15.0, 1e-5
    xj = lambda t: t * special.spherical_jn(l, t)  # noqa: E731
    fd = (xj(x + h) - xj(x - h)) / (2 * h) / x
    assert abs(em.radial_factor_g(2, l, x) - fd) < 1e-8


def test_f1_growth_rate():
    # |h_l(x)| ~ (2l / (e x))^l for l >> x: increments approach
    # log((2l+1)/x - x/(2l-1)), the recurrence ratio to second order
    x = 15.0
    logs = specfun.log_abs_sph_hn(61, x)
    for l in range(40, 61):
        step = logs[l + 1] - logs[l]
        assert step == pytest.approx(math.log((2 * l + 1) / x - x / (2 * l - 1)), abs=2e-3)
        assert abs(step - math.log(2 * l / x)) < 0.05


def test_factor_domain_errors():
    with pytest.raises(specfun.DomainError):
        em.radial_factor_f(3, 1, 1.0)
    with pytest.raises(specfun.DomainError):
        em.radial_factor_g(1, 0, 1.0)
    with pytest.raises(specfun.DomainError):
        em.radial_factor_f(1, 1, 0.0)


# --- volume norms ------------------------------------------------------------


@pytest.mark.parametrize("l", [1, 2, 5, 10, 15, 20, 25, 30])
def test_lommel_tau1_against_quadrature(l):
    got = em.mode_volume_norm(1, l, CFG)
    assert got == pytest.approx(_sbar1_quad(l, CFG.k, CFG.r0), rel=1e-8)


@pytest.mark.parametrize("l", [1, 2, 5, 10, 15, 20, 25, 30])
def test_lommel_tau2_against_quadrature(l):
    got = em.mode_volume_norm(2, l, CFG)
    assert got == pytest.approx(_sbar2_quad(l, CFG.k, CFG.r0), rel=1e-6)


def test_lommel_other_radius():
    cfg = SourceConfig(k=3.0, r0=0.7, r1=2.0)
    for l in (1, 4, 9):
        assert em.mode_volume_norm(1, l, cfg) == pytest.approx(_sbar1_quad(l, 3.0, 0.7), rel=1e-8)
        assert em.mode_volume_norm(2, l, cfg) == pytest.approx(_sbar2_quad(l, 3.0, 0.7), rel=1e-6)


def test_volume_norms_positive_deep_into_underflow():
    s1, s2 = em.log_mode_volume_norms(CFG, 80)
    assert np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))
    assert s1[-1] < math.log(1e-100)


def test_non_radiating_combination_has_no_projection():
    # v_2lm = a(r) A2 + b(r) A3; the field -b A2 + a A3 is orthogonal to every
    # regular wave over the ball, while a A2 + b A3 reproduces sbar^2_2l.
    k, r0, l0, m0, lmax = CFG.k, CFG.r0, 3, 1, 6
    xr, wr = np.polynomial.legendre.leggauss(80)
    r = 0.5 * r0 * (xr + 1)
    wr = 0.5 * r0 * wr * r * r
    th, ph, ws = specfun.sphere_quadrature(2 * lmax + 2)
    _, A = specfun.harmonic_tables(lmax, th, ph)  # [tau-1, n, l, m+lmax, comp]
    radial = [specfun.regular_wave_radial(lmax, k * ri) for ri in r]
    j = np.array([t[0] for t in radial])
    dj = np.array([t[1] for t in radial])
    jx = np.array([t[2] for t in radial])
    root = math.sqrt(l0 * (l0 + 1))
    a, b = dj[:, l0], root * jx[:, l0]
    A2, A3 = A[1, :, l0, m0 + lmax], A[2, :, l0, m0 + lmax]
    null = -b[:, None, None] * A2[None] + a[:, None, None] * A3[None]
    rad = a[:, None, None] * A2[None] + b[:, None, None] * A3[None]
    ls = np.arange(lmax + 1)
    roots = np.sqrt(ls * (ls + 1.0))
    for L in range(1, lmax + 1):
        for m in range(-L, L + 1):
            v1 = j[:, L, None, None] * A[0, :, L, m + lmax][None]
            v2 = (dj[:, L, None, None] * A[1, :, L, m + lmax][None]
                  + (roots[L] * jx[:, L])[:, None, None] * A[2, :, L, m + lmax][None])
            for v in (v1, v2):
                p = np.einsum("r,n,rnc,rnc->", wr, ws, np.conj(v), null)
                assert abs(p) < 1e-13
    v2 = rad
    p = np.einsum("r,n,rnc,rnc->", wr, ws, np.conj(v2), rad).real
    assert p == pytest.approx(em.mode_volume_norm(2, l0, CFG), rel=1e-10)


# --- spectra -----------------------------------------------------------------


def test_mode_ordering_and_multiplicity():
    s = em.jacobian_spectrum(CFG.replace(lmax=4))
    assert s.labels == ((1, 1), (2, 1), (1, 2), (2, 2), (1, 3), (2, 3), (1, 4), (2, 4))
    np.testing.assert_array_equal(s.multiplicity, [3, 3, 5, 5, 7, 7, 9, 9])
    assert s.squared


def test_sigma2_formula_spot_values():
    s = em.jacobian_spectrum(CFG.replace(lmax=6)).values
    for i, (tau, l) in enumerate(em.mode_list(6)):
        f = em.radial_factor_f(tau, l, CFG.k * CFG.r1)
        want = CFG.k ** 4 * CFG.r1 ** 2 * abs(f) ** 2 * em.mode_volume_norm(tau, l, CFG)
        assert s[i] == pytest.approx(want, rel=1e-12)


def test_lambda_spot_value():
    lam = em.noise_spectrum(CFG).values
    assert lam[0] == pytest.approx(2.25 * J1_OF_15 ** 2, rel=1e-13)


def test_eta0_is_a_pure_scale():
    a = em.jacobian_spectrum(CFG).values
    b = em.jacobian_spectrum(CFG.replace(eta0=376.730313668)).values
    np.testing.assert_allclose(b, a * 376.730313668 ** 2, rtol=1e-13)


def test_wnr_zero_db_floor():
    cfg = CFG.replace(wnr_db=0.0)
    iso = em.noise_spectrum(CFG).values
    sw = em.white_noise_variance(cfg)
    assert sw == pytest.approx(iso.max(), rel=1e-14)
    lam = em.noise_spectrum(cfg).values
    np.testing.assert_allclose(lam, iso + sw, rtol=1e-14)
    assert np.all(lam[iso < sw] >= sw)


def test_explicit_white_noise_adds():
    iso = em.noise_spectrum(CFG).values
    lam = em.noise_spectrum(CFG.replace(sigma_w2=1e-4)).values
    np.testing.assert_allclose(lam, iso + 1e-4, rtol=1e-14)


def test_sigma2_log_slope_band():
    sp = em.em_spectra(CFG)
    ls = sp.log_sigma2.reshape(-1, 2)  # rows l = 1..40, columns tau
    steps = np.diff(ls[24:40], axis=0)  # l = 25..40
    assert np.all(steps < 0)
    assert np.all(steps < LN_RATIO + 0.1)
    assert np.all(steps > LN_RATIO - 0.5)


def test_sigma2_exponential_sandwich():
    sp = em.em_spectra(CFG)
    ls = sp.log_sigma2.reshape(-1, 2)
    for l in range(25, 41):
        rel = ls[l - 1] - ls[0]
        lo = l * LN_RATIO - 4 * math.log(l)
        hi = l * LN_RATIO + 4 * math.log(l)
        assert np.all((lo < rel) & (rel < hi))


def test_polarizations_track_each_other_below_kr0():
    sp = em.em_spectra(CFG)
    db = 10 * sp.log_sigma2.reshape(-1, 2) / math.log(10)
    assert np.all(np.abs(db[:10, 0] - db[:10, 1]) < 10)


def test_hilbert_schmidt_and_trace_class():
    sp = em.em_spectra(CFG)
    hs = sp.multiplicity * np.exp(sp.log_sigma2)
    tr = sp.multiplicity * np.exp(sp.log_lambda_iso)
    per_l_hs = hs[0::2] + hs[1::2]
    per_l_tr = tr[0::2] + tr[1::2]
    assert np.all(per_l_hs[15:] / per_l_hs[14:-1] < 1)
    assert em.diagnose(per_l_hs) == em.diagnose(per_l_tr) == "converged"


def test_no_nan_at_high_order():
    cfg = CFG.replace(lmax=60)
    sp = em.em_spectra(cfg)
    assert np.all(np.isfinite(sp.log_sigma2))
    assert np.all(np.isfinite(sp.log_lambda_iso))
    assert np.all(np.isfinite(sp.log_mu))
    mu = em.fisher_spectrum(cfg)
    assert np.all(np.isfinite(mu.values)) and np.all(mu.values > 0)
    assert np.all(np.isfinite(em.crb_L(cfg).values))


def test_underflow_flags_propagate():
    cfg = CFG.replace(lmax=200)
    lam = em.noise_spectrum(cfg)
    assert lam.underflow.any()
    assert np.all(lam.values[lam.underflow] == 0)
    assert np.all(np.isfinite(em.crb_L(cfg).values))
    with pytest.raises(OverflowError):
        em.fisher_spectrum(cfg)


def test_field_type_doubles_fisher():
    a = em.fisher_spectrum(CFG).values
    b = em.fisher_spectrum(CFG.replace(field="real")).values
    np.testing.assert_allclose(b, 2 * a, rtol=1e-14)


# --- CRB ---------------------------------------------------------------------


def test_crb_one_closed_form():
    s = em.jacobian_spectrum(CFG).values
    lam = em.noise_spectrum(CFG).values
    assert em.crb_L(CFG, 1).values[0] == pytest.approx(3 * (lam[0] / s[0] + lam[1] / s[1]), rel=1e-13)


def _crb_reference(cfg, L):
    """Linear-domain CRB(L) built only from scipy."""
    x1, x0 = cfg.k * cfg.r1, cfg.k * cfg.r0
    total, out = 0.0, []
    for l in range(1, L + 1):
        h = special.spherical_jn(l, x1) + 1j * special.spherical_yn(l, x1)
        dh = special.spherical_jn(l, x1, True) + 1j * special.spherical_yn(l, x1, True)
        f = [h, h / x1 + dh]
        j1 = special.spherical_jn(l, x1)
        g = [j1, j1 / x1 + special.spherical_jn(l, x1, True)]
        jl, jm, jp = (special.spherical_jn(n, x0) for n in (l, l - 1, l + 1))
        s1 = lambda n: cfg.r0 ** 3 / 2 * (  # noqa: E731
            special.spherical_jn(n, x0) ** 2
            - (math.cos(x0) / x0 if n == 0 else special.spherical_jn(n - 1, x0)) * special.spherical_jn(n + 1, x0)
        )
        sb = [cfg.r0 ** 3 / 2 * (jl * jl - jm * jp), ((l + 1) * s1(l - 1) + l * s1(l + 1)) / (2 * l + 1)]
        sw = em.white_noise_variance(cfg)
        for t in range(2):
            sig2 = cfg.k ** 4 * cfg.eta0 ** 2 * cfg.r1 ** 2 * abs(f[t]) ** 2 * sb[t]
            lam = cfg.E0 ** 2 * cfg.r1 ** 2 * g[t] ** 2 + sw
            total = math.fsum([total, (2 * l + 1) * lam / (cfg.field.factor * sig2)])
        out.append(total)
    return np.array(out)


@pytest.mark.parametrize("wnr", [None, -60.0, -20.0, 20.0])
def test_crb_matches_independent_reimplementation(wnr):
    cfg = CFG.replace(wnr_db=wnr) if wnr is not None else CFG
    got = em.crb_L(cfg).values
    np.testing.assert_allclose(got, _crb_reference(cfg, 40), rtol=1e-12)


def test_isotropic_crb_converges():
    c = em.crb_L(CFG).values
    assert abs(c[39] - c[29]) / c[39] < 1e-6
    assert em.crb_L(CFG).diagnosis == "converged"


@pytest.mark.parametrize("wnr", [-60.0, -20.0, 20.0])
def test_white_noise_crb_diverges(wnr):
    cfg = CFG.replace(wnr_db=wnr)
    inc = em.crb_increments(cfg)
    assert inc[34] > inc[24]
    assert em.crb_L(cfg).diagnosis == "diverging"


@pytest.mark.parametrize("cfg", [CFG, CFG.replace(sigma_w2=1e-9), CFG.replace(wnr_db=20.0)])
def test_crb_strictly_increasing(cfg):
    assert np.all(np.diff(em.crb_L(cfg).values) > 0)


def test_crb_ordered_by_white_noise():
    curves = [em.crb_L(CFG.replace(wnr_db=w)).values for w in (-60.0, -20.0, 20.0)]
    base = em.crb_L(CFG).values
    assert np.all(base < curves[0])
    assert np.all(curves[0] < curves[1]) and np.all(curves[1] < curves[2])


def test_crb_bounds():
    with pytest.raises(specfun.DomainError):
        em.crb_L(CFG, 41)
    with pytest.raises(specfun.DomainError):
        em.crb_L(CFG, 0)


# --- ratio diagnostic and regimes ---------------------------------------------


def test_ratio_grows_without_white_noise():
    rep = em.fisher_ratio_diagnostic(CFG)
    grows = np.all(rep.log_increments.reshape(-1, 2) > 0, axis=1)  # step l -> l + 1
    onset = 1 + next(i for i in range(grows.size) if grows[i:].all())
    assert CFG.k * CFG.r0 <= onset <= CFG.k * CFG.r0 + 10
    assert rep.regime == fi.TRACE_CLASS_CRB


def test_ratio_decays_with_white_noise():
    cfg = CFG.replace(wnr_db=-20.0)
    rep = em.fisher_ratio_diagnostic(cfg)
    per_l = rep.ratio.reshape(-1, 2)
    assert np.all(np.diff(per_l[20:], axis=0) < 0)
    assert rep.regime == fi.TRACE_CLASS_FIM


@pytest.mark.parametrize("cfg", [CFG, CFG.replace(wnr_db=-60.0), CFG.replace(wnr_db=-20.0), CFG.replace(sigma_w2=1.0)])
def test_ratio_report_agrees_with_regime_classify(cfg):
    rep = em.fisher_ratio_diagnostic(cfg)
    assert rep.regime == fi.regime_classify(em.jacobian_spectrum(cfg), em.noise_spectrum(cfg))


# --- configuration -------------------------------------------------------------


def test_config_defaults_and_roundtrip(tmp_path):
    d = CFG.to_dict()
    assert d["schema_version"] == 1 and d["field"] == "complex"
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    assert SourceConfig.from_json(p) == CFG


@pytest.mark.parametrize(
    "bad",
    [
        {"r0": 2.0},
        {"r0": 0.0},
        {"k": -1.0},
        {"E0": 0.0},
        {"eta0": float("nan")},
        {"lmax": 0},
        {"lmax": 2.5},
        {"field": "quaternion"},
        {"sigma_w2": -1.0},
        {"sigma_w2": 1.0, "wnr_db": -20.0},
        {"colour": "blue"},
        {"schema_version": 2},
    ],
)
def test_config_rejections(bad):
    with pytest.raises(ConfigError):
        SourceConfig.from_dict(bad)


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        SourceConfig.from_json(p)


def test_replace_switches_noise_input():
    c = CFG.replace(sigma_w2=0.5).replace(wnr_db=-20.0)
    assert c.sigma_w2 is None and c.wnr_db == -20.0


# --- CSV -----------------------------------------------------------------------


def test_spectrum_csv(tmp_path):
    cfg = CFG.replace(lmax=8)
    p = tmp_path / "s.csv"
    em.write_spectrum_csv(cfg, p, meta="invcrb test")
    lines = p.read_text().splitlines()
    assert lines[0] == "# invcrb test"
    assert lines[1].split(",") == em.SPECTRUM_COLUMNS + em.DB_COLUMNS
    rows = [r.split(",") for r in lines[2:]]
    assert len(rows) == 16
    lam = em.noise_spectrum(cfg).values
    for i, r in enumerate(rows):
        assert float(r[5]) == lam[i]
        assert float(r[8]) == pytest.approx(10 * math.log10(float(r[3])), abs=1e-4)


def test_curve_csv(tmp_path):
    p = tmp_path / "c.csv"
    curve = em.crb_L(CFG, 5)
    em.write_curve_csv(curve, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "L,crb,crb_db"
    assert [int(r.split(",")[0]) for r in lines[1:]] == [1, 2, 3, 4, 5]
    assert float(lines[-1].split(",")[1]) == curve.values[-1]


def test_db_formatting():
    assert em.fmt_db_log(-math.inf) == "-inf"
    assert em.fmt_db_log(math.log(100.0)) == "20"
    assert em.fmt_linear(0.0) == "0"
