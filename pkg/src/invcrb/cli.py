"""Command-line interface.

Exit codes: 0 success, 1 configuration or input error, 2 I/O error,
3 validation failure.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, emsource, fisher, mcsim
from .emsource import ConfigError, SourceConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_VALIDATION = 3

DEFAULT_WNR = "none,-60,-20,20"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load_config(args, **overrides):
    try:
        cfg = SourceConfig.from_json(args.config) if args.config else SourceConfig()
        changes = {}
        if getattr(args, "lmax", None) is not None:
            changes["lmax"] = args.lmax
        changes.update(overrides)
        return cfg.replace(**changes) if changes else cfg
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"invalid config: {exc}") from None


def _meta(command, cfg=None, **extra):
    parts = {"command": command, "version": __version__}
    if cfg is not None:
        parts["config"] = cfg.to_dict()
    parts.update(extra)
    return "invcrb " + json.dumps(parts, sort_keys=True, separators=(",", ":"))


def _emit(args, text):
    """Write ``text`` to --out, or to stdout when no path was given."""
    if not args.out or args.out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    print(f"wrote {args.out}", file=sys.stderr)


def _csv_text(meta, header, rows):
    buf = io.StringIO()
    buf.write("# " + meta + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _parse_wnr_list(text):
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        if item.lower() == "none":
            out.append(None)
            continue
        try:
            v = float(item)
        except ValueError:
            raise _Fail(EXIT_CONFIG, f"bad WNR value {item!r}") from None
        if not math.isfinite(v):
            raise _Fail(EXIT_CONFIG, f"bad WNR value {item!r}")
        out.append(v)
    return out


# ---------------------------------------------------------------------------


def cmd_spectrum(args):
    overrides = {}
    if args.wnr_db is not None:
        vals = _parse_wnr_list(args.wnr_db)
        if len(vals) != 1:
            raise _Fail(EXIT_CONFIG, "spectrum takes a single --wnr-db value")
        overrides = {"wnr_db": vals[0]} if vals[0] is not None else {"wnr_db": None, "sigma_w2": None}
    cfg = _load_config(args, **overrides)
    header = emsource.SPECTRUM_COLUMNS + emsource.DB_COLUMNS
    text = _csv_text(
        _meta("spectrum", cfg, sigma_w2_resolved=emsource.white_noise_variance(cfg)),
        header,
        emsource.spectrum_rows(cfg, with_db=True),
    )
    _emit(args, text)
    return EXIT_OK


def cmd_crb(args):
    cfg = _load_config(args)
    wnrs = _parse_wnr_list(args.wnr_db if args.wnr_db is not None else DEFAULT_WNR)
    if None not in wnrs:
        wnrs = [None] + wnrs
    rows = []
    for w in wnrs:
        c = cfg.replace(wnr_db=w) if w is not None else cfg.replace(wnr_db=None, sigma_w2=None)
        curve = emsource.crb_L(c)
        label = "none" if w is None else f"{w:g}"
        for L, v in zip(curve.truncation, curve.values):
            rows.append([int(L), label, emsource.fmt_linear(v), emsource.fmt_db_log(math.log(v))])
    text = _csv_text(_meta("crb", cfg, wnr_db=[w for w in wnrs]), ["L", "wnr_db", "crb", "crb_db"], rows)
    _emit(args, text)
    return EXIT_OK


def _trace_text(sigma, lam, meta, field=fisher.ScalarField.COMPLEX):
    rep = fisher.regime_report(sigma, lam)
    ft = fisher.fisher_trace(sigma, lam)
    mu = fisher.fisher_eigenvalues(sigma, lam, field)
    crb = fisher.crb_curve(mu)
    ends = np.cumsum(mu.multiplicity) - 1
    lines = [
        "# " + meta,
        f"regime: {rep.regime}",
        f"fisher_trace: total={ft.total:.16e} diagnosis={rep.fisher}",
        f"crb_tail: total={crb.values[-1]:.16e} diagnosis={rep.crb}",
        "mode,label,fisher_partial,crb_partial",
    ]
    for i, lab in enumerate(mu.labels):
        lines.append(
            f"{i},{'/'.join(str(x) for x in lab)},"
            f"{ft.partial_sums[i]:.16e},{crb.values[ends[i]]:.16e}"
        )
    return "\n".join(lines) + "\n"


def cmd_trace(args):
    if args.sigma_csv or args.lambda_csv:
        if not (args.sigma_csv and args.lambda_csv):
            raise _Fail(EXIT_CONFIG, "--sigma-csv and --lambda-csv go together")
        try:
            sigma = fisher.read_spectrum_csv(args.sigma_csv, squared=args.squared)
            lam = fisher.read_spectrum_csv(args.lambda_csv)
        except OSError as exc:
            raise _Fail(EXIT_IO, f"cannot read spectrum: {exc}") from None
        except fisher.CsvFormatError as exc:
            raise _Fail(EXIT_CONFIG, str(exc)) from None
        meta = _meta("trace", None, sigma_csv=args.sigma_csv, lambda_csv=args.lambda_csv)
        field = fisher.ScalarField.COMPLEX
    else:
        overrides = {}
        if args.wnr_db is not None:
            vals = _parse_wnr_list(args.wnr_db)
            if len(vals) != 1:
                raise _Fail(EXIT_CONFIG, "trace takes a single --wnr-db value")
            overrides = {"wnr_db": vals[0]} if vals[0] is not None else {"wnr_db": None, "sigma_w2": None}
        cfg = _load_config(args, **overrides)
        sigma = emsource.jacobian_spectrum(cfg)
        lam = emsource.noise_spectrum(cfg)
        meta = _meta("trace", cfg)
        field = cfg.field
    try:
        text = _trace_text(sigma, lam, meta, field)
    except (fisher.PairingError, fisher.SingularNoiseError) as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None
    _emit(args, text)
    return EXIT_OK


def cmd_mc(args):
    cfg = _load_config(args)
    lmax = args.mc_lmax
    trials = args.trials
    if trials < 100:
        raise _Fail(EXIT_CONFIG, "--trials must be >= 100")
    if args.r < 1:
        raise _Fail(EXIT_CONFIG, "--r must be >= 1")
    seed = args.seed
    rng = mcsim.RngSpec(seed)
    X = mcsim.sample_noise_realizations(cfg, lmax, args.n_directions, trials, rng.substream(0))
    labels = mcsim.mode_index(lmax)
    pairs = [(labels.index((1, 1, 0)), labels.index((2, 3, 1)))] if lmax >= 3 else []
    cov = mcsim.empirical_covariance(X, mcsim.noise_targets(cfg, lmax), labels, pairs)
    truth = np.ones(args.r)
    est = mcsim.simulate_linear_estimation(cfg, truth, args.r, trials, rng.substream(1))

    checks = []
    checks.append(("noise mean", bool(np.all(cov.bias_z < 3))))
    checks.append(("noise variance", bool(np.all(np.abs(cov.var_z) < 3))))
    checks.append(("noise pseudo-covariance", bool(np.all(np.abs(cov.pseudo) < 3 * cov.pseudo_se))))
    for (a, b), (val, se) in cov.cross.items():
        checks.append((f"cross-covariance {labels[a]} {labels[b]}", bool(abs(val) < 3 * se)))
    checks.append(("estimator bias", bool(np.all(est.bias_z < 3))))
    checks.append(("estimator variance", bool(np.all(np.abs(est.var_z) < 3))))

    buf = io.StringIO()
    buf.write("# " + _meta("mc", cfg, seed=seed, trials=trials, lmax=lmax, n_directions=args.n_directions, r=args.r) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "target", "emp_mean_re", "emp_mean_im", "emp_var", "stderr", "z_score"])
    rows = []
    for rep in (cov, est):
        for i in range(len(rep.labels)):
            rows.append([
                len(rows),
                f"{rep.target_var[i]:.16e}",
                f"{(rep.mean[i] - rep.target_mean[i]).real:.16e}",
                f"{(rep.mean[i] - rep.target_mean[i]).imag:.16e}",
                f"{rep.var[i]:.16e}",
                f"{rep.var_se[i]:.16e}",
                f"{rep.var_z[i]:.6g}",
            ])
    w.writerows(rows)
    _emit(args, buf.getvalue())
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} (3 SE)", file=sys.stderr)
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_VALIDATION


def cmd_green_check(args):
    cfg = _load_config(args)
    lmax = args.lmax if args.lmax is not None else 40
    kr_max = args.kr_max if args.kr_max is not None else cfg.k * cfg.r1
    if kr_max / cfg.k > cfg.r1 * (1 + 1e-12):
        raise _Fail(EXIT_CONFIG, f"--kr-max {kr_max:g} exceeds k r1 = {cfg.k * cfg.r1:g}")
    n = args.n_pairs
    if n < 0:
        raise _Fail(EXIT_CONFIG, "--n-pairs must be >= 0")
    gen = mcsim.RngSpec(args.seed).generator()
    rad = kr_max / cfg.k

    def point():
        v = gen.standard_normal(3)
        return v / np.linalg.norm(v) * rad * gen.uniform() ** (1.0 / 3.0)

    pairs = [(point(), point()) for _ in range(n)]
    if n == 0:
        print("warning: n_pairs = 0, nothing to check", file=sys.stderr)
    try:
        if n == 0 and math.e * kr_max / 2.0 >= lmax:
            raise mcsim.PreconditionError("lmax too small")
        err = mcsim.green_identity_check(cfg, lmax, pairs)
    except mcsim.PreconditionError as exc:
        raise _Fail(EXIT_CONFIG, f"precondition failed: {exc}") from None
    ok = err < 1e-6
    text = "# " + _meta("green-check", cfg, lmax=lmax, n_pairs=n, seed=args.seed, kr_max=kr_max) + "\n"
    text += f"max_relative_error,{err:.6e}\nresult,{'pass' if ok else 'fail'}\n"
    _emit(args, text)
    return EXIT_OK if ok else EXIT_VALIDATION


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="invcrb", description="Fisher information and Cramer-Rao bounds for the spherical inverse source problem.")
    p.add_argument("--version", action="version", version=f"invcrb {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, lmax_help="highest multipole order (overrides config)"):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--lmax", type=int, help=lmax_help)
        sp.add_argument("--out", help="output path (default: standard output)")

    sp = sub.add_parser("spectrum", help="per-mode sigma^2, lambda and Fisher values")
    common(sp)
    sp.add_argument("--wnr-db", help="white-noise ratio in dB, or 'none'")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("crb", help="CRB(L) curves for several white-noise ratios")
    common(sp)
    sp.add_argument("--wnr-db", help=f"comma separated WNR list in dB (default {DEFAULT_WNR})")
    sp.set_defaults(func=cmd_crb)

    sp = sub.add_parser("trace", help="Fisher trace, CRB tail and regime")
    common(sp)
    sp.add_argument("--wnr-db", help="white-noise ratio in dB, or 'none'")
    sp.add_argument("--sigma-csv", help="singular values as a spectrum CSV")
    sp.add_argument("--lambda-csv", help="noise eigenvalues as a spectrum CSV")
    sp.add_argument("--squared", action="store_true", help="the sigma CSV holds sigma^2")
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("mc", help="Monte Carlo checks of noise statistics and estimator efficiency")
    sp.add_argument("--config", help="JSON configuration file")
    sp.add_argument("--lmax", dest="mc_lmax", type=int, default=5, help="highest order sampled (default 5)")
    sp.add_argument("--trials", type=int, default=1000, help="realizations and estimation trials (>= 100)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-directions", type=int, default=1000, help="plane waves per noise realization")
    sp.add_argument("--r", type=int, default=10, help="retained parameters in the estimator")
    sp.add_argument("--out", help="TrialReport CSV path (default: standard output)")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("green-check", help="mode sum against the closed-form Green dyadic")
    common(sp, "truncation order of the mode sum (default 40)")
    sp.add_argument("--n-pairs", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--kr-max", type=float, help="largest k|r| of sampled points (default k r1)")
    sp.set_defaults(func=cmd_green_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) in ("mc",):
        args.lmax = None
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"invcrb: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"invcrb: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invcrb: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"invcrb: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
