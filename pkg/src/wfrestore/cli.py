"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical
failure. Every subcommand accepts ``--config FILE`` with ``key=value`` lines
(``#`` starts a comment); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np
from scipy import fft as sfft

from . import asymptotics as asym
from . import imageio, operators, plotting
from . import solver as slv
from .fields import CATALOG, catalog_field, vector_catalog
from .framelet import (
    BANK_NAMES,
    ConfigurationError,
    NumericalError,
    analyze,
    build_bank,
    synthesize,
    verify_uep,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
UEP_TOL = 1e-12


class CLIError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1), not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CLIError(f"{self.prog}: {message}", EXIT_CONFIG)


# ---------------------------------------------------------------------------
# argument parsing


def _positive_float(s):
    x = _float(s)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return x


def _nonneg_float(s):
    x = _float(s)
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {s}")
    return x


def _float(s):
    try:
        x = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"must be finite, got {s}")
    return x


def _positive_int(s):
    try:
        x = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return x


def _delta(s):
    x = _float(s)
    if not 0 <= x < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {s}")
    return x


def _common(p):
    p.add_argument("--config", metavar="FILE", help="key=value defaults; command-line flags override them")
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")


def _bank_arg(p, dest="bank", default="linear", help_="filter bank"):
    p.add_argument(f"--{dest.replace('_', '-')}", dest=dest, choices=BANK_NAMES, default=default,
                   help=f"{help_} (default {default})")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="wfrestore", description="Wavelet-frame image restoration and asymptotic checks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("restore", help="restore a degraded image")
    _common(p)
    p.add_argument("--input", required=True, help="observed image (PGM)")
    p.add_argument("--output", required=True, help="restored image (PGM)")
    p.add_argument("--op", default="denoise",
                   help="denoise | deblur:KERNEL.txt | inpaint:MASK.pgm (default denoise)")
    p.add_argument("--no-normalize", action="store_true", help="use the blur kernel file as is")
    p.add_argument("--model", choices=slv.VARIANTS, default="general", help="model variant (default general)")
    p.add_argument("--q", type=int, choices=(1, 2), default=None, help="exponent of the second term")
    p.add_argument("--nu1", type=_nonneg_float, default=0.2, help="first sparsity weight (default 0.2)")
    p.add_argument("--nu2", type=_nonneg_float, default=0.2, help="second sparsity weight (default 0.2)")
    p.add_argument("--balance", type=_nonneg_float, default=None,
                   help="weight of ||(I - W W^T) v||^2 for --model balanced (default 1)")
    p.add_argument("--mu", type=_positive_float, default=1.0, help="penalty parameter (default 1)")
    p.add_argument("--delta", type=_delta, default=0.9, help="multiplier step in [0, 1) (default 0.9)")
    p.add_argument("--shrink", choices=slv.SHRINK_MODES, default="anisotropic", help="shrinkage mode")
    p.add_argument("--scheme", choices=slv.SCHEMES, default="joint",
                   help="ADMM splitting for the two-variable models (default joint)")
    p.add_argument("--method", choices=("admm", "proxgrad"), default="admm",
                   help="solver for synthesis/balanced (default admm)")
    _bank_arg(p, "bank", help_="bank of W'")
    p.add_argument("--bank2", choices=BANK_NAMES, default=None, help="bank of W'' (default: same as --bank)")
    p.add_argument("--max-iter", type=_positive_int, default=500, help="iteration cap (default 500)")
    p.add_argument("--tol", type=_positive_float, default=1e-6, help="relative u-change tolerance (default 1e-6)")
    p.add_argument("--diag", help="per-iteration diagnostics CSV")
    p.add_argument("--truth", help="ground-truth PGM; enables PSNR reporting")
    p.add_argument("--plot", help="PNG with observed/restored (and truth) panels")
    p.add_argument("--plot-diag", help="PNG with objective and residual curves")

    p = sub.add_parser("transform", help="undecimated transform of an image")
    _common(p)
    p.add_argument("--input", help="PGM image (default: random 64x64 image from --seed)")
    _bank_arg(p)
    p.add_argument("--levels", type=_positive_int, default=1, help="decomposition levels (default 1)")
    p.add_argument("--roundtrip", action="store_true", help="print the max reconstruction error")
    p.add_argument("--out", help="CSV with per-band statistics")
    p.add_argument("--plot", help="PNG with one panel per band")

    p = sub.add_parser("uep-check", help="check the unitary extension identities")
    _common(p)
    _bank_arg(p)
    p.add_argument("--grid", type=_positive_int, default=64, help="frequency grid points per axis (default 64)")

    p = sub.add_parser("converge", help="discrete-to-continuum convergence studies")
    _common(p)
    p.add_argument("--study", choices=("commute", "derivative", "energy"), required=True)
    _bank_arg(p)
    p.add_argument("--n-min", type=_positive_int, default=4, help="smallest resolution exponent (default 4)")
    p.add_argument("--n-max", type=_positive_int, default=8, help="largest resolution exponent (default 8)")
    p.add_argument("--field", choices=CATALOG, default="trig", help="scalar test field (default trig)")
    p.add_argument("--vfield", choices=("independent", "matched", "zero"), default="independent",
                   help="vector test field for the energy study (default independent)")
    p.add_argument("--p", type=float, default=1.0, help="first energy exponent in [1, 2] (default 1)")
    p.add_argument("--q", type=float, default=1.0, help="second energy exponent in [1, 2] (default 1)")
    p.add_argument("--nu1", type=_nonneg_float, default=1.0, help="energy weight nu1 (default 1)")
    p.add_argument("--nu2", type=_nonneg_float, default=1.0, help="energy weight nu2 (default 1)")
    p.add_argument("--out", help="CSV output")
    p.add_argument("--plot", help="PNG of log2 errors against n")

    p = sub.add_parser("psnr", help="PSNR between two images")
    _common(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--peak", type=_positive_float, default=255.0, help="peak value (default 255)")

    p = sub.add_parser("degrade", help="make observed data f = A u + noise")
    _common(p)
    p.add_argument("--input", required=True, help="clean PGM image")
    p.add_argument("--op", default="denoise", help="denoise | deblur:KERNEL.txt | inpaint:MASK.pgm")
    p.add_argument("--no-normalize", action="store_true", help="use the blur kernel file as is")
    p.add_argument("--sigma", type=_nonneg_float, default=2.0, help="noise standard deviation (default 2)")
    p.add_argument("--output", required=True, help="observed image (PGM)")
    p.add_argument("--plot", help="PNG with clean and observed panels")

    p = sub.add_parser("synth", help="write a synthetic test image")
    _common(p)
    p.add_argument("--kind", choices=imageio.SYNTH_KINDS, default="shapes")
    p.add_argument("--size", type=_positive_int, default=64, help="side length, a power of two >= 8")
    p.add_argument("--output", required=True)
    return ap


def read_config(path) -> dict:
    """Parse ``key=value`` lines; keys may use dashes or underscores."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CLIError(f"cannot read config file {path}: {exc.strerror}", EXIT_IO) from None
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{no}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise CLIError(f"{path}:{no}: empty key")
        out[key.replace("-", "_")] = val
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    conf = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    extra = []
    for key, val in conf.items():
        if key not in known:
            raise CLIError(f"{args.config}: unknown key {key!r} for command {args.command}")
        act = known[key]
        if not act.option_strings:
            raise CLIError(f"{args.config}: positional argument {key!r} cannot be set from a config file")
        flag = act.option_strings[0]
        if act.nargs == 0:
            if val.lower() in ("1", "true", "yes", "on"):
                extra.append(flag)
            elif val.lower() not in ("0", "false", "no", "off"):
                raise CLIError(f"{args.config}: {key} expects a boolean, got {val!r}")
        else:
            extra += [flag, val]
    # file values first so explicit flags, parsed later, override them
    return parser.parse_args([args.command] + extra + argv[1:])


# ---------------------------------------------------------------------------
# helpers


def _read_image(path):
    try:
        return imageio.read_pgm(path)
    except FileNotFoundError:
        raise CLIError(f"input file not found: {path}", EXIT_IO) from None
    except imageio.PGMError as exc:
        raise CLIError(str(exc), EXIT_IO) from None
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _parse_op(spec: str, shape, normalize=True) -> operators.DegradationOp:
    kind, _, arg = spec.partition(":")
    if kind == "denoise":
        if arg:
            raise CLIError("--op denoise takes no argument")
        return operators.identity(shape)
    if kind == "deblur":
        if not arg:
            raise CLIError("--op deblur needs a kernel file: deblur:KERNEL.txt")
        if not os.path.exists(arg):
            raise CLIError(f"kernel file not found: {arg}", EXIT_IO)
        try:
            k = operators.load_kernel(arg, normalize)
        except OSError as exc:
            raise CLIError(f"cannot read {arg}: {exc.strerror}", EXIT_IO) from None
        return operators.blur(k, shape)
    if kind == "inpaint":
        if not arg:
            raise CLIError("--op inpaint needs a mask file: inpaint:MASK.pgm")
        m = _read_image(arg) != 0
        if m.shape != tuple(shape):
            raise CLIError(f"mask shape {m.shape} differs from image shape {tuple(shape)}")
        return operators.mask(m)
    raise CLIError(f"unknown --op {spec!r}; expected denoise, deblur:FILE or inpaint:FILE")


def _save(path, fn, *a, **kw):
    """Run the writer ``fn(*a, **kw)``, reporting failures against ``path``."""
    try:
        fn(*a, **kw)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


# ---------------------------------------------------------------------------
# commands


def cmd_restore(args, out):
    f = _read_image(args.input)
    truth = _read_image(args.truth) if args.truth else None
    if truth is not None and truth.shape != f.shape:
        raise CLIError(f"truth shape {truth.shape} differs from input shape {f.shape}")
    A = _parse_op(args.op, f.shape, not args.no_normalize)
    kw = dict(
        nu1=args.nu1, nu2=args.nu2, mu=args.mu, delta=args.delta, shrink_mode=args.shrink,
        max_iter=args.max_iter, tol=args.tol, scheme=args.scheme, method=args.method,
    )
    if args.q is not None:
        kw["q"] = args.q
    if args.balance is not None:
        kw["balance"] = args.balance
    if args.model == "packet" and args.bank2 not in (None, args.bank):
        raise CLIError("--model packet uses one bank; drop --bank2")
    try:
        spec = slv.preset(args.model, **kw)
    except ConfigurationError as exc:
        raise CLIError(str(exc)) from None
    u, diag, _ = slv.solve(f, A, spec, args.bank, args.bank2, truth=truth)
    _save(args.output, imageio.write_pgm, u, args.output)
    if args.diag:
        _save(args.diag, diag.write_csv, args.diag)
    if args.plot:
        panels = {"observed": f, "restored": u}
        if truth is not None:
            panels = {"truth": truth, f"observed {imageio.psnr(f, truth):.2f} dB": f,
                      f"restored {imageio.psnr(u, truth):.2f} dB": u}
        _save(args.plot, plotting.image_panels, panels, args.plot)
    if args.plot_diag:
        _save(args.plot_diag, plotting.diagnostics, diag.rows, args.plot_diag)
    status = "converged" if diag.converged else "reached max-iter"
    print(f"iterations={len(diag.rows)} ({status}) objective={diag.rows[-1][1]:.10e}", file=out)
    if truth is not None:
        print(f"PSNR={imageio.psnr(imageio.quantize(u), truth):.4f} dB", file=out)


def cmd_transform(args, out):
    bank = build_bank(args.bank)
    if args.input:
        img = _read_image(args.input)
    else:
        img = np.random.default_rng(args.seed).uniform(0, 255, (64, 64))
    stack = analyze(img, bank, args.levels)
    print(f"bank={bank.name} levels={args.levels} bands={len(stack)} shape={img.shape[0]}x{img.shape[1]}", file=out)
    if args.roundtrip:
        err = float(np.max(np.abs(synthesize(stack, bank) - img)))
        print(f"roundtrip max error {err:.3e}", file=out)
    if args.out:
        rows = [
            (str(lab), float(np.mean(b)), float(np.sqrt(np.mean(b**2))), float(np.max(np.abs(b))))
            for lab, b in zip(stack.labels, stack.data)
        ]
        _save(args.out, imageio.write_csv, args.out, ("band", "mean", "rms", "max_abs"), rows)
    if args.plot:
        _save(args.plot, plotting.coefficient_bands, stack.data, args.plot, labels=[str(lab) for lab in stack.labels])


def cmd_uep_check(args, out):
    res = verify_uep(build_bank(args.bank), args.grid)
    verdict = "PASS" if res < UEP_TOL else "FAIL"
    print(f"{verdict} residual<1e-12" if res < UEP_TOL else f"{verdict} residual={res:.3e}", file=out)
    print(f"bank={args.bank} residual={res:.3e}", file=out)
    return EXIT_OK if res < UEP_TOL else EXIT_NUMERIC


def cmd_converge(args, out):
    if args.n_min < 4 or args.n_max <= args.n_min:
        raise CLIError("need 4 <= --n-min < --n-max")
    if args.n_max > 10:
        raise CLIError("--n-max above 10 is not supported (dense quadrature grid)")
    if not (1 <= args.p <= 2 and 1 <= args.q <= 2):
        raise CLIError("--p and --q must lie in [1, 2]")
    bank = build_bank(args.bank)
    u = catalog_field(args.field)
    ns = list(range(args.n_min, args.n_max + 1))
    if args.study == "commute":
        errs = [asym.check_commutation(u, bank, n) for n in ns]
        rows = [(n, e) for n, e in zip(ns, errs)]
        if args.out:
            _save(args.out, imageio.write_csv, args.out, ("n", "sup_err"), rows)
        for n, e in rows:
            print(f"n={n} sup_err={e:.3e}", file=out)
        ok = max(errs) <= 1e-6
        print(f"{'PASS' if ok else 'FAIL'} max commutation error {max(errs):.3e} (tolerance 1e-6)", file=out)
        if args.plot:
            _save(args.plot, plotting.convergence, ns, {args.field: errs}, args.plot, ylabel="commutation error")
        return EXIT_OK
    if args.study == "derivative":
        table = asym.check_derivative_convergence(u, bank, ns)
        if args.out:
            _save(args.out, table.write_csv, args.out)
        for b in table.bands:
            print(f"band {b} order {table.orders[b - 1]} rate {table.rate(b):.3f}", file=out)
        if args.plot:
            series = {f"band {b}": table.errors[:, i] for i, b in enumerate(table.bands)}
            _save(args.plot, plotting.convergence, ns, series, args.plot, ylabel="sup error")
        return EXIT_OK
    v = vector_catalog(args.vfield, bank, u)
    report = asym.pointwise_convergence_study(u, v, bank, ns, args.p, args.q, args.nu1, args.nu2)
    if args.out:
        _save(args.out, report.write_csv, args.out)
    for n, en, err in zip(report.ns, report.En, report.errors):
        print(f"n={n} E_n={en:.10e} abs_err={err:.3e}", file=out)
    print(f"E={report.E:.10e} fitted rate {report.rate:.3f}", file=out)
    if args.plot:
        _save(args.plot, plotting.convergence, ns, {"|E_n - E|": report.errors}, args.plot, ylabel="energy error")
    return EXIT_OK


def cmd_psnr(args, out):
    a, b = _read_image(args.a), _read_image(args.b)
    if a.shape != b.shape:
        raise CLIError(f"shape mismatch: {a.shape} vs {b.shape}")
    print(f"{imageio.psnr(a, b, args.peak):.4f}", file=out)


def cmd_degrade(args, out):
    x = _read_image(args.input)
    A = _parse_op(args.op, x.shape, not args.no_normalize)
    f = imageio.add_gaussian_noise(A.apply(x), args.sigma, args.seed)
    _save(args.output, imageio.write_pgm, f, args.output)
    if args.plot:
        _save(args.plot, plotting.image_panels, {"clean": x, "observed": imageio.quantize(f)}, args.plot)
    print(f"wrote {args.output} PSNR={imageio.psnr(imageio.quantize(f), x):.4f} dB", file=out)


def cmd_synth(args, out):
    try:
        img = imageio.synth_image(args.kind, args.size, args.seed)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    _save(args.output, imageio.write_pgm, img, args.output)
    print(f"wrote {args.output}", file=out)


COMMANDS = {
    "restore": cmd_restore,
    "transform": cmd_transform,
    "uep-check": cmd_uep_check,
    "converge": cmd_converge,
    "psnr": cmd_psnr,
    "degrade": cmd_degrade,
    "synth": cmd_synth,
}


def _threads():
    val = os.environ.get("FRAMELET_THREADS")
    if val is None:
        return 1
    try:
        n = int(val)
    except ValueError:
        raise CLIError(f"FRAMELET_THREADS must be a positive integer, got {val!r}") from None
    if n < 1:
        raise CLIError(f"FRAMELET_THREADS must be a positive integer, got {val!r}")
    return n


def main(argv=None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    try:
        if not argv:
            build_parser().print_help(out)
            return EXIT_CONFIG
        args = parse_args(argv)
        with sfft.set_workers(_threads()):
            code = COMMANDS[args.command](args, out)
        return EXIT_OK if code is None else code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
