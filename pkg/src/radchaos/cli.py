"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 bad input, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bounds import MultivariateInput, dw_bound_univariate, first_chaos_exact, multivariate_bound, report_row
from .chaos import HypercubeFunction, RademacherLaw, q_table, set_exact_cap, walsh_decompose
from .coupling import exchangeability_check, mehler_check, regression_check
from .errors import CheckFailure, InputError, ResourceError
from .kernel import read_kernel, write_kernel
from .sampling import SamplerSpec, sample_Q

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def format_csv(rows: list[dict]) -> str:
    """CSV text with a ``# generated`` timestamp line; columns in first-seen order."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    buf.write(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def emit(args, name: str, rows: list[dict]) -> None:
    text = format_csv(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.csv").write_text(text)
        write_resolved_config(args, out / f"{name}.config")
    else:
        sys.stdout.write(text)


def write_resolved_config(args, path: Path) -> None:
    lines = []
    for k, v in sorted(vars(args).items()):
        if k in ("func", "config") or v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k}={v}")
    path.write_text("\n".join(lines) + "\n")


def read_config(path: str) -> dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise InputError(f"config line without '=': {ln!r}")
        k, v = ln.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _law_from_args(args, dim: int | None = None) -> RademacherLaw:
    if getattr(args, "law", None):
        return RademacherLaw.from_file(args.law)
    if getattr(args, "symmetric", None):
        return RademacherLaw.symmetric(args.symmetric)
    if dim is not None:
        return RademacherLaw.symmetric(dim)
    raise InputError("give --law FILE or --symmetric N")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_verify(args) -> int:
    checks = ex.run_verify(args.suite, args.seed, args.trials)
    emit(args, f"verify_{args.suite}", [c.as_row() for c in checks])
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"FAILED {c.suite}/{c.name}: deviation {c.deviation:.3e} > {c.tolerance:.1e}", file=sys.stderr)
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_bound_univariate(args) -> int:
    f = read_kernel(args.kernel)
    law = _law_from_args(args, f.dim)
    if f.order == 1 and args.first_chaos:
        rep = first_chaos_exact(f, law)
    else:
        rep = dw_bound_univariate(f, law, mc_samples=args.mc_samples, seed=args.seed)
    row = report_row(rep)
    row["holds"] = rep.holds
    emit(args, "bound_univariate", [row])
    print(rep.summary(), file=sys.stderr)
    return EXIT_CHECK if rep.holds is False else EXIT_OK


def cmd_bound_multivariate(args) -> int:
    kernels = [read_kernel(p) for p in args.kernels]
    law = _law_from_args(args, max(f.dim for f in kernels))
    cov = np.loadtxt(args.sigma, ndmin=2) if args.sigma else None
    rep = multivariate_bound(MultivariateInput(kernels, law, cov, args.m2, args.m3))
    rows = [{"statistic": "rhs", "value": rep.rhs, "mode": "exact"},
            {"statistic": "E_S_hs", "value": rep.extra["E_S_hs"], "mode": rep.modes["E_S_hs"]},
            {"statistic": "term1", "value": rep.extra["term1"], "mode": "exact"},
            {"statistic": "term2", "value": rep.extra["term2"], "mode": "exact"}]
    for i, r in enumerate(rep.extra["rho"]):
        rows.append({"statistic": f"rho_{i + 1}", "value": r, "mode": "exact"})
    d = len(kernels)
    for i in range(d):
        for j in range(d):
            rows.append({"statistic": f"var_gamma_{i + 1}{j + 1}", "value": rep.extra["var_gamma"][i, j], "mode": "exact"})
            rows.append({"statistic": f"cov_sq_minus_2cov2_{i + 1}{j + 1}",
                         "value": rep.extra["cov_sq_minus_2cov2"][i, j], "mode": "exact"})
    emit(args, "bound_multivariate", rows)
    print(rep.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_decompose(args) -> int:
    values = np.loadtxt(args.table, ndmin=1)
    n = int(round(math.log2(len(values)))) if len(values) else -1
    if n < 1 or len(values) != 1 << n:
        raise InputError(f"table length {len(values)} is not a power of two >= 2")
    law = _law_from_args(args, n)
    if law.dim != n:
        raise InputError(f"law has {law.dim} coordinates, table has 2^{n} entries")
    dec = walsh_decompose(HypercubeFunction(n, values), law)
    out = sys.stdout
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        out = open(Path(args.out) / "decomposition.txt", "w")
    try:
        out.write(f"constant {dec.constant!r}\n")
        for k in dec.orders:
            write_kernel(dec.kernels[k], out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_couple(args) -> int:
    f = read_kernel(args.kernel)
    law = _law_from_args(args, f.dim)
    f = f.with_dim(law.dim) if f.dim < law.dim else f
    F = q_table(f, law)
    rows = []
    ok = True
    for t in args.t:
        dev = mehler_check(F, t, law)
        rows.append({"check": "mehler", "t": t, "deviation": dev, "limit": 0.0, "pass": dev <= 1e-10})
        passed, rep = exchangeability_check(f, t, law)
        rows.append({"check": "exchangeability", "t": t, "deviation": rep["pair_law_asymmetry"],
                     "limit": 0.0, "pass": passed})
        ok &= dev <= 1e-10 and passed
    reg = regression_check(f, law, args.grid)
    for r in reg["rows"]:
        rows.append({"check": f"regression-{r.check}", "t": r.t, "deviation": r.deviation,
                     "limit": r.limit, "pass": ""})
    for key, ratios in reg["ratios"].items():
        for r in ratios:
            good = 8 <= r <= 12
            ok &= good
            rows.append({"check": f"regression-{key}-decade-ratio", "t": "", "deviation": r, "limit": 10.0, "pass": good})
    if reg["richardson"] is not None:
        rel = abs(reg["richardson"] / reg["rho"] - 1.0) if reg["rho"] else abs(reg["richardson"])
        ok &= rel <= 1e-4
        rows.append({"check": "regression-c-richardson", "t": "", "deviation": rel, "limit": reg["rho"], "pass": rel <= 1e-4})
    emit(args, "couple", rows)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_counterexample(args) -> int:
    rows = ex.run_counterexample(args.q, args.N, args.samples, args.seed, args.threads)
    emit(args, "counterexample", rows)
    return EXIT_OK


def cmd_dejong(args) -> int:
    rows = ex.run_dejong(args.order, args.N, args.samples, args.seed, args.generator, args.threads)
    emit(args, "dejong", rows)
    return EXIT_OK


def cmd_multivariate(args) -> int:
    rows = ex.run_multivariate(args.n, args.samples, args.seed, args.components, args.threads)
    emit(args, "multivariate", rows)
    return EXIT_OK


def cmd_sample(args) -> int:
    f = read_kernel(args.kernel)
    if args.gaussian:
        spec = SamplerSpec.gaussian(args.seed)
    else:
        spec = SamplerSpec.rademacher(_law_from_args(args, f.dim), args.seed)
    x = sample_Q(f, spec, args.samples, args.threads)
    if args.binary:
        data = x.astype("<f8").tobytes()
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "samples.bin").write_bytes(data)
        else:
            sys.stdout.buffer.write(data)
        return EXIT_OK
    text = "".join(format(v, ".17g") + "\n" for v in x)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "samples.txt").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_law(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--law", help="file with one success probability per line")
    g.add_argument("--symmetric", type=int, metavar="N", help="symmetric law on N coordinates")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults, so a flag
    # given before the subcommand is not reset by the subparser
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(0))
    common.add_argument("--threads", type=int, default=d(1))
    common.add_argument("--out", default=d(None), help="output directory (default: stdout)")
    common.add_argument("--exact-cap", type=int, default=d(24), help="largest N enumerated exactly")
    common.add_argument("--config", default=d(None), help="key=value file supplying defaults")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="radchaos", parents=[_global_flags(suppress=False)],
                                     description="Rademacher chaos: exact checks, bounds and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="run invariant suites")
    p.add_argument("suite", nargs="?", default="all", help="algebra, chaos, coupling, bounds or all")
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_verify)

    pb = sub.add_parser("bound", parents=[common], help="evaluate normal-approximation bounds")
    bsub = pb.add_subparsers(dest="which", required=True)
    p = bsub.add_parser("univariate", parents=[common])
    p.add_argument("--kernel", required=True)
    _add_law(p)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--first-chaos", action="store_true", help="use the closed forms for order-1 kernels")
    p.set_defaults(func=cmd_bound_univariate)
    p = bsub.add_parser("multivariate", parents=[common])
    p.add_argument("--kernels", nargs="+", required=True)
    _add_law(p)
    p.add_argument("--sigma", help="whitespace-separated target covariance matrix")
    p.add_argument("--m2", type=float, default=1.0)
    p.add_argument("--m3", type=float, default=1.0)
    p.set_defaults(func=cmd_bound_multivariate)

    p = sub.add_parser("decompose", parents=[common], help="Walsh decomposition of a value table")
    p.add_argument("--table", required=True, help="2^N values, one per line, bitmask order")
    _add_law(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("couple", parents=[common], help="Mehler, exchangeability and regression checks")
    p.add_argument("--kernel", required=True)
    _add_law(p)
    p.add_argument("--t", type=float_list, default=[0.1, 0.5, 1.0])
    p.add_argument("--grid", type=float_list, default=[1e-2, 1e-3, 1e-4])
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("counterexample", parents=[common], help="influence counterexample sweep")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--N", type=int_list, default=[10, 100, 1000, 5000])
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("dejong", parents=[common], help="fourth moment plus influence sweep")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--N", type=int_list, default=[10, 40, 160])
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--generator", choices=["full", "graph"], default="full")
    p.set_defaults(func=cmd_dejong)

    p = sub.add_parser("multivariate", parents=[common], help="two-component convergence sweep")
    p.add_argument("--n", type=int_list, default=[16, 64, 256, 1024])
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--components", choices=["sweep", "counterexample"], default="sweep")
    p.set_defaults(func=cmd_multivariate)

    p = sub.add_parser("sample", parents=[common], help="draw samples of Q_d(f; xi)")
    p.add_argument("--kernel", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--law")
    g.add_argument("--symmetric", type=int, metavar="N")
    g.add_argument("--gaussian", action="store_true")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--binary", action="store_true", help="little-endian float64 output")
    p.set_defaults(func=cmd_sample)
    return parser


_LIST_KEYS = {"N": int_list, "n": int_list, "t": float_list, "grid": float_list, "kernels": str.split}


def _given(argv: list[str], key: str) -> bool:
    flag = "--" + key.replace("_", "-")
    return any(a == flag or a.startswith(flag + "=") for a in argv)


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if not args.config:
        return args
    for key, raw in read_config(args.config).items():
        if not hasattr(args, key) or key in ("func", "config", "command", "which"):
            raise InputError(f"unknown config key {key!r}")
        # command-line values win over the config file
        if _given(argv, key):
            continue
        conv = _LIST_KEYS.get(key)
        current = getattr(args, key)
        try:
            if conv is not None:
                value = conv(raw)
            elif isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise InputError(f"bad value for config key {key!r}: {raw!r}") from exc
        setattr(args, key, value)
    return args


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        set_exact_cap(args.exact_cap)
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
