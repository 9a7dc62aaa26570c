"""Command-line entry point: ``spdpool <subcommand> [--flags]``.

Exit status is 0 on success, 1 for usage or input errors and 2 for numerical
failures (including a gradient check that misses its threshold).
"""

import argparse
import contextlib
import logging
import sys
from dataclasses import asdict, fields, replace

from . import __version__
from .bench import (
    BENCH_COLUMNS,
    GRADCHECK_COLUMNS,
    PROFILES,
    SCHEMES,
    run_gradcheck,
    sqrt_bench,
    write_csv,
)
from .errors import DomainError, NumericalError, SpdPoolError
from .grad import parse_grad_scheme
from .io import (
    RunManifest,
    load_dataset,
    load_model,
    pipeline_from_kv,
    pipeline_to_kv,
    read_kv_file,
    save_dataset,
    save_model,
    spec_from_kv,
    train_config_from_kv,
    write_manifest,
)
from .layers import PipelineConfig
from .matfun import parse_matfun
from .train import (
    BENCHMARK_EPSILON,
    BENCHMARK_SPEC,
    BENCHMARK_TEST_PER_CLASS,
    BENCHMARK_TRAIN,
    SyntheticSpec,
    TrainConfig,
    evaluate,
    exponent_sweep,
    generate_split,
    train,
)

log = logging.getLogger("spdpool")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _list_of(conv):
    def parse(text):
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from None
    return parse


def _flag(key):
    return "--" + key.replace("_", "-")


# keys accepted both in config files and as flags
PIPELINE_KEYS = tuple(pipeline_to_kv(PipelineConfig()))
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
DATA_KEYS = tuple("data_" + f.name for f in fields(SyntheticSpec)) + ("data_test_per_class",)


def _add_config_flags(p, keys):
    g = p.add_argument_group("configuration (override --config)")
    for key in keys:
        if key == "seed":
            continue
        g.add_argument(_flag(key), dest="kv_" + key, metavar="VALUE", default=None)


def _collect_kv(args):
    kv = read_kv_file(args.config) if args.config else {}
    for name, value in vars(args).items():
        if name.startswith("kv_") and value is not None:
            kv[name[3:]] = value
    if getattr(args, "seed", None) is not None:
        kv["seed"] = str(args.seed)
    return kv


def _resolve(kv):
    """Benchmark defaults, overridden by the config file, overridden by flags."""
    base_cfg = PipelineConfig(epsilon=BENCHMARK_EPSILON)
    cfg = pipeline_from_kv(kv, base=base_cfg)
    tcfg = train_config_from_kv(kv, base=BENCHMARK_TRAIN)
    spec = spec_from_kv(kv, base=BENCHMARK_SPEC)
    test_per_class = int(kv.get("data_test_per_class", BENCHMARK_TEST_PER_CLASS))
    unknown = set(kv) - set(PIPELINE_KEYS) - set(TRAIN_KEYS) - set(DATA_KEYS)
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return cfg, tcfg, spec, test_per_class


@contextlib.contextmanager
def _output(path, newline=""):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline=newline) as fh:
            yield fh


def _manifest(args, command, config, seed, outputs):
    path = getattr(args, "manifest", None)
    if path is None:
        real = [o for o in outputs if o not in (None, "-")]
        if not real:
            return
        path = real[0] + ".manifest.json"
    write_manifest(path, RunManifest(command=command, config=config, seed=seed,
                                     version=__version__, outputs=[o for o in outputs if o]))


def _datasets(args, spec, seed, test_per_class):
    train_set = load_dataset(args.data) if args.data else generate_split(spec, seed, 0)
    if args.test_data:
        test_set = load_dataset(args.test_data)
    else:
        test_set = generate_split(replace(spec, samples_per_class=test_per_class), seed, 1)
    return train_set, test_set


# -- subcommands --------------------------------------------------------------

def cmd_sqrt_bench(args):
    for s in args.scheme:
        if s not in SCHEMES:
            raise UsageError(f"unknown scheme {s!r}; choose from {sorted(SCHEMES)}")
    rows = sqrt_bench(args.dim, args.cond, args.iterations, args.scheme, seed=args.seed,
                      scale_mode=args.scale_mode, timing=not args.no_timing)
    with _output(args.out) as fh:
        write_csv(fh, BENCH_COLUMNS, rows)
    _manifest(args, "sqrt-bench", dict(dim=args.dim, cond=args.cond, iterations=args.iterations,
                                       scheme=args.scheme, scale_mode=args.scale_mode),
              args.seed, [args.out])
    return EXIT_OK


def cmd_gradcheck(args):
    kind = parse_matfun(args.kind)
    if kind is None:
        raise UsageError("gradcheck needs a matrix function (sqrt, log or power:<p>)")
    scheme = parse_grad_scheme(args.scheme)
    all_ok = True
    rows = []
    for d in args.dim:
        row, ok = run_gradcheck(kind, scheme, d, profile=args.profile, h=args.h,
                                seed=args.seed, cond=args.cond)
        rows.append(row)
        all_ok &= ok
        print(
            f"{row['kind']} {row['scheme']} d={d} {row['profile']}: "
            f"max_rel_diff={row['max_rel_diff']:.3e} max_abs_diff={row['max_abs_diff']:.3e} "
            f"[{row['status']}]",
            file=sys.stderr if args.out in (None, "-") else sys.stdout,
        )
    if args.out:
        with _output(args.out) as fh:
            write_csv(fh, GRADCHECK_COLUMNS, rows)
    _manifest(args, "gradcheck", dict(kind=args.kind, scheme=args.scheme, dim=args.dim,
                                      profile=args.profile, h=args.h, cond=args.cond),
              args.seed, [args.out])
    return EXIT_OK if all_ok else EXIT_NUMERICAL


def cmd_train(args):
    kv = _collect_kv(args)
    cfg, tcfg, spec, tpc = _resolve(kv)
    train_set, test_set = _datasets(args, spec, tcfg.seed, tpc)
    model, result = train(train_set, cfg, tcfg)
    save_model(args.out, model)
    for path, ds in ((args.save_train, train_set), (args.save_test, test_set)):
        if path:
            save_dataset(path, ds)
    acc_train, acc_test = evaluate(model, train_set), evaluate(model, test_set)
    if args.metrics:
        rows = [dict(phase="init", epoch=i, loss=v) for i, v in enumerate(result.init_losses)]
        rows += [dict(phase="joint", epoch=i, loss=v) for i, v in enumerate(result.losses)]
        with _output(args.metrics) as fh:
            write_csv(fh, ("phase", "epoch", "loss"), rows)
    print(f"train_accuracy={acc_train!r}")
    print(f"test_accuracy={acc_test!r}")
    _manifest(args, "train", dict(kv=kv, pipeline=pipeline_to_kv(cfg), train=asdict(tcfg)),
              tcfg.seed, [args.out, args.metrics, args.save_train, args.save_test])
    return EXIT_OK


def cmd_eval(args):
    model = load_model(args.model)
    ds = load_dataset(args.data)
    acc = evaluate(model, ds)
    with _output(args.out) as fh:
        write_csv(fh, ("model", "data", "samples", "accuracy"),
                  [dict(model=args.model, data=args.data, samples=len(ds), accuracy=acc)])
    return EXIT_OK


def cmd_sweep(args):
    kv = _collect_kv(args)
    cfg, tcfg, spec, tpc = _resolve(kv)
    train_set, test_set = _datasets(args, spec, tcfg.seed, tpc)
    if any(not 0 < p <= 1 for p in args.p):
        raise UsageError("exponents must lie in (0, 1]")
    rows = [dict(p=p, accuracy=a) for p, a in exponent_sweep(train_set, test_set, args.p, tcfg, cfg)]
    with _output(args.out) as fh:
        write_csv(fh, ("p", "accuracy"), rows)
    _manifest(args, "sweep", dict(kv=kv, p=args.p), tcfg.seed, [args.out])
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="spdpool", description="Matrix-normalized second-order pooling tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p, out_help, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", default=None, help=out_help)
        p.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")

    p = sub.add_parser("sqrt-bench", help="residuals of iterative square roots vs. iterations")
    p.add_argument("--dim", type=_list_of(int), default=[64], help="comma-separated dimensions")
    p.add_argument("--cond", type=_list_of(float), default=[1e3], help="comma-separated condition numbers")
    p.add_argument("--iterations", type=_list_of(int), default=[0, 1, 5, 10, 20])
    p.add_argument("--scheme", type=_list_of(str), default=["db", "ns"], help="db, ns or both")
    p.add_argument("--scale-mode", choices=("frobenius", "none"), default="frobenius")
    p.add_argument("--no-timing", action="store_true", help="leave wall_time empty for reproducible output")
    common(p, "CSV path (default stdout)")
    p.set_defaults(func=cmd_sqrt_bench)

    p = sub.add_parser("gradcheck", help="compare a gradient scheme with finite differences")
    p.add_argument("--kind", default="sqrt", help="sqrt, log or power:<p>")
    p.add_argument("--scheme", default="lyapunov", help="lyapunov, svd, svd:<tau> or pass-through")
    p.add_argument("--dim", type=_list_of(int), default=[16])
    p.add_argument("--profile", choices=PROFILES, default="wellsep")
    p.add_argument("--cond", type=float, default=100.0)
    p.add_argument("--h", type=float, default=1e-5, help="finite-difference step")
    common(p, "CSV path (default: report on stderr only)")
    p.set_defaults(func=cmd_gradcheck)

    for name, func, helptext in (
        ("train", cmd_train, "fit projection and classifier on a dataset"),
        ("sweep", cmd_sweep, "classifier-only accuracy for several exponents p"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="key = value file; flags override it")
        p.add_argument("--data", default=None, help="training dataset (default: generated)")
        p.add_argument("--test-data", default=None, help="test dataset (default: generated)")
        if name == "train":
            common(p, "model file to write", seed_default=None)
            p.add_argument("--metrics", default=None, help="loss curve CSV")
            p.add_argument("--save-train", default=None, help="write the training set used")
            p.add_argument("--save-test", default=None, help="write the test set used")
        else:
            common(p, "CSV path (default stdout)", seed_default=None)
            p.add_argument("--p", type=_list_of(float), default=[1.0, 0.75, 0.5, 0.25])
        _add_config_flags(p, PIPELINE_KEYS + TRAIN_KEYS + DATA_KEYS)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="accuracy of a saved model on a saved dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train" and not args.out:
        parser.error("train requires --out")
    try:
        return args.func(args)
    except (NumericalError, DomainError) as exc:
        print(f"spdpool {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, SpdPoolError, OSError) as exc:
        print(f"spdpool {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
