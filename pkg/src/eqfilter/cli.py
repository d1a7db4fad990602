"""Command-line interface: ``eqfilter {sphere,second-order,selftest}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure (filter divergence or
chart breakdown), 3 I/O failure.
"""

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from typing import Optional

from .errors import EqFilterError, UsageError
from .output import emit_plot, ensure_dir, write_aggregate_csv, write_csv, write_summary_csv
from .selftest import run_all
from .sim import CONFIG_FIELDS, default_config, monte_carlo, run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_IO = 3

EXPERIMENTS = ("sphere", "second-order")
# keys accepted in a config file besides the ExperimentConfig fields
EXTRA_KEYS = ("seeds", "out", "workers")
_FIXED_KEYS = ("experiment",)


@dataclass(frozen=True)
class CliInvocation:
    subcommand: str
    config: Optional[object] = None
    n_seeds: int = 1
    workers: int = 1
    out_dir: str = "."
    samples: int = 1000
    selftest_seed: int = 12345


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="eqfilter", description="Equivariant filter experiments.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--duration", type=float)
        p.add_argument("--filters", help="comma-separated filter names")
        p.add_argument("--no-curvature", action="store_true",
                       help="disable the curvature term in every EqF")
        p.add_argument("--seeds", type=int, help="number of Monte Carlo seeds")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--out", help="output directory (default $EQF_OUT_DIR or .)")
        p.add_argument("--config", help="flat key = value configuration file")
    p = sub.add_parser("selftest", help="run the randomised invariant checks")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=12345)
    return parser


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in _FIXED_KEYS or (key not in CONFIG_FIELDS and key not in EXTRA_KEYS):
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def _coerce(key, text):
    """Convert config-file text to the type of ``ExperimentConfig.<key>``."""
    if key in ("seeds", "workers"):
        return int(text)
    if key == "out":
        return text
    default = CONFIG_FIELDS[key].default
    if key == "filters":
        return _split_filters(text)
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(float(s) for s in text.split(","))
    if default is None:
        return None if text.lower() == "none" else float(text)
    return text


def _split_filters(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def parse_cli(argv):
    """Resolve arguments into a :class:`CliInvocation`; raises UsageError."""
    args = build_parser().parse_args(argv)
    if args.subcommand == "selftest":
        if args.samples < 1:
            raise UsageError("--samples must be at least 1")
        return CliInvocation("selftest", samples=args.samples, selftest_seed=args.seed)

    file_values = {}
    if args.config:
        try:
            file_values = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    try:
        resolved = {k: _coerce(k, v) for k, v in file_values.items()}
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from None

    for key in ("seed", "dt", "duration", "seeds", "workers", "out"):
        value = getattr(args, key)
        if value is not None:
            resolved[key] = value
    if args.filters is not None:
        resolved["filters"] = _split_filters(args.filters)
    if args.no_curvature:
        resolved["curvature"] = False

    n_seeds = resolved.pop("seeds", 1)
    workers = resolved.pop("workers", 1)
    out_dir = resolved.pop("out", None) or os.environ.get("EQF_OUT_DIR") or "."
    if n_seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    try:
        cfg = default_config(args.subcommand, **resolved)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    return CliInvocation(args.subcommand, cfg, n_seeds, workers, out_dir)


def output_stem(cfg, n_seeds=1):
    if n_seeds > 1:
        return f"{cfg.experiment}_seeds{cfg.seed}-{cfg.seed + n_seeds - 1}"
    return f"{cfg.experiment}_seed{cfg.seed}"


def _print_summary(agg, out):
    cfg = agg.config
    for f in cfg.filters:
        parts = [f"{m}[steady]={agg.summary[f][m]['steady'][1]:.4g}" for m in cfg.metrics]
        print(f"  {f:<11} " + " ".join(parts), file=out)


def execute(inv, out=None):
    """Run a resolved invocation and return the exit status."""
    out = sys.stdout if out is None else out
    if inv.subcommand == "selftest":
        results = run_all(n=inv.samples, seed=inv.selftest_seed)
        for r in results:
            print(r.line(), file=out)
        failed = sum(not r.passed for r in results)
        print(f"{len(results) - failed}/{len(results)} checks passed", file=out)
        return EXIT_OK if failed == 0 else EXIT_RUNTIME

    cfg = inv.config
    stem = os.path.join(inv.out_dir, output_stem(cfg, inv.n_seeds))
    if inv.n_seeds == 1:
        log = run_experiment(cfg)
        ensure_dir(inv.out_dir)
        write_csv(log, stem + ".csv")
        emit_plot(log, stem + ".svg")
        print(f"{cfg.experiment} seed {cfg.seed}: {cfg.n_steps} steps", file=out)
        for f in cfg.filters:
            parts = [f"{m}[final]={log.metrics[f][m][-1]:.4g}" for m in cfg.metrics]
            print(f"  {f:<11} " + " ".join(parts), file=out)
        written = [stem + ".csv", stem + ".svg"]
    else:
        _, agg = monte_carlo(cfg, inv.n_seeds, workers=inv.workers)
        ensure_dir(inv.out_dir)
        write_aggregate_csv(agg, stem + "_median.csv")
        write_summary_csv(agg, stem + "_summary.csv")
        emit_plot(agg, stem + ".svg")
        print(f"{cfg.experiment}: {inv.n_seeds} seeds, median of per-seed averages", file=out)
        _print_summary(agg, out)
        written = [stem + "_median.csv", stem + "_summary.csv", stem + ".svg"]
    for path in written:
        print(f"wrote {path}", file=out)
    return EXIT_OK


def main(argv=None):
    try:
        inv = parse_cli(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return execute(inv)
    except EqFilterError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def config_as_text(cfg):
    """Render a config as ``key = value`` lines readable by :func:`read_config_file`."""
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name in _FIXED_KEYS:
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    sys.exit(main())
