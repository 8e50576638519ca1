"""Command-line entry point: ``problem-evolution {run,sweep,table,plotdata}``.

Any flag may also be given in a ``--config`` file of ``key = value`` lines,
where keys are flag names without the leading dashes (``net``, ``seed``,
``dims``, ``pop``, ...). Flags on the command line win over the file.
``net`` may list several networks separated by commas or spaces.
"""

import argparse
import logging
import os
import sys

from ._validation import layer_label, parse_dims, parse_layer_sizes
from .harness import (
    SWEEP_CONFIGS,
    TABLE_CONFIGS,
    ExperimentSpec,
    emit_plot_data,
    find_run_dirs,
    fmt,
    run_equal_weights,
    run_single,
    run_sweep,
)

# flag name -> (EvolutionConfig field, parser)
EVOLUTION_FLAGS = {
    "pop": ("population_size", int),
    "mutation": ("mutation_rate", float),
    "stagnation": ("stagnation_limit", int),
    "nc": ("n_c", int),
    "epsilon": ("epsilon", float),
    "max-epochs": ("max_epochs", int),
    "max-generations": ("max_generations", int),
    "convergence": ("convergence", str),
    "shapes": ("shape_set", str),
    "init-scale": ("init_scale", float),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("_", "-")] = value
    return values


def _parse_nets(value):
    if isinstance(value, list):
        parts = [p for item in value for p in item.replace(",", " ").split()]
    else:
        parts = value.replace(",", " ").split()
    return tuple(parse_layer_sizes(p) for p in parts)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file mirroring these flags")
    common.add_argument("--seed", type=int, help="base RNG seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dims", help="image size HxW, e.g. 20x20")
    common.add_argument("--net", action="append", help="network, e.g. 2-4-3-1 (repeatable)")
    common.add_argument("--repeats", type=int)
    common.add_argument("--workers", type=int)
    for flag, (dest, typ) in EVOLUTION_FLAGS.items():
        common.add_argument(f"--{flag}", type=typ, dest=dest)
    common.add_argument("--resume", action="store_true",
                        help="reuse completed runs with an identical configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="problem-evolution",
        description="Evolve the most complex binary image a network can fully recognise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one evolution run")
    sub.add_parser("sweep", parents=[common], help="single-hidden-layer sweep")
    sub.add_parser("table", parents=[common], help="equal-weight configuration table")
    plot = sub.add_parser("plotdata", parents=[common],
                          help="merge run logs into one long-format CSV")
    plot.add_argument("run_dirs", nargs="*", help="run directories (default: all under --out)")
    plot.add_argument("--output", help="CSV path (default: <out>/plotdata.csv)")
    return parser


def resolve(args):
    """Merge config-file values under command-line flags."""
    file_values = read_config_file(args.config) if args.config else {}
    known = {"seed", "out", "dims", "net", "repeats", "workers", "resume", *EVOLUTION_FLAGS}
    unknown = set(file_values) - known
    if unknown:
        raise ValueError(f"unknown keys in {args.config}: {sorted(unknown)}")

    def pick(flag, dest, typ):
        value = getattr(args, dest)
        if value is None and flag in file_values:
            value = typ(file_values[flag])
        return value

    settings = {
        "seed": pick("seed", "seed", int),
        "out": pick("out", "out", str),
        "dims": pick("dims", "dims", str),
        "repeats": pick("repeats", "repeats", int),
        "workers": pick("workers", "workers", int),
        "net": args.net if args.net else file_values.get("net"),
        "resume": args.resume or file_values.get("resume", "false").lower() in ("1", "true", "yes"),
    }
    overrides = {}
    for flag, (dest, typ) in EVOLUTION_FLAGS.items():
        value = pick(flag, dest, typ)
        if value is not None:
            overrides[dest] = value
    return settings, overrides


def _spec(kind, settings, overrides, default_nets, default_out):
    nets = _parse_nets(settings["net"]) if settings["net"] else default_nets
    return ExperimentSpec(
        kind=kind,
        configs=nets,
        dims=parse_dims(settings["dims"]) if settings["dims"] else (20, 20),
        repeats=3 if settings["repeats"] is None else settings["repeats"],
        base_seed=settings["seed"] or 0,
        out_dir=settings["out"] or default_out,
        workers=settings["workers"] or 1,
        overrides=overrides,
        resume=settings["resume"],
    )


def _print_table(table):
    print("configuration,weight_count,max_complexity,max_log_complexity,failures")
    for row in table.rows:
        print(f"{row.configuration},{row.weight_count},{fmt(row.max_complexity)},"
              f"{fmt(row.max_log_complexity)},{row.failures}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings, overrides = resolve(args)
        if args.command == "run":
            spec = _spec("single-run", settings, overrides, ((2, 4, 1),), "run")
            if len(spec.configs) != 1:
                raise ValueError("'run' takes exactly one --net")
            config = spec.config_for(spec.configs[0], 0)
            config.seed = spec.base_seed
            result = run_single(config, spec.out_dir)
            if result.status != "ok":
                print(f"infeasible: {result.error}", file=sys.stderr)
                return 3
            print(f"{layer_label(config.layer_sizes)} champion complexity "
                  f"{fmt(result.champion_complexity)} after {result.generations} generations "
                  f"-> {result.run_dir}")
        elif args.command in ("sweep", "table"):
            if args.command == "sweep":
                spec = _spec("single-layer-sweep", settings, overrides, SWEEP_CONFIGS, "sweep")
                table = run_sweep(spec)
            else:
                spec = _spec("equal-weights-table", settings, overrides, TABLE_CONFIGS, "table")
                table = run_equal_weights(spec)
            _print_table(table)
        else:
            root = settings["out"] or "."
            run_dirs = args.run_dirs or find_run_dirs(root)
            if not run_dirs:
                raise ValueError(f"no run directories found under {root}")
            output = args.output or os.path.join(root, "plotdata.csv")
            n = emit_plot_data(run_dirs, output)
            print(f"{n} rows -> {output}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
