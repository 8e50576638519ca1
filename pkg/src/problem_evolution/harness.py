"""Experiment driver: single runs, hidden-layer sweeps and equal-weight tables.

Every run gets its own directory containing ``runlog.csv``, ``champion.pbm``,
``champion_weights.csv`` and ``manifest.txt``. Sweeps and tables add a
``summary.csv`` and a long-format ``plotdata.csv`` at the top level. All of
these are byte-identical for an identical spec; wall-clock times go to a
separate ``timing.csv``.
"""

import csv
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from ._validation import check_layer_sizes, layer_label
from .complexity import log_complexity_2d
from .evolution import RUNLOG_COLUMNS, ConfigurationInfeasible, EvolutionConfig, evolve
from .network import save_weights_csv, weight_count
from .pbm import read_pbm, write_pbm

logger = logging.getLogger(__name__)

KINDS = ("single-run", "single-layer-sweep", "equal-weights-table")
SWEEP_CONFIGS = ((2, 2, 1), (2, 4, 1), (2, 8, 1), (2, 16, 1))
TABLE_CONFIGS = ((2, 2, 6, 1), (2, 3, 3, 2, 1), (2, 8, 1), (2, 5, 2, 1), (2, 4, 3, 1))
FLOAT_FMT = "{:.12g}"

# EvolutionConfig fields a spec may override
OVERRIDABLE = ("population_size", "mutation_rate", "stagnation_limit", "n_c", "epsilon",
               "max_epochs", "convergence", "shape_set", "init_scale", "max_generations")


def fmt(x):
    return FLOAT_FMT.format(x)


def derive_seed(base_seed, label, repeat):
    """Stable 64-bit seed for one (configuration, repeat) pair of a sweep."""
    digest = hashlib.blake2b(f"{int(base_seed)}|{label}|{int(repeat)}".encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class ExperimentSpec:
    kind: str = "single-layer-sweep"
    configs: tuple = SWEEP_CONFIGS
    dims: tuple = (20, 20)
    repeats: int = 3
    base_seed: int = 0
    out_dir: str = "runs"
    workers: int = 1
    overrides: dict = field(default_factory=dict)
    resume: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.configs = tuple(check_layer_sizes(c) for c in self.configs)
        if not self.configs:
            raise ValueError("configuration list is empty")
        if self.repeats is None or self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        unknown = set(self.overrides) - set(OVERRIDABLE)
        if unknown:
            raise ValueError(f"unknown overrides: {sorted(unknown)}")
        self.dims = tuple(self.dims)

    def config_for(self, sizes, repeat):
        seed = derive_seed(self.base_seed, layer_label(sizes), repeat)
        return EvolutionConfig(layer_sizes=sizes, dims=self.dims, seed=seed, **self.overrides)


@dataclass
class RunResult:
    run_dir: str
    label: str
    repeat: int
    status: str
    champion_complexity: float = math.nan
    champion_log_complexity: float = -math.inf
    generations: int = 0
    wall_time: float = 0.0
    error: str = ""


# ---------------------------------------------------------------------------
# single run


def write_runlog(log, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNLOG_COLUMNS)
        writer.writerows(log.rows(FLOAT_FMT))


def read_runlog(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(entries, path):
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key} = {value}\n")


def read_manifest(path):
    entries = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    return entries


def _config_entries(config):
    return [
        ("network", layer_label(config.layer_sizes)),
        ("weight_count", weight_count(config.layer_sizes)),
        ("dims", f"{config.dims[0]}x{config.dims[1]}"),
        ("seed", config.seed),
        ("population_size", config.population_size),
        ("mutation_rate", fmt(config.mutation_rate)),
        ("stagnation_limit", config.stagnation_limit),
        ("n_c", config.n_c),
        ("epsilon", fmt(config.epsilon)),
        ("max_epochs", config.max_epochs),
        ("convergence", config.convergence),
        ("shape_set", config.shape_set),
        ("max_generations", config.max_generations),
    ]


def _reuse(config, run_dir, repeat):
    """Result of a completed run in ``run_dir`` with exactly this config, else None."""
    path = os.path.join(run_dir, "manifest.txt")
    if not os.path.exists(path) or not os.path.exists(os.path.join(run_dir, "runlog.csv")):
        return None
    meta = read_manifest(path)
    expected = {k: str(v) for k, v in _config_entries(config) + [("repeat", repeat)]}
    if meta.get("status") != "ok" or any(meta.get(k) != v for k, v in expected.items()):
        return None
    _, log_c = rescore_champion(run_dir)
    return RunResult(run_dir, layer_label(config.layer_sizes), repeat, "ok", math.exp(log_c),
                     log_c, int(meta["generations"]))


def run_single(config, run_dir, repeat=0, resume=False):
    """Evolve once and write the run's artifacts into ``run_dir``.

    Returns a :class:`RunResult`; seeding infeasibility is reported with
    ``status="infeasible"`` and a manifest is still written. With ``resume``,
    a completed run already in ``run_dir`` with an identical configuration is
    read back instead of being recomputed.
    """
    label = layer_label(config.layer_sizes)
    if resume:
        reused = _reuse(config, run_dir, repeat)
        if reused is not None:
            logger.info("reusing completed run in %s", run_dir)
            return reused
    try:
        os.makedirs(run_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create run directory {run_dir}: {exc}") from exc
    entries = _config_entries(config) + [("repeat", repeat)]
    manifest = os.path.join(run_dir, "manifest.txt")
    start = time.perf_counter()
    try:
        log = evolve(config)
    except ConfigurationInfeasible as exc:
        write_manifest(entries + [("status", "infeasible"), ("error", str(exc))], manifest)
        return RunResult(run_dir, label, repeat, "infeasible",
                         wall_time=time.perf_counter() - start, error=str(exc))
    wall = time.perf_counter() - start
    champ = log.champion
    try:
        write_runlog(log, os.path.join(run_dir, "runlog.csv"))
        write_pbm(champ.image, os.path.join(run_dir, "champion.pbm"),
                  comment=f"{label} complexity {fmt(champ.complexity)}")
        save_weights_csv(champ.network, os.path.join(run_dir, "champion_weights.csv"))
        write_manifest(entries + [
            ("status", "ok"),
            ("generations", log.generations),
            ("cumulative_epochs", log.records[-1].cumulative_epochs),
            ("champion_complexity", fmt(champ.complexity)),
            ("champion_log_complexity", fmt(champ.log_complexity)),
        ], manifest)
    except OSError as exc:
        raise OSError(f"failed writing results to {run_dir}: {exc}") from exc
    return RunResult(run_dir, label, repeat, "ok", champ.complexity, champ.log_complexity,
                     log.generations, wall)


def rescore_champion(run_dir):
    """Re-read ``champion.pbm`` and return ``(complexity, log_complexity)``."""
    log_c = log_complexity_2d(read_pbm(os.path.join(run_dir, "champion.pbm")))
    return math.exp(log_c), log_c


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SummaryRow:
    configuration: str
    weight_count: int
    complexities: list
    log_complexities: list
    total_generations: int
    wall_time: float
    failures: int = 0

    @property
    def max_log_complexity(self):
        return max(self.log_complexities, default=-math.inf)

    @property
    def max_complexity(self):
        return math.exp(self.max_log_complexity) if self.log_complexities else math.nan


@dataclass
class SummaryTable:
    rows: list
    runs: list
    out_dir: Optional[str] = None

    SUMMARY_COLUMNS = ("configuration", "weight_count", "repeat_complexities",
                       "max_complexity", "max_log_complexity", "total_generations", "failures")

    def row(self, label):
        for r in self.rows:
            if r.configuration == label:
                return r
        raise KeyError(label)

    def ranking(self):
        """Configuration labels ordered by maximal complexity, best first."""
        return [r.configuration for r in
                sorted(self.rows, key=lambda r: r.max_log_complexity, reverse=True)]

    def write(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.SUMMARY_COLUMNS)
            for r in self.rows:
                writer.writerow([r.configuration, r.weight_count,
                                 ";".join(fmt(c) for c in r.complexities),
                                 fmt(r.max_complexity), fmt(r.max_log_complexity),
                                 r.total_generations, r.failures])

    def write_timing(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["configuration", "repeat", "wall_time_s"])
            for run in self.runs:
                writer.writerow([run.label, run.repeat, f"{run.wall_time:.3f}"])


def _run_job(job):
    config, run_dir, repeat, resume = job
    try:
        return run_single(config, run_dir, repeat, resume)
    except Exception as exc:  # one failed run must not sink the sweep
        logger.exception("run %s failed", run_dir)
        return RunResult(run_dir, layer_label(config.layer_sizes), repeat, "error",
                         error=f"{type(exc).__name__}: {exc}")


def _execute(spec):
    jobs = []
    for sizes in spec.configs:
        label = layer_label(sizes)
        for repeat in range(spec.repeats):
            run_dir = os.path.join(spec.out_dir, label, f"repeat-{repeat}")
            jobs.append((spec.config_for(sizes, repeat), run_dir, repeat, spec.resume))
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    rows = []
    for sizes in spec.configs:
        label = layer_label(sizes)
        mine = [r for r in results if r.label == label]
        ok = [r for r in mine if r.status == "ok"]
        rows.append(SummaryRow(label, weight_count(sizes),
                               [r.champion_complexity for r in ok],
                               [r.champion_log_complexity for r in ok],
                               sum(r.generations for r in ok),
                               sum(r.wall_time for r in mine),
                               len(mine) - len(ok)))
    return rows, results


def _finish(spec, rows, results, summary_name):
    table = SummaryTable(rows, results, spec.out_dir)
    table.write(os.path.join(spec.out_dir, summary_name))
    table.write_timing(os.path.join(spec.out_dir, "timing.csv"))
    emit_plot_data([r.run_dir for r in results], os.path.join(spec.out_dir, "plotdata.csv"))
    return table


def run_sweep(spec):
    """Run every configuration ``spec.repeats`` times; write summary and plot data."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows, results = _execute(spec)
    return _finish(spec, rows, results, "summary.csv")


def run_equal_weights(spec):
    """Like :func:`run_sweep`, with rows ranked by maximal complexity."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows, results = _execute(spec)
    rows.sort(key=lambda r: r.max_log_complexity, reverse=True)
    return _finish(spec, rows, results, "table.csv")


def emit_plot_data(run_dirs, out_path):
    """Merge per-run logs into one ``configuration,repeat,generation,best_complexity`` CSV.

    Runs without a ``runlog.csv`` are skipped with a warning. Returns the
    number of data rows written.
    """
    n = 0
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["configuration", "repeat", "generation", "best_complexity"])
        for run_dir in run_dirs:
            runlog = os.path.join(run_dir, "runlog.csv")
            if not os.path.exists(runlog):
                logger.warning("no runlog.csv in %s; skipped", run_dir)
                continue
            manifest_path = os.path.join(run_dir, "manifest.txt")
            meta = read_manifest(manifest_path) if os.path.exists(manifest_path) else {}
            label = meta.get("network", os.path.basename(os.path.dirname(run_dir)))
            repeat = meta.get("repeat", "0")
            for rec in read_runlog(runlog):
                writer.writerow([label, repeat, rec["generation"], rec["best_complexity"]])
                n += 1
    return n


def find_run_dirs(root):
    """Run directories (those holding a manifest) below ``root``, sorted."""
    found = []
    for dirpath, _, files in os.walk(root):
        if "manifest.txt" in files:
            found.append(dirpath)
    return sorted(found)

