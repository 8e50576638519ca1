"""Steady-state genetic algorithm over binary images.

Individuals are images the configured network can fully recognise. Each
generation two parents are drawn uniformly, recombined with a single straight
cut, mutated, and each child is offered to the population. A child enters
only if it is more complex than the current worst member, is not already
present, and the network (warm-started from the most similar parent's
weights) can be trained to recognise it. It then replaces the worst member.
The run ends after ``stagnation_limit`` generations without an admission.
"""

import enum
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_image, check_layer_sizes
from .complexity import SHAPE_SETS, log_complexity_2d
from .network import (
    CONVERGENCE_MODES,
    Network,
    pixel_coordinates,
    train_to_recognition,
)

logger = logging.getLogger(__name__)


class ConfigurationInfeasible(RuntimeError):
    """The network could not recognise enough initial images to seed a population."""


@dataclass
class EvolutionConfig:
    layer_sizes: tuple = (2, 4, 1)
    dims: tuple = (20, 20)
    population_size: int = 100
    mutation_rate: float = 0.0025
    stagnation_limit: int = 100
    n_c: int = 1000
    epsilon: float = 0.01
    max_epochs: int = 20000
    convergence: str = "recognized"
    shape_set: str = "all"
    init_scale: float = 0.5
    seed: int = 0
    max_generations: Optional[int] = None

    def __post_init__(self):
        self.layer_sizes = check_layer_sizes(self.layer_sizes)
        self.dims = tuple(int(d) for d in self.dims)
        self.validate()

    def validate(self):
        if len(self.dims) != 2 or min(self.dims) < 1:
            raise ValueError(f"dims must be two positive integers, got {self.dims}")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError(f"mutation_rate must be in [0, 1], got {self.mutation_rate}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        for name in ("population_size", "stagnation_limit", "n_c", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_generations is not None and self.max_generations < 0:
            raise ValueError("max_generations must be non-negative")
        if self.convergence not in CONVERGENCE_MODES:
            raise ValueError(f"convergence must be one of {CONVERGENCE_MODES}")
        if self.shape_set not in SHAPE_SETS:
            raise ValueError(f"shape_set must be one of {SHAPE_SETS}")

    def train(self, net, img):
        return train_to_recognition(net, img, self.n_c, self.epsilon, self.max_epochs,
                                    self.convergence)


@dataclass
class Genotype:
    """An image, its complexity, and weights that fully recognise it."""

    image: np.ndarray
    log_complexity: float
    network: Network

    @property
    def complexity(self):
        return math.exp(self.log_complexity)

    @property
    def key(self):
        return self.image.tobytes()


class Population:
    """Fixed-capacity set of genotypes with unique images."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.members = []
        self._keys = set()

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, image):
        return np.ascontiguousarray(image, dtype=np.uint8).tobytes() in self._keys

    @property
    def full(self):
        return len(self.members) >= self.capacity

    def add(self, genotype):
        if self.full:
            raise ValueError("population is at capacity")
        if genotype.key in self._keys:
            raise ValueError("image already in population")
        self.members.append(genotype)
        self._keys.add(genotype.key)

    def worst_index(self):
        # first occurrence on ties keeps replacement deterministic
        return min(range(len(self.members)), key=lambda i: self.members[i].log_complexity)

    def worst(self):
        return self.members[self.worst_index()]

    def best(self):
        return max(self.members, key=lambda g: g.log_complexity)

    def replace_worst(self, genotype):
        i = self.worst_index()
        self._keys.discard(self.members[i].key)
        self.members[i] = genotype
        self._keys.add(genotype.key)

    def log_complexities(self):
        return np.array([g.log_complexity for g in self.members])


# ---------------------------------------------------------------------------
# operators


def split_image(dims, angle, offset, invert=False):
    """Image split by a straight line into two homogeneous regions.

    Pixels whose normalised coordinate projects onto the direction
    ``(cos angle, sin angle)`` beyond ``offset`` get color 1, the rest 0
    (swapped when ``invert``).
    """
    coords = pixel_coordinates(dims)
    proj = coords[:, 0] * math.cos(angle) + coords[:, 1] * math.sin(angle)
    img = (proj > offset).reshape(dims).astype(np.uint8)
    return 1 - img if invert else img


def initial_image(dims, rng, max_draws=100):
    """Random two-region image: a random line through the image splits the colors."""
    dims = tuple(dims)
    for _ in range(max_draws):
        angle = rng.uniform(0.0, math.pi)
        offset = rng.uniform(-math.sqrt(2.0), math.sqrt(2.0))
        img = split_image(dims, angle, offset, invert=bool(rng.random() < 0.5))
        if 0 < img.sum() < img.size:
            return img
    img = np.zeros(dims, dtype=np.uint8)
    img[:, dims[1] // 2 :] = 1
    return img


def _image_of(p):
    return p.image if isinstance(p, Genotype) else check_image(p)


def recombine(p1, p2, rng):
    """One-point crossover along a random row or column boundary.

    ``child1`` takes the part of ``p1`` before the cut and the part of ``p2``
    after it; ``child2`` takes the complementary parts.
    """
    a, b = _image_of(p1), _image_of(p2)
    if a.shape != b.shape:
        raise ValueError(f"parent shapes differ: {a.shape} vs {b.shape}")
    height, width = a.shape
    axes = [ax for ax, n in ((0, height), (1, width)) if n > 1]
    if not axes:
        return a.copy(), b.copy()
    axis = axes[rng.integers(2)] if len(axes) == 2 else axes[0]
    cut = int(rng.integers(1, a.shape[axis]))
    c1, c2 = a.copy(), b.copy()
    if axis == 0:
        c1[cut:], c2[cut:] = b[cut:], a[cut:]
    else:
        c1[:, cut:], c2[:, cut:] = b[:, cut:], a[:, cut:]
    return c1, c2


def mutate(img, rate, rng):
    """Flip each pixel independently with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    img = check_image(img)
    return img ^ (rng.random(img.shape) < rate).astype(np.uint8)


def most_similar_parent(child, p1, p2):
    """Parent with the smaller Hamming distance to ``child``; ties go to ``p1``."""
    child = check_image(child)
    d1 = np.count_nonzero(child != p1.image)
    d2 = np.count_nonzero(child != p2.image)
    return p2 if d2 < d1 else p1


class Gate(enum.Enum):
    ADMITTED = "admitted"
    LOW_COMPLEXITY = "low_complexity"
    DUPLICATE = "duplicate"
    NOT_RECOGNIZED = "not_recognized"


class Admission(NamedTuple):
    gate: Gate
    epochs: int
    log_complexity: float


def try_admit(pop, candidate, parent_network, config):
    """Offer ``candidate`` to a full population.

    Gates run cheapest first, so candidates failing the complexity or
    duplicate check never cost any training. On success the worst member is
    replaced in place. ``parent_network`` is copied, never modified.
    """
    candidate = check_image(candidate)
    log_c = log_complexity_2d(candidate, config.shape_set)
    if log_c <= pop.worst().log_complexity:
        return Admission(Gate.LOW_COMPLEXITY, 0, log_c)
    if candidate in pop:
        return Admission(Gate.DUPLICATE, 0, log_c)
    outcome = config.train(parent_network, candidate)
    if not outcome.recognized:
        return Admission(Gate.NOT_RECOGNIZED, outcome.epochs_run, log_c)
    pop.replace_worst(Genotype(candidate, log_c, outcome.network))
    return Admission(Gate.ADMITTED, outcome.epochs_run, log_c)


def seed_population(config, rng):
    """Fill a population with recognisable two-region images.

    Returns ``(population, epochs_spent)``. Raises
    :class:`ConfigurationInfeasible` after ``10 * population_size``
    consecutive candidates are rejected (untrainable or duplicate).
    """
    pop = Population(config.population_size)
    epochs = 0
    failures = 0
    limit = 10 * config.population_size
    while not pop.full:
        img = initial_image(config.dims, rng)
        net = Network.random(config.layer_sizes, rng, config.init_scale)
        if img in pop:
            failures += 1
        else:
            outcome = config.train(net, img)
            epochs += outcome.epochs_run
            if outcome.recognized:
                pop.add(Genotype(img, log_complexity_2d(img, config.shape_set), outcome.network))
                failures = 0
                continue
            failures += 1
        if failures >= limit:
            raise ConfigurationInfeasible(
                f"{failures} consecutive seeding candidates rejected for "
                f"{'-'.join(map(str, config.layer_sizes))} at {config.dims}; "
                f"{len(pop)}/{config.population_size} seeded"
            )
    return pop, epochs


# ---------------------------------------------------------------------------
# run


class GenerationRecord(NamedTuple):
    generation: int
    best_log_complexity: float
    min_log_complexity: float
    mean_complexity: float
    admissions: int
    cumulative_epochs: int

    @property
    def best_complexity(self):
        return math.exp(self.best_log_complexity)

    @property
    def min_complexity(self):
        return math.exp(self.min_log_complexity)


RUNLOG_COLUMNS = ("generation", "best_complexity", "best_log_complexity", "min_complexity",
                  "mean_complexity", "admissions", "cumulative_epochs")


@dataclass
class RunLog:
    config: EvolutionConfig
    records: list = field(default_factory=list)
    champion: Optional[Genotype] = None
    population: Optional[Population] = None

    @property
    def generations(self):
        """Number of generations run after seeding."""
        return self.records[-1].generation if self.records else 0

    def rows(self, fmt="{:.12g}"):
        for r in self.records:
            yield [str(r.generation), fmt.format(r.best_complexity),
                   fmt.format(r.best_log_complexity), fmt.format(r.min_complexity),
                   fmt.format(r.mean_complexity), str(r.admissions), str(r.cumulative_epochs)]


def _record(generation, pop, admissions, cumulative_epochs):
    logs = pop.log_complexities()
    return GenerationRecord(generation, float(logs.max()), float(logs.min()),
                            float(np.mean(np.exp(logs))), admissions, cumulative_epochs)


@dataclass
class _State:
    config: EvolutionConfig
    rng: np.random.Generator
    population: Population
    log: RunLog
    generation: int = 0
    stagnation: int = 0
    cumulative_epochs: int = 0


def _step(state):
    """Run one generation; returns the number of admissions."""
    cfg, rng, pop = state.config, state.rng, state.population
    if len(pop) > 1:
        i, j = rng.choice(len(pop), size=2, replace=False)
    else:
        i = j = 0
    p1, p2 = pop.members[i], pop.members[j]
    children = recombine(p1, p2, rng)
    children = [mutate(c, cfg.mutation_rate, rng) for c in children]
    admissions = 0
    for child in children:
        parent = most_similar_parent(child, p1, p2)
        result = try_admit(pop, child, parent.network, cfg)
        state.cumulative_epochs += result.epochs
        admissions += result.gate is Gate.ADMITTED
    state.generation += 1
    state.stagnation = 0 if admissions else state.stagnation + 1
    state.log.records.append(_record(state.generation, pop, admissions, state.cumulative_epochs))
    return admissions


def _done(state):
    cfg = state.config
    if state.stagnation >= cfg.stagnation_limit:
        return True
    return cfg.max_generations is not None and state.generation >= cfg.max_generations


def _new_state(config):
    rng = np.random.default_rng(config.seed)
    pop, epochs = seed_population(config, rng)
    state = _State(config, rng, pop, RunLog(config), cumulative_epochs=epochs)
    state.log.records.append(_record(0, pop, 0, epochs))
    return state


def evolve(config, checkpoint=None, checkpoint_every=0, on_generation=None):
    """Run the genetic algorithm to stagnation and return the :class:`RunLog`.

    Parameters
    ----------
    config : EvolutionConfig
    checkpoint : path, optional
        If the file exists the run resumes from it; if ``checkpoint_every > 0``
        the state is written there every that many generations and at the end.
    checkpoint_every : int
    on_generation : callable, optional
        Called as ``on_generation(generation, population)`` after seeding
        (generation 0) and after every generation. Must not modify the population.
    """
    if checkpoint is not None and os.path.exists(checkpoint):
        state = load_checkpoint(checkpoint)
        if state.config != config:
            raise ValueError(f"checkpoint {checkpoint} was written for a different config")
    else:
        state = _new_state(config)
    if on_generation is not None:
        on_generation(state.generation, state.population)
    while not _done(state):
        _step(state)
        if on_generation is not None:
            on_generation(state.generation, state.population)
        if checkpoint is not None and checkpoint_every and state.generation % checkpoint_every == 0:
            save_checkpoint(state, checkpoint)
    if checkpoint is not None and checkpoint_every:
        save_checkpoint(state, checkpoint)
    state.log.champion = state.population.best()
    state.log.population = state.population
    logger.info("run finished after %d generations, best log complexity %.6g",
                state.generation, state.log.champion.log_complexity)
    return state.log


# ---------------------------------------------------------------------------
# checkpoints


def _image_to_rows(img):
    return ["".join(str(int(v)) for v in row) for row in img]


def _rows_to_image(rows):
    return np.array([[int(ch) for ch in row] for row in rows], dtype=np.uint8)


def save_checkpoint(state, path):
    """Write population images, weights, run counters and RNG state as JSON."""
    cfg = asdict(state.config)
    doc = {
        "config": cfg,
        "generation": state.generation,
        "stagnation": state.stagnation,
        "cumulative_epochs": state.cumulative_epochs,
        "rng": state.rng.bit_generator.state,
        "records": [list(r) for r in state.log.records],
        "population": [
            {"image": _image_to_rows(g.image), "log_complexity": g.log_complexity,
             "params": g.network.params.tolist()}
            for g in state.population
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    cfg = doc["config"]
    cfg["layer_sizes"] = tuple(cfg["layer_sizes"])
    cfg["dims"] = tuple(cfg["dims"])
    config = EvolutionConfig(**cfg)
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng"]
    pop = Population(config.population_size)
    for m in doc["population"]:
        pop.add(Genotype(_rows_to_image(m["image"]), m["log_complexity"],
                         Network(config.layer_sizes, np.array(m["params"]))))
    log = RunLog(config, [GenerationRecord(*r) for r in doc["records"]])
    return _State(config, rng, pop, log, doc["generation"], doc["stagnation"],
                  doc["cumulative_epochs"])


# ---------------------------------------------------------------------------
# estimator


class ProblemEvolution(BaseEstimator):
    """Estimator wrapper around :func:`evolve`.

    ``fit`` searches for the most complex image a network of the given
    shape can fully recognise. No training data is needed; ``X`` is ignored.

    Attributes
    ----------
    run_log_ : RunLog
    champion_ : Genotype
    max_complexity_ : float
    n_generations_ : int
    """

    def __init__(self, layer_sizes="2-4-1", dims=(20, 20), population_size=100,
                 mutation_rate=0.0025, stagnation_limit=100, n_c=1000, epsilon=0.01,
                 max_epochs=20000, convergence="recognized", shape_set="all",
                 init_scale=0.5, random_state=0, max_generations=None):
        self.layer_sizes = layer_sizes
        self.dims = dims
        self.population_size = population_size
        self.mutation_rate = mutation_rate
        self.stagnation_limit = stagnation_limit
        self.n_c = n_c
        self.epsilon = epsilon
        self.max_epochs = max_epochs
        self.convergence = convergence
        self.shape_set = shape_set
        self.init_scale = init_scale
        self.random_state = random_state
        self.max_generations = max_generations

    def to_config(self):
        params = self.get_params()
        seed = params.pop("random_state")
        return EvolutionConfig(seed=0 if seed is None else int(seed), **params)

    def fit(self, X=None, y=None):
        self.run_log_ = evolve(self.to_config())
        self.champion_ = self.run_log_.champion
        self.max_complexity_ = self.champion_.complexity
        self.n_generations_ = self.run_log_.generations
        return self

    def score(self, X=None, y=None):
        """Log complexity of the champion image (higher is better)."""
        return self.champion_.log_complexity
