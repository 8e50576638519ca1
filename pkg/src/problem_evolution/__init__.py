"""Rank network configurations by the most complex binary image each can fully recognise."""

from .complexity import (
    LinguisticComplexity,
    complexity_1d,
    complexity_2d,
    count_distinct_windows,
    log_complexity_1d,
    log_complexity_2d,
    usage_profile_1d,
    usage_profile_2d,
    vocabulary_usage_1d,
    vocabulary_usage_2d,
)
from .evolution import (
    ConfigurationInfeasible,
    EvolutionConfig,
    Genotype,
    Population,
    ProblemEvolution,
    RunLog,
    evolve,
    initial_image,
    most_similar_parent,
    mutate,
    recombine,
    seed_population,
    try_admit,
)
from .harness import ExperimentSpec, emit_plot_data, run_equal_weights, run_single, run_sweep
from .network import (
    ImageRecognizer,
    IRpropState,
    Network,
    TrainingOutcome,
    activation,
    evaluate,
    forward,
    gradient,
    irprop_plus_step,
    train_to_recognition,
    weight_count,
)
from .pbm import read_pbm, write_pbm

__version__ = "0.1.0"
