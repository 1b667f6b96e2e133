"""Learning to aggregate expert forecasts from samples."""

from .aggregators import (
    Aggregator,
    BordleyAggregator,
    MultiBordleyAggregator,
    TableAggregator,
    averaging,
    bayes_optimal,
    bordley,
    constant,
    multi_bordley,
    true_optimal,
)
from .batteries import run_lemma_suite
from .harness import ExperimentConfig, run_curve
from .learners import (
    empirical_bayes,
    erm_empirical,
    erm_theta,
    estimate_rho,
    multi_erm_theta,
    strongly_informative_learn,
    weakly_informative_learn,
)
from .metrics import expected_loss_exact, expected_loss_mc, hellinger_sq, tv_distance
from .model import (
    CondIndepModel,
    DiscreteJoint,
    SampleSet,
    build_cond_indep,
    build_joint,
    report_support,
    sample,
    to_joint,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "BordleyAggregator",
    "MultiBordleyAggregator",
    "TableAggregator",
    "averaging",
    "bayes_optimal",
    "bordley",
    "constant",
    "multi_bordley",
    "true_optimal",
    "run_lemma_suite",
    "ExperimentConfig",
    "run_curve",
    "empirical_bayes",
    "erm_empirical",
    "erm_theta",
    "estimate_rho",
    "multi_erm_theta",
    "strongly_informative_learn",
    "weakly_informative_learn",
    "expected_loss_exact",
    "expected_loss_mc",
    "hellinger_sq",
    "tv_distance",
    "CondIndepModel",
    "DiscreteJoint",
    "SampleSet",
    "build_cond_indep",
    "build_joint",
    "report_support",
    "sample",
    "to_joint",
]
