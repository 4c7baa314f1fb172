"""Mutual-information preserving compression of categorical vocabularies.

Values of a categorical feature are sorted by ``P(C=0 | x)`` and cut into
consecutive clusters; the cut set is chosen by (stochastic) greedy
maximisation of ``I(Z;C)``, which is monotone submodular in the cuts.
"""

from .allocator import (
    AllocationReport,
    BudgetError,
    FeatureReport,
    allocate_global_submodular,
    allocate_mi_proportional,
    allocate_uniform,
    average_mi_loss,
)
from .baselines import (
    brute_force_optimal,
    bucketing,
    bucketing_loss_bound,
    constrained_brute_force,
    divisive_cluster,
    dp_optimal,
    frequency_filter,
    frequency_filter_global,
)
from .boundary_index import BoundaryError, BoundaryIndex
from .distributed import ShardPlan, plan_shards, run_threshold_rounds, trim
from .greedy import GreedyConfig, GreedyResult, classic_greedy, marginal_ranking, stochastic_greedy
from .ingest import (
    CountValidationError,
    FeatureTable,
    LabeledCountRecord,
    ParseError,
    SortedFeature,
    estimate_distribution,
    parse_counts,
    read_counts,
)
from .mi import (
    CompressionMap,
    DegenerateLabelError,
    MiContext,
    evaluate_partition,
    f_div,
    marginal_gain,
    mutual_information,
    partition_mi,
)

__version__ = "0.1.0"
