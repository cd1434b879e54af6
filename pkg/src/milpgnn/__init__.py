"""MILP graphs, WL foldability, exact labels and a small message-passing GNN."""

from .canon import CanonicalOrder, FoldableInput, sort_graph
from .generators import GenConfig, RejectionLimit, Variant, gen_counterexample, gen_d1, gen_d2, generate
from .gnn import (
    Adam,
    GnnModel,
    GraphBatch,
    Readout,
    Task,
    TrainConfig,
    TrainLog,
    backward,
    encode_features,
    forward,
    forward_graph,
    forward_nodes,
    loss_and_grad,
    predict,
    train,
)
from .instance import (
    ConstraintFeature,
    InvalidInstance,
    MilpGraph,
    MilpInstance,
    Permutation,
    Sense,
    VariableFeature,
    apply_permutation,
    attach_random_features,
    decode_graph,
    encode_graph,
    has_repeated_random_feature,
    permute_instance,
    sample_random_features,
)
from .lp import IterationLimit, LpResult, LpStatus, solve_lp
from .oracle import (
    NodeLimit,
    OracleLabel,
    Tolerances,
    UnboundedDomain,
    canonical_order,
    canonical_solution,
    solve_milp,
)
from .wl import (
    ColoringResult,
    check_fold_partition,
    graphs_equivalent,
    graphs_w_equivalent,
    is_foldable,
    refine_colors,
)

__version__ = "0.1.0"
