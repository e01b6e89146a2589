"""Deep recurrent networks at desk scale: first-order, bilinear and
CP-factorized recurrences, the explicit weight constructions behind their
depth/width/rank trade-offs, independent verification oracles, and seeded
gradient-descent experiments on synthetic memory and state-tracking tasks.
"""

from .linalg import Rng, cp_matrix, cp_reconstruct, matmul, matvec, mode_product, rank
from .models import forward, forward_2rnn, forward_cprnn, forward_rnn, unroll_closed_form
from .params import (
    CPFactors,
    LayerParams,
    ModelConfig,
    ModelParams,
    init_params,
    load_params,
    save_params,
    zero_params,
)
from .constructions import (
    CopierSpec,
    build_copier,
    build_diag_power,
    build_flattened,
    build_parity,
    critical_width,
    crossover_table,
    memory_bound,
    param_count,
)
from .oracles import (
    check_affine,
    check_concat_equiv,
    check_degree_bound_TL,
    estimate_degree,
    jacobian_rank_h1,
)
from .autograd import AdamState, Gradients, Readout, adam_step, backward, loss_mse
from .tasks import Dataset, SequenceBatch, TaskSpec, generate
from .training import RunConfig, RunRecord, TrainSettings, run, train_one
from .experiments import SweepGrid, Verdict, sweep, verify_campaign

__version__ = "0.1.0"

__all__ = [
    "Rng", "cp_matrix", "cp_reconstruct", "matmul", "matvec", "mode_product", "rank",
    "forward", "forward_rnn", "forward_2rnn", "forward_cprnn", "unroll_closed_form",
    "CPFactors", "LayerParams", "ModelConfig", "ModelParams",
    "init_params", "zero_params", "save_params", "load_params",
    "CopierSpec", "build_copier", "build_diag_power", "build_flattened", "build_parity",
    "critical_width", "crossover_table", "memory_bound", "param_count",
    "check_affine", "check_concat_equiv", "check_degree_bound_TL",
    "estimate_degree", "jacobian_rank_h1",
    "AdamState", "Gradients", "Readout", "adam_step", "backward", "loss_mse",
    "Dataset", "SequenceBatch", "TaskSpec", "generate",
    "RunConfig", "RunRecord", "TrainSettings", "run", "train_one",
    "SweepGrid", "Verdict", "sweep", "verify_campaign",
]
