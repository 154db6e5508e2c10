"""Gradient-free architecture scoring via Monte-Carlo kernel GP inference."""

from .arch import (
    CellSpec,
    LayerGraph,
    NetworkPlan,
    assemble_network,
    make_cell,
    parse_arch,
    prune_cell,
    sample_random_arch,
)
from .cost import (
    CostBreakdown,
    cost_breakdown,
    count_inference_flops,
    count_params,
    nngp_flops,
    nngp_flops_split,
    training_flops,
)
from .data import (
    DatasetSplit,
    LabeledSet,
    load_cifar,
    make_split,
    make_synthetic,
    standardize,
    subsample_balanced,
)
from .estimators import HybridMetric, NNGPClassifier, ShortTrainClassifier
from .experiment import ExperimentConfig, config_from_file, run_experiment
from .forward import (
    ConvNet,
    FeatureBatch,
    InitConfig,
    ReluMLP,
    forward_features,
    forward_logits,
    init_params,
    warmup_batchnorm,
)
from .metrics import (
    ScorePairSet,
    discovered_performance,
    kendall_tau,
    mnas_reward,
    pearson,
    pqetp,
)
from .nngp import (
    InferenceConfig,
    KernelPair,
    LabelMatrix,
    accumulate_kernels,
    analytic_relu_mlp_kernel,
    gp_predict,
    mean_eigenvalue,
    nngp_validation_accuracy,
)
from .screening import (
    HybridModel,
    PoolEntry,
    SearchPool,
    fit_hybrid,
    hybrid_score,
    reduce_search_space,
    simulate_discovery,
)
from .trainer import TrainConfig, evaluate_accuracy, train

__version__ = "0.1.0"

__all__ = [
    "CellSpec", "LayerGraph", "NetworkPlan", "assemble_network", "make_cell",
    "parse_arch", "prune_cell", "sample_random_arch",
    "CostBreakdown", "cost_breakdown", "count_inference_flops", "count_params",
    "nngp_flops", "nngp_flops_split", "training_flops",
    "DatasetSplit", "LabeledSet", "load_cifar", "make_split", "make_synthetic",
    "standardize", "subsample_balanced",
    "HybridMetric", "NNGPClassifier", "ShortTrainClassifier",
    "ExperimentConfig", "config_from_file", "run_experiment",
    "ConvNet", "FeatureBatch", "InitConfig", "ReluMLP", "forward_features",
    "forward_logits", "init_params", "warmup_batchnorm",
    "ScorePairSet", "discovered_performance", "kendall_tau", "mnas_reward",
    "pearson", "pqetp",
    "InferenceConfig", "KernelPair", "LabelMatrix", "accumulate_kernels",
    "analytic_relu_mlp_kernel", "gp_predict", "mean_eigenvalue",
    "nngp_validation_accuracy",
    "HybridModel", "PoolEntry", "SearchPool", "fit_hybrid", "hybrid_score",
    "reduce_search_space", "simulate_discovery",
    "TrainConfig", "evaluate_accuracy", "train",
]
