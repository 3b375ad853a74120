"""Phylogenetics-style dominance forecasting for product panels.

Products carry attribute sets ("genotypes"); consecutive market years
are linked into a fully connected similarity network whose node features
feed a spectral-graph recurrent model that predicts which products
introduce attributes destined to dominate the market.
"""

__version__ = "0.1.0"

from .backend import active_backend, numba_available
from .baseline import LogRegModel, predict_logreg, train_logreg
from .errors import (
    FormatError,
    PhyloForecastError,
    TrainingError,
    ValidationError,
)
from .features import (
    PcaModel,
    SplitMasks,
    fit_pca,
    inverse_transform_pca,
    make_split_masks,
    transform_pca,
)
from .graph import (
    FCPNetwork,
    LaplacianResult,
    PhyloTree,
    build_fcpn,
    build_product_tree,
    estimate_lambda_max,
    export_graph,
    jaccard_similarity,
    normalized_laplacian,
    phylo_tree,
    scaled_laplacian,
)
from .labeling import (
    GenotypeDossier,
    ProductLabels,
    detect_dominant_genotypes,
    dominance_statistics,
    label_dominant_products,
)
from .metrics import (
    ConfusionCounts,
    ObjectiveWeights,
    RatioVector,
    accuracy,
    class_weight_vector,
    confusion_counts,
    evaluate_predictions,
    overall_weighted_score,
    ratio_vector,
    soft_ratio_vector,
    total_loss,
    total_loss_grad_p,
    weighted_bce,
)
from .model import (
    FcpGnnModel,
    ModelConfig,
    init_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .grad import loss_and_grads, model_backward
from .panel import (
    ChromosomeMatrix,
    GenotypeVocabulary,
    ProductRecord,
    build_vocabulary,
    encode_chromosomes,
    load_products,
    write_products_csv,
    write_products_jsonl,
)
from .synth import (
    PlantedDominant,
    SynthConfig,
    benchmark_config,
    brute_force_truth,
    generate_panel,
    random_small_config,
)
from .training import (
    MetricsReport,
    TrainConfig,
    predict,
    run_multi_seed,
    train_model,
    write_predictions_csv,
)

__all__ = [
    "__version__",
    "active_backend",
    "numba_available",
    "LogRegModel",
    "predict_logreg",
    "train_logreg",
    "FormatError",
    "PhyloForecastError",
    "TrainingError",
    "ValidationError",
    "PcaModel",
    "SplitMasks",
    "fit_pca",
    "inverse_transform_pca",
    "make_split_masks",
    "transform_pca",
    "FCPNetwork",
    "LaplacianResult",
    "PhyloTree",
    "build_fcpn",
    "build_product_tree",
    "estimate_lambda_max",
    "export_graph",
    "jaccard_similarity",
    "normalized_laplacian",
    "phylo_tree",
    "scaled_laplacian",
    "GenotypeDossier",
    "ProductLabels",
    "detect_dominant_genotypes",
    "dominance_statistics",
    "label_dominant_products",
    "ConfusionCounts",
    "ObjectiveWeights",
    "RatioVector",
    "accuracy",
    "class_weight_vector",
    "confusion_counts",
    "evaluate_predictions",
    "overall_weighted_score",
    "ratio_vector",
    "soft_ratio_vector",
    "total_loss",
    "total_loss_grad_p",
    "weighted_bce",
    "FcpGnnModel",
    "ModelConfig",
    "init_model",
    "load_checkpoint",
    "model_forward",
    "save_checkpoint",
    "loss_and_grads",
    "model_backward",
    "ChromosomeMatrix",
    "GenotypeVocabulary",
    "ProductRecord",
    "build_vocabulary",
    "encode_chromosomes",
    "load_products",
    "write_products_csv",
    "write_products_jsonl",
    "PlantedDominant",
    "SynthConfig",
    "benchmark_config",
    "brute_force_truth",
    "generate_panel",
    "random_small_config",
    "MetricsReport",
    "TrainConfig",
    "predict",
    "run_multi_seed",
    "train_model",
    "write_predictions_csv",
]
