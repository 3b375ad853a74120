"""Full-batch training with adaptive moments, early stopping on
validation loss, and the multi-seed evaluation protocol.

The whole graph participates in every step; masks decide which nodes
contribute to the loss.  One seed pins initialization and therefore the
entire trajectory, so repeated runs are bit-identical.
"""

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import TrainingError, ValidationError
from .features import SplitMasks
from .grad import loss_and_grads
from .graph import FCPNetwork, LaplacianResult, scaled_laplacian
from .metrics import (
    ObjectiveWeights,
    class_weight_vector,
    evaluate_predictions,
    total_loss,
)
from .model import (
    FcpGnnModel,
    ModelConfig,
    copy_params,
    init_model,
    model_forward,
    named_params,
    set_all_params,
)

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "PHYLO_FORECAST_THREADS"

AVERAGED_FIELDS = (
    "TN", "TP", "FP", "FN",
    "accuracy", "TPR", "TNR", "PPV", "NPV", "FPER", "DR", "S_w",
)


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run depends on."""

    learning_rate: float = 0.01
    max_epochs: int = 500
    patience: int = 50
    seed: int = 0
    split_years: tuple = (1, 1, 1)
    theta: float = 0.5
    rho: float = 0.95
    hidden_size: int = 32
    pooled_size: int = 32
    cheb_order: int = 2
    generations: int = 3
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    sw_mode: str = "soft"
    class_weighting: bool = True
    activation: str = "identity"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValidationError(f"max epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if self.sw_mode not in ("soft", "hard"):
            raise ValidationError(f"sw_mode must be soft or hard, got {self.sw_mode!r}")


class _Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in params:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g**2
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def train_model(
    network: FCPNetwork,
    features: np.ndarray,
    labels: np.ndarray,
    masks: SplitMasks,
    config: TrainConfig,
    laplacian: LaplacianResult = None,
):
    """Minimize the composite loss on the training mask.

    Returns (model, history).  The returned parameters are those with the
    best validation total loss seen during training.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if not np.all(np.isfinite(features)):
        raise TrainingError("features contain non-finite values")
    if len(labels) != features.shape[0]:
        raise ValidationError(
            f"{len(labels)} labels for {features.shape[0]} feature rows"
        )
    train_labels = labels[masks.train]
    if train_labels.size == 0 or len(np.unique(train_labels)) < 2:
        raise ValidationError("training mask must contain both classes")

    if laplacian is None:
        laplacian = scaled_laplacian(network.weights)
    l_tilde = laplacian.l_tilde

    class_weights = class_weight_vector(labels, masks.train, config.class_weighting)
    model_config = ModelConfig(
        f=features.shape[1],
        h=config.hidden_size,
        p=config.pooled_size,
        k=config.cheb_order,
        g=config.generations,
        activation=config.activation,
    )
    model = init_model(model_config, config.seed)
    params = named_params(model)
    optimizer = _Adam(params, config.learning_rate)

    best_val = np.inf
    best_params = copy_params(params)
    best_epoch = 0
    since_best = 0
    history = {"train_loss": [], "val_loss": []}

    for epoch in range(1, config.max_epochs + 1):
        loss, grads, _ = loss_and_grads(
            model, features, l_tilde, labels,
            mask=masks.train,
            weights=config.weights,
            class_weights=class_weights,
            sw_mode=config.sw_mode,
        )
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite training loss {loss} at epoch {epoch} "
                f"(seed {config.seed}, lr {config.learning_rate})"
            )
        params = optimizer.step(params, grads)
        set_all_params(model, params)

        p = model_forward(model, features, l_tilde)
        val_loss = total_loss(
            labels, p,
            mask=masks.val,
            weights=config.weights,
            class_weights=class_weights,
            sw_mode=config.sw_mode,
        )
        if not np.isfinite(val_loss):
            raise TrainingError(
                f"non-finite validation loss {val_loss} at epoch {epoch}"
            )
        history["train_loss"].append(float(loss))
        history["val_loss"].append(float(val_loss))

        if val_loss < best_val:
            best_val = float(val_loss)
            best_params = copy_params(params)
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    set_all_params(model, best_params)
    history["best_epoch"] = best_epoch
    history["best_val_loss"] = best_val
    history["epochs_run"] = len(history["train_loss"])
    return model, history


def predict(model: FcpGnnModel, l_tilde, features: np.ndarray, mask=None):
    """Per-node probabilities and thresholded labels over a mask.

    Returns (node indices, probabilities, hard predictions).
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != model.config.f:
        raise ValidationError(
            f"model expects {model.config.f} features, got {features.shape[1]}"
        )
    p = model_forward(model, features, l_tilde)
    if mask is None:
        idx = np.arange(len(p))
    else:
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    pm = p[idx]
    return idx, pm, (pm >= 0.5).astype(np.int8)


def write_predictions_csv(path, idx, probabilities, predicted, actual, product_ids, years):
    """`node_id,product_id,year,probability,predicted,actual` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["node_id", "product_id", "year", "probability", "predicted", "actual"]
        )
        for j, i in enumerate(idx):
            writer.writerow(
                [
                    int(i),
                    product_ids[i],
                    int(years[i]),
                    repr(float(probabilities[j])),
                    int(predicted[j]),
                    int(actual[i]),
                ]
            )


@dataclass
class MetricsReport:
    """Per-seed evaluation rows plus their arithmetic averages."""

    runs: list
    averages: dict
    failed: list
    models: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"runs": self.runs, "averages": self.averages, "failed": self.failed}


def _average_runs(runs: list) -> dict:
    if not runs:
        return {}
    out = {"seeds": len(runs)}
    for key in AVERAGED_FIELDS:
        out[key] = float(np.mean([r[key] for r in runs]))
    return out


def run_multi_seed(
    network: FCPNetwork,
    features: np.ndarray,
    labels: np.ndarray,
    masks: SplitMasks,
    config: TrainConfig,
    seeds,
    eval_mask=None,
    keep_models=False,
) -> MetricsReport:
    """Train and evaluate once per seed; average the evaluation rows.

    Evaluation runs on the test mask unless ``eval_mask`` overrides it.
    A seed that raises is recorded under ``failed`` and left out of the
    averages.  ``PHYLO_FORECAST_THREADS`` caps seed-level parallelism
    (default 1: strictly sequential).
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("need at least one seed")
    laplacian = scaled_laplacian(network.weights)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    mask = masks.test if eval_mask is None else eval_mask
    a, b, _ = masks.years

    def one_seed(seed: int):
        run_config = replace(config, seed=seed)
        model, history = train_model(
            network, features, labels, masks, run_config, laplacian
        )
        _, p_all, _ = predict(model, laplacian.l_tilde, features, mask=None)
        record = evaluate_predictions(
            labels, p_all, mask,
            weights=config.weights,
            extra={
                "threshold": config.theta,
                "train_years": a,
                "val_years": b,
                "seed": seed,
                "epochs_run": history["epochs_run"],
                "best_epoch": history["best_epoch"],
            },
        )
        return record, model

    threads = int(os.environ.get(THREADS_ENV_VAR, "1"))
    results = {}
    failures = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {seed: pool.submit(one_seed, seed) for seed in seeds}
        for seed, future in futures.items():
            exc = future.exception()
            if exc is not None:
                failures[seed] = exc
            else:
                results[seed] = future.result()
    else:
        for seed in seeds:
            try:
                results[seed] = one_seed(seed)
            except Exception as exc:  # noqa: BLE001 - failed seeds are reported
                failures[seed] = exc

    runs = [results[seed][0] for seed in seeds if seed in results]
    failed = []
    for seed in seeds:
        if seed in failures:
            logger.warning("seed %d failed: %s", seed, failures[seed])
            failed.append({"seed": seed, "error": str(failures[seed])})
    models = {}
    if keep_models:
        models = {seed: results[seed][1] for seed in seeds if seed in results}
    return MetricsReport(
        runs=runs, averages=_average_runs(runs), failed=failed, models=models
    )
