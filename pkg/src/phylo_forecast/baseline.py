"""Logistic-regression baseline on raw binary chromosomes.

Deliberately simple: L2-regularized logistic loss minimized by gradient
descent with a backtracking line search (monotone decrease, so longer
runs never end worse).  Evaluation goes through the same metrics module
as the graph model.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .metrics import class_weight_vector
from .model import sigmoid
from .panel import ChromosomeMatrix

GRAD_TOL = 1e-6
MAX_ITER = 5000


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2: float


def _as_csr(matrix) -> sp.csr_matrix:
    if isinstance(matrix, ChromosomeMatrix):
        matrix = matrix.data
    if sp.issparse(matrix):
        return matrix.tocsr().astype(np.float64)
    return sp.csr_matrix(np.asarray(matrix, dtype=np.float64))


def _loss_and_grad(w, b, x, d, sample_weights, l2):
    """Mean weighted logistic loss + (l2/2)||w||^2; bias unregularized.

    Uses softplus identities, so no probability clipping is needed.
    """
    z = x @ w + b
    # -log sigma(z) = softplus(-z); -log(1 - sigma(z)) = softplus(z)
    losses = d * np.logaddexp(0.0, -z) + (1.0 - d) * np.logaddexp(0.0, z)
    wsum = sample_weights.sum()
    loss = float((sample_weights * losses).sum() / wsum + 0.5 * l2 * (w @ w))
    residual = sample_weights * (sigmoid(z) - d) / wsum
    grad_w = x.T @ residual + l2 * w
    grad_b = float(residual.sum())
    return loss, np.asarray(grad_w).ravel(), grad_b


def logreg_loss(model: LogRegModel, matrix, labels, mask=None, class_weights=None):
    """Training objective at the given parameters (for gradient checks)."""
    x = _as_csr(matrix)
    d = np.asarray(labels, dtype=np.float64).ravel()
    idx = np.arange(len(d)) if mask is None else _mask_to_idx(mask, len(d))
    w = np.ones(len(d)) if class_weights is None else np.asarray(class_weights)
    loss, _, _ = _loss_and_grad(
        model.weights, model.bias, x[idx], d[idx], w[idx], model.l2
    )
    return loss


def logreg_grad(model: LogRegModel, matrix, labels, mask=None, class_weights=None):
    x = _as_csr(matrix)
    d = np.asarray(labels, dtype=np.float64).ravel()
    idx = np.arange(len(d)) if mask is None else _mask_to_idx(mask, len(d))
    w = np.ones(len(d)) if class_weights is None else np.asarray(class_weights)
    _, gw, gb = _loss_and_grad(
        model.weights, model.bias, x[idx], d[idx], w[idx], model.l2
    )
    return gw, gb


def _mask_to_idx(mask, n):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if len(mask) != n:
            raise ValidationError(f"mask length {len(mask)} != {n} rows")
        return np.flatnonzero(mask)
    return mask.astype(np.int64)


def train_logreg(
    matrix,
    labels,
    train_mask=None,
    l2: float = 1e-4,
    class_weighting: bool = False,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> LogRegModel:
    """Fit by descent along the gradient with backtracking step control,
    stopping at gradient norm ``tol`` or after ``max_iter`` iterations."""
    x = _as_csr(matrix)
    d = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[0] != len(d):
        raise ValidationError(f"{len(d)} labels for {x.shape[0]} rows")
    idx = np.arange(len(d)) if train_mask is None else _mask_to_idx(train_mask, len(d))
    dm = d[idx]
    if dm.size == 0 or len(np.unique(dm)) < 2:
        raise ValidationError("training mask must contain both classes")
    sw = class_weight_vector(d, idx, class_weighting)[idx]
    xm = x[idx]

    w = np.zeros(x.shape[1])
    b = 0.0
    step = 1.0
    loss, gw, gb = _loss_and_grad(w, b, xm, dm, sw, l2)
    for _ in range(max_iter):
        gnorm2 = float(gw @ gw) + gb * gb
        if np.sqrt(gnorm2) <= tol:
            break
        step = min(step * 2.0, 1e4)
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            new_loss, new_gw, new_gb = _loss_and_grad(w_new, b_new, xm, dm, sw, l2)
            if new_loss <= loss - 1e-4 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
    return LogRegModel(weights=w, bias=float(b), l2=l2)


def predict_logreg(model: LogRegModel, matrix, mask=None):
    """Probabilities and thresholded labels; same shape contract as the
    graph model's predict."""
    x = _as_csr(matrix)
    if x.shape[1] != len(model.weights):
        raise ValidationError(
            f"matrix has {x.shape[1]} columns, model expects {len(model.weights)}"
        )
    idx = np.arange(x.shape[0]) if mask is None else _mask_to_idx(mask, x.shape[0])
    z = x[idx] @ model.weights + model.bias
    p = sigmoid(np.asarray(z).ravel())
    return idx, p, (p >= 0.5).astype(np.int8)
