"""Dense node features via PCA, and chronological split masks.

PCA is fit on all nodes by default: the model is transductive (one graph,
mask-based supervision), so the reducer sees the full panel.  That leaks
unlabeled test rows into the feature basis; pass ``rows=`` to fit on the
training rows only.
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ValidationError
from .panel import ChromosomeMatrix

# relative eigenvalue cutoff for the numerical rank
_RANK_RTOL = 1e-10


def _as_csr_float(matrix) -> sp.csr_matrix:
    if isinstance(matrix, ChromosomeMatrix):
        matrix = matrix.data
    if sp.issparse(matrix):
        return matrix.tocsr().astype(np.float64)
    return sp.csr_matrix(np.asarray(matrix, dtype=np.float64))


@dataclass
class PcaModel:
    """Mean vector plus orthonormal component rows and their variances.

    ``explained_variance`` uses the sample (N-1) normalization, so the
    per-component variance of transformed training rows reproduces it.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    rho: float
    n_samples: int

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def n_features(self):
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": {
                "shape": list(self.components.shape),
                "values": self.components.ravel().tolist(),
            },
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "rho": self.rho,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        shape = tuple(d["components"]["shape"])
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            components=np.asarray(
                d["components"]["values"], dtype=np.float64
            ).reshape(shape),
            explained_variance=np.asarray(d["explained_variance"], dtype=np.float64),
            explained_variance_ratio=np.asarray(
                d["explained_variance_ratio"], dtype=np.float64
            ),
            rho=float(d["rho"]),
            n_samples=int(d["n_samples"]),
        )


def fit_pca(matrix, rho: float, rows=None) -> PcaModel:
    """Fit PCA keeping the fewest components whose cumulative explained
    variance reaches ``rho``.

    ``rows`` restricts the fit to a subset of row indices (or a boolean
    mask); by default every row participates.  The decomposition runs on
    the N x N centered Gram matrix when features outnumber rows, else on
    the feature covariance; both give identical spectra.
    """
    if not 0.0 < rho <= 1.0:
        raise ValidationError(f"retained variance fraction must be in (0, 1], got {rho}")
    a = _as_csr_float(matrix)
    if rows is not None:
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        a = a[rows]
    n_rows, n_cols = a.shape
    if n_rows < 2:
        raise ValidationError(f"PCA needs at least 2 rows, got {n_rows}")

    mean = np.asarray(a.mean(axis=0)).ravel()

    if n_cols > n_rows:
        # Gram trick: eigenvectors of centered X X^T lift to feature space
        gram = np.asarray((a @ a.T).todense())
        s = a @ mean
        gram = gram - s[:, None] - s[None, :] + float(mean @ mean)
        gram = 0.5 * (gram + gram.T)
        eigvals, eigvecs = scipy.linalg.eigh(gram)
    else:
        cov = np.asarray((a.T @ a).todense()) - n_rows * np.outer(mean, mean)
        cov = 0.5 * (cov + cov.T)
        eigvals, eigvecs = scipy.linalg.eigh(cov)

    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    total = float(np.sum(eigvals[eigvals > 0]))
    if total <= 0.0:
        raise ValidationError("matrix has zero variance (rank 0 after centering)")
    tol = eigvals[0] * _RANK_RTOL
    rank = int(np.sum(eigvals > tol))

    ratios = np.maximum(eigvals[:rank], 0.0) / total
    cumulative = np.cumsum(ratios)
    reached = np.flatnonzero(cumulative >= rho - 1e-12)
    # cap at the numerical rank: rounding can leave the cumsum just short
    k = int(reached[0]) + 1 if reached.size else rank

    if n_cols > n_rows:
        # lift Gram eigenvectors u to unit feature vectors X_c^T u / sqrt(w)
        components = np.empty((k, n_cols), dtype=np.float64)
        for j in range(k):
            u = eigvecs[:, j]
            v = a.T @ u - mean * float(u.sum())
            components[j] = v / np.sqrt(eigvals[j])
    else:
        components = eigvecs[:, :k].T.copy()

    # deterministic sign: the largest-magnitude entry of each row is positive
    for j in range(k):
        i = int(np.argmax(np.abs(components[j])))
        if components[j, i] < 0:
            components[j] = -components[j]

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigvals[:k] / (n_rows - 1),
        explained_variance_ratio=ratios[:k].copy(),
        rho=rho,
        n_samples=n_rows,
    )


def transform_pca(model: PcaModel, matrix) -> np.ndarray:
    """Project rows onto the model's components after centering."""
    a = _as_csr_float(matrix)
    if a.shape[1] != model.n_features:
        raise ValidationError(
            f"matrix has {a.shape[1]} columns, model expects {model.n_features}"
        )
    projected = a @ model.components.T
    return np.asarray(projected) - model.mean @ model.components.T


def inverse_transform_pca(model: PcaModel, features: np.ndarray) -> np.ndarray:
    return np.asarray(features) @ model.components + model.mean


@dataclass
class SplitMasks:
    """Chronological train/validation/test node masks from year counts."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    years: tuple

    def split_of(self, i: int) -> str:
        if self.train[i]:
            return "train"
        if self.val[i]:
            return "val"
        return "test"


def make_split_masks(chrom: ChromosomeMatrix, years) -> SplitMasks:
    """First ``a`` distinct years to train, next ``b`` to validation,
    last ``c`` to test; the counts must cover the panel exactly.
    """
    try:
        a, b, c = (int(v) for v in years)
    except (TypeError, ValueError):
        raise ValidationError(f"split years must be three integers, got {years!r}") from None
    if a < 1 or b < 1 or c < 1:
        raise ValidationError(f"split year counts must be >= 1, got {(a, b, c)}")
    distinct = chrom.distinct_years()
    if a + b + c != len(distinct):
        raise ValidationError(
            f"split years {(a, b, c)} sum to {a + b + c}, "
            f"dataset has {len(distinct)} distinct years"
        )
    train_years = set(distinct[:a].tolist())
    val_years = set(distinct[a : a + b].tolist())
    train = np.array([int(y) in train_years for y in chrom.years], dtype=bool)
    val = np.array([int(y) in val_years for y in chrom.years], dtype=bool)
    test = ~(train | val)
    return SplitMasks(train=train, val=val, test=test, years=(a, b, c))


def write_masks_csv(masks: SplitMasks, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "split"])
        for i in range(len(masks.train)):
            writer.writerow([i, masks.split_of(i)])
