"""Confusion counts, evaluation ratios, and the composite training loss.

The training objective is class-weighted binary cross entropy minus the
Overall Weighted Score, a fixed-weight combination of six confusion
ratios.  Evaluation thresholds probabilities at 0.5 (hard counts);
training scores probabilities directly (soft counts) so the score term
stays differentiable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CLIP = 1e-7
SOFT_EPS = 1e-7

RATIO_NAMES = ("TPR", "TNR", "PPV", "NPV", "FPER", "DR")


@dataclass
class ConfusionCounts:
    """TP/FP/TN/FN over one mask; integers in hard mode, reals in soft."""

    tp: float
    fp: float
    tn: float
    fn: float
    mode: str

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class RatioVector:
    tpr: float
    tnr: float
    ppv: float
    npv: float
    fper: float
    dr: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.tpr, self.tnr, self.ppv, self.npv, self.fper, self.dr]
        )


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights for (TPR, TNR, PPV, NPV, FPER, DR)."""

    w_tpr: float = 0.5
    w_tnr: float = 0.1
    w_ppv: float = 0.1
    w_npv: float = 0.1
    w_fper: float = 0.2
    w_dr: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.w_tpr, self.w_tnr, self.w_ppv, self.w_npv, self.w_fper, self.w_dr]
        )

    @classmethod
    def from_sequence(cls, values) -> "ObjectiveWeights":
        values = tuple(float(v) for v in values)
        if len(values) != 6:
            raise ValidationError(f"objective weights need 6 values, got {len(values)}")
        return cls(*values)


def _mask_indices(mask, n: int) -> np.ndarray:
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if len(mask) != n:
            raise ValidationError(f"mask length {len(mask)} != {n} nodes")
        return np.flatnonzero(mask)
    return mask.astype(np.int64)


def _check_inputs(d, p):
    d = np.asarray(d, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if d.shape != p.shape:
        raise ValidationError(f"labels ({d.shape}) and probabilities ({p.shape}) differ")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ValidationError("probabilities must lie in [0, 1]")
    return d, p


def confusion_counts(d, p, mask=None, mode: str = "hard") -> ConfusionCounts:
    """Confusion counts over a mask.

    Hard mode thresholds at p >= 0.5; soft mode credits each node
    fractionally by its probability mass.
    """
    d, p = _check_inputs(d, p)
    idx = _mask_indices(mask, len(d))
    dm, pm = d[idx], p[idx]
    if mode == "hard":
        pred = (pm >= 0.5).astype(np.float64)
        tp = float(np.sum(dm * pred))
        fp = float(np.sum((1 - dm) * pred))
        tn = float(np.sum((1 - dm) * (1 - pred)))
        fn = float(np.sum(dm * (1 - pred)))
    elif mode == "soft":
        tp = float(np.sum(dm * pm))
        fp = float(np.sum((1 - dm) * pm))
        tn = float(np.sum((1 - dm) * (1 - pm)))
        fn = float(np.sum(dm * (1 - pm)))
    else:
        raise ValidationError(f"mode must be 'hard' or 'soft', got {mode!r}")
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn, mode=mode)


def _safe_div(num: float, den: float) -> float:
    return num / den if den != 0.0 else 0.0


def ratio_vector(c: ConfusionCounts) -> RatioVector:
    """The six evaluation ratios; any zero denominator yields 0."""
    if c.total == 0:
        raise ValidationError("all confusion counts are zero")
    diff = c.tp - c.fn + c.fp - c.tn
    return RatioVector(
        tpr=_safe_div(c.tp, c.tp + c.fn),
        tnr=_safe_div(c.tn, c.tn + c.fp),
        ppv=_safe_div(c.tp, c.tp + c.fp),
        npv=_safe_div(c.tn, c.tn + c.fn),
        fper=_safe_div(c.fp, c.fn + c.fp),
        dr=-((diff / c.total) ** 2),
    )


def soft_ratio_vector(c: ConfusionCounts) -> RatioVector:
    """Ratios with a small epsilon in each denominator (differentiable)."""
    diff = c.tp - c.fn + c.fp - c.tn
    return RatioVector(
        tpr=c.tp / (c.tp + c.fn + SOFT_EPS),
        tnr=c.tn / (c.tn + c.fp + SOFT_EPS),
        ppv=c.tp / (c.tp + c.fp + SOFT_EPS),
        npv=c.tn / (c.tn + c.fn + SOFT_EPS),
        fper=c.fp / (c.fn + c.fp + SOFT_EPS),
        dr=-((diff / (c.total + SOFT_EPS)) ** 2),
    )


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValidationError("all confusion counts are zero")
    return (c.tp + c.tn) / c.total


def overall_weighted_score(r: RatioVector, w: ObjectiveWeights) -> float:
    return float(w.as_array() @ r.as_array())


def class_weight_vector(d, train_mask, enabled: bool = True) -> np.ndarray:
    """Per-node weights: inverse class size on the training mask,
    normalized so the training-mask weights average to 1.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    if not enabled:
        return np.ones(len(d))
    idx = _mask_indices(train_mask, len(d))
    n = len(idx)
    n_pos = float(np.sum(d[idx]))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("training mask must contain both classes")
    w_pos = n / (2.0 * n_pos)
    w_neg = n / (2.0 * n_neg)
    return np.where(d == 1, w_pos, w_neg)


def weighted_bce(d, p, mask=None, class_weights=None) -> float:
    """Mean class-weighted binary cross entropy over the mask."""
    d, p = _check_inputs(d, p)
    idx = _mask_indices(mask, len(d))
    if idx.size == 0:
        raise ValidationError("empty mask")
    w = np.ones(len(d)) if class_weights is None else np.asarray(class_weights)
    dm, wm = d[idx], w[idx]
    pm = np.clip(p[idx], CLIP, 1.0 - CLIP)
    terms = wm * (dm * np.log(pm) + (1 - dm) * np.log1p(-pm))
    return float(-terms.sum() / wm.sum())


def total_loss(d, p, mask=None, weights=None, class_weights=None, sw_mode="soft"):
    """Weighted binary cross entropy minus the Overall Weighted Score."""
    if weights is None:
        weights = ObjectiveWeights()
    bce = weighted_bce(d, p, mask, class_weights)
    counts = confusion_counts(d, p, mask, mode="soft" if sw_mode == "soft" else "hard")
    if sw_mode == "soft":
        ratios = soft_ratio_vector(counts)
    elif sw_mode == "hard":
        ratios = ratio_vector(counts)
    else:
        raise ValidationError(f"sw_mode must be 'soft' or 'hard', got {sw_mode!r}")
    return bce - overall_weighted_score(ratios, weights)


def total_loss_grad_p(
    d, p, mask=None, weights=None, class_weights=None, sw_mode="soft"
) -> np.ndarray:
    """d(total loss)/dp, length N, zero outside the mask.

    The score term contributes only in soft mode; hard counts are
    piecewise constant in p, so there the gradient is the BCE part alone.
    """
    if weights is None:
        weights = ObjectiveWeights()
    d, p = _check_inputs(d, p)
    n = len(d)
    idx = _mask_indices(mask, n)
    if idx.size == 0:
        raise ValidationError("empty mask")
    w = np.ones(n) if class_weights is None else np.asarray(class_weights)
    dm, wm = d[idx], w[idx]
    grad = np.zeros(n)

    pc = np.clip(p[idx], CLIP, 1.0 - CLIP)
    active = (p[idx] > CLIP) & (p[idx] < 1.0 - CLIP)
    bce_grad = -(wm / wm.sum()) * (dm / pc - (1 - dm) / (1 - pc))
    bce_grad[~active] = 0.0
    grad[idx] = bce_grad

    if sw_mode == "hard":
        return grad
    if sw_mode != "soft":
        raise ValidationError(f"sw_mode must be 'soft' or 'hard', got {sw_mode!r}")

    c = confusion_counts(d, p, idx, mode="soft")
    wv = weights.as_array()

    den_tpr = c.tp + c.fn + SOFT_EPS
    den_tnr = c.tn + c.fp + SOFT_EPS
    den_ppv = c.tp + c.fp + SOFT_EPS
    den_npv = c.tn + c.fn + SOFT_EPS
    den_fper = c.fn + c.fp + SOFT_EPS
    den_dr = c.total + SOFT_EPS
    diff = c.tp - c.fn + c.fp - c.tn

    # d(count)/dp per masked node: TP' = d, FP' = 1-d, TN' = -(1-d), FN' = -d
    g_tpr = dm / den_tpr
    g_tnr = -(1 - dm) / den_tnr
    g_ppv = (dm * den_ppv - c.tp) / den_ppv**2
    g_npv = (-(1 - dm) * den_npv + c.tn) / den_npv**2
    g_fper = ((1 - dm) * den_fper - c.fp * (1 - 2 * dm)) / den_fper**2
    g_dr = np.full(len(idx), -4.0 * diff / den_dr**2)

    sw_grad = (
        wv[0] * g_tpr
        + wv[1] * g_tnr
        + wv[2] * g_ppv
        + wv[3] * g_npv
        + wv[4] * g_fper
        + wv[5] * g_dr
    )
    grad[idx] -= sw_grad
    return grad


def evaluate_predictions(d, p, mask=None, weights=None, extra=None) -> dict:
    """Hard-count evaluation record in the reporting schema."""
    if weights is None:
        weights = ObjectiveWeights()
    c = confusion_counts(d, p, mask, mode="hard")
    r = ratio_vector(c)
    record = {
        "TN": int(c.tn),
        "TP": int(c.tp),
        "FP": int(c.fp),
        "FN": int(c.fn),
        "accuracy": accuracy(c),
        "TPR": r.tpr,
        "TNR": r.tnr,
        "PPV": r.ppv,
        "NPV": r.npv,
        "FPER": r.fper,
        "DR": r.dr,
        "S_w": overall_weighted_score(r, weights),
    }
    if extra:
        record.update(extra)
    return record
