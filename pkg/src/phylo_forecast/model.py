"""Forward computation of the dominant-product predictor.

The network reads one graph: PCA features enter a stack of two Chebyshev
graph-convolution layers whose outputs form a 3-step per-node sequence
(the node itself, one hop of neighborhood mixing, two hops).  A
bidirectional LSTM consumes that sequence, a gated attention layer pools
its hidden states over the sequence axis, and a sigmoid head turns the
pooled vector into a dominance probability per node.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import spmm

PARAM_NAMES = (
    "cheb1.theta",
    "cheb1.bias",
    "cheb2.theta",
    "cheb2.bias",
    "lstm_fw.w_in",
    "lstm_fw.w_hid",
    "lstm_fw.bias",
    "lstm_bw.w_in",
    "lstm_bw.w_hid",
    "lstm_bw.bias",
    "gap.w_gate",
    "gap.b_gate",
    "gap.w_value",
    "gap.b_value",
    "gap.w_out",
    "gap.b_out",
)

_ACTIVATIONS = ("identity", "tanh", "relu")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ChebLayerParams:
    """K+1 per-order weight matrices and a shared output bias."""

    theta: np.ndarray
    bias: np.ndarray

    @property
    def order(self):
        return self.theta.shape[0] - 1


@dataclass
class BiLstmParams:
    """One LSTM direction; gate rows stacked as (input, forget, cell, output)."""

    w_in: np.ndarray
    w_hid: np.ndarray
    bias: np.ndarray

    @property
    def hidden_size(self):
        return self.w_hid.shape[1]


@dataclass
class GapHeadParams:
    """Gated attention pooling plus the scalar sigmoid classifier."""

    w_gate: np.ndarray
    b_gate: np.ndarray
    w_value: np.ndarray
    b_value: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes: feature width F, LSTM hidden H, pooled width P,
    Chebyshev order K, sequence length G."""

    f: int
    h: int = 32
    p: int = 32
    k: int = 2
    g: int = 3
    activation: str = "identity"

    def __post_init__(self):
        if min(self.f, self.h, self.p) < 1 or self.k < 0 or self.g < 1:
            raise ValidationError(f"invalid model sizes {self}")
        if self.activation not in _ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")


@dataclass
class FcpGnnModel:
    cheb1: ChebLayerParams
    cheb2: ChebLayerParams
    lstm_fw: BiLstmParams
    lstm_bw: BiLstmParams
    gap: GapHeadParams
    config: ModelConfig


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_model(config: ModelConfig, seed: int) -> FcpGnnModel:
    """Seeded initialization: uniform Glorot matrices, zero biases, LSTM
    forget-gate bias 1.0.  Parameters are drawn in a fixed order so a seed
    pins every value.
    """
    rng = np.random.default_rng(seed)
    f, h, p, k = config.f, config.h, config.p, config.k

    def cheb_params():
        return ChebLayerParams(
            theta=_glorot(rng, (k + 1, f, f), f, f),
            bias=np.zeros(f),
        )

    def lstm_params():
        bias = np.zeros(4 * h)
        bias[h : 2 * h] = 1.0
        return BiLstmParams(
            w_in=_glorot(rng, (4 * h, f), f, 4 * h),
            w_hid=_glorot(rng, (4 * h, h), h, 4 * h),
            bias=bias,
        )

    cheb1 = cheb_params()
    cheb2 = cheb_params()
    lstm_fw = lstm_params()
    lstm_bw = lstm_params()
    gap = GapHeadParams(
        w_gate=_glorot(rng, (p, 2 * h), 2 * h, p),
        b_gate=np.zeros(p),
        w_value=_glorot(rng, (p, 2 * h), 2 * h, p),
        b_value=np.zeros(p),
        w_out=_glorot(rng, (p,), p, 1),
        b_out=np.zeros(()),
    )
    return FcpGnnModel(
        cheb1=cheb1, cheb2=cheb2, lstm_fw=lstm_fw, lstm_bw=lstm_bw, gap=gap,
        config=config,
    )


def zero_model(config: ModelConfig) -> FcpGnnModel:
    """All-zero parameters (useful as a fixed point: every output is 0.5)."""
    model = init_model(config, seed=0)
    for name in PARAM_NAMES:
        get_param(model, name)[...] = 0.0
    return model


def _apply_activation(z: np.ndarray, kind: str):
    if kind == "identity":
        return z
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    raise ValidationError(f"unknown activation {kind!r}")


def cheb_polynomial_terms(l_tilde, x: np.ndarray, order: int) -> list:
    """[T_0(L~)X, ..., T_K(L~)X] via the Chebyshev recurrence."""
    terms = [x]
    if order >= 1:
        terms.append(spmm(l_tilde, x))
    for _ in range(2, order + 1):
        terms.append(2.0 * spmm(l_tilde, terms[-1]) - terms[-2])
    return terms


def cheb_layer_forward(
    x: np.ndarray, l_tilde, params: ChebLayerParams, activation: str = "identity",
    cache: dict = None,
):
    """Sum over polynomial orders of T_k(L~) X Theta_k, plus bias."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"features must be 2-D, got shape {x.shape}")
    if params.theta.shape[1] != x.shape[1]:
        raise ValidationError(
            f"layer expects {params.theta.shape[1]} input features, got {x.shape[1]}"
        )
    if l_tilde.shape != (x.shape[0], x.shape[0]):
        raise ValidationError(
            f"Laplacian shape {l_tilde.shape} does not match {x.shape[0]} nodes"
        )
    terms = cheb_polynomial_terms(l_tilde, x, params.order)
    z = terms[0] @ params.theta[0]
    for k in range(1, len(terms)):
        z = z + terms[k] @ params.theta[k]
    z = z + params.bias
    out = _apply_activation(z, activation)
    if cache is not None:
        cache["terms"] = terms
        cache["pre_activation"] = z
    return out


def build_generation_sequence(
    x1: np.ndarray, l_tilde, cheb1: ChebLayerParams, cheb2: ChebLayerParams,
    activation: str = "identity", cache: dict = None,
) -> np.ndarray:
    """Stack (X1, Cheb1(X1), Cheb2(Cheb1(X1))) into an (N, 3, F) sequence."""
    c1, c2 = {}, {}
    x2 = cheb_layer_forward(x1, l_tilde, cheb1, activation, c1)
    x3 = cheb_layer_forward(x2, l_tilde, cheb2, activation, c2)
    if cache is not None:
        cache["cheb1"] = c1
        cache["cheb2"] = c2
        cache["x2"] = x2
        cache["x3"] = x3
    return np.stack([x1, x2, x3], axis=1)


def _lstm_direction(seq: np.ndarray, params: BiLstmParams, cache: list = None):
    """Run one LSTM direction over seq (N, G, F) in given time order."""
    n, g, f = seq.shape
    h_size = params.hidden_size
    if params.w_in.shape[1] != f:
        raise ValidationError(
            f"LSTM expects {params.w_in.shape[1]} input features, got {f}"
        )
    h = np.zeros((n, h_size))
    c = np.zeros((n, h_size))
    outputs = np.empty((n, g, h_size))
    for t in range(g):
        x_t = seq[:, t, :]
        z = x_t @ params.w_in.T + h @ params.w_hid.T + params.bias
        gi = sigmoid(z[:, :h_size])
        gf = sigmoid(z[:, h_size : 2 * h_size])
        gg = np.tanh(z[:, 2 * h_size : 3 * h_size])
        go = sigmoid(z[:, 3 * h_size :])
        c_new = gf * c + gi * gg
        tanh_c = np.tanh(c_new)
        h_new = go * tanh_c
        if cache is not None:
            cache.append(
                {
                    "x": x_t, "h_prev": h, "c_prev": c,
                    "i": gi, "f": gf, "g": gg, "o": go,
                    "c": c_new, "tanh_c": tanh_c,
                }
            )
        h, c = h_new, c_new
        outputs[:, t, :] = h
    return outputs


def bilstm_forward(
    seq: np.ndarray, fw: BiLstmParams, bw: BiLstmParams, cache: dict = None
) -> np.ndarray:
    """Per-timestep concatenation of forward and backward hidden states.

    Both directions start from zero states; the backward pass consumes
    the sequence reversed and its outputs are re-reversed so index t
    always refers to the original timestep t.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3:
        raise ValidationError(f"sequence must be (N, G, F), got shape {seq.shape}")
    fw_cache = [] if cache is not None else None
    bw_cache = [] if cache is not None else None
    h_fw = _lstm_direction(seq, fw, fw_cache)
    h_bw = _lstm_direction(seq[:, ::-1, :], bw, bw_cache)[:, ::-1, :]
    if cache is not None:
        cache["fw"] = fw_cache
        cache["bw"] = bw_cache
    return np.concatenate([h_fw, h_bw], axis=2)


def gated_attention_pool(
    hidden: np.ndarray, params: GapHeadParams, cache: dict = None
) -> np.ndarray:
    """Sum over timesteps of sigmoid-gated tanh values, per node."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 3:
        raise ValidationError(f"hidden must be (N, G, 2H), got shape {hidden.shape}")
    if params.w_gate.shape[1] != hidden.shape[2]:
        raise ValidationError(
            f"pool expects width {params.w_gate.shape[1]}, got {hidden.shape[2]}"
        )
    gate = sigmoid(hidden @ params.w_gate.T + params.b_gate)
    value = np.tanh(hidden @ params.w_value.T + params.b_value)
    pooled = np.sum(gate * value, axis=1)
    if cache is not None:
        cache["gate"] = gate
        cache["value"] = value
        cache["pooled"] = pooled
    return pooled


def head_forward(pooled: np.ndarray, params: GapHeadParams, cache: dict = None):
    logits = pooled @ params.w_out + float(params.b_out)
    p = sigmoid(logits)
    if cache is not None:
        cache["logits"] = logits
        cache["p"] = p
    return p


def model_forward(
    model: FcpGnnModel, x1: np.ndarray, l_tilde, cache: dict = None
) -> np.ndarray:
    """Probabilities in (0, 1) for every node."""
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 2 or x1.shape[1] != model.config.f:
        raise ValidationError(
            f"features must be (N, {model.config.f}), got shape {x1.shape}"
        )
    cheb_cache = {} if cache is not None else None
    seq = build_generation_sequence(
        x1, l_tilde, model.cheb1, model.cheb2, model.config.activation, cheb_cache
    )
    lstm_cache = {} if cache is not None else None
    hidden = bilstm_forward(seq, model.lstm_fw, model.lstm_bw, lstm_cache)
    gap_cache = {} if cache is not None else None
    pooled = gated_attention_pool(hidden, model.gap, gap_cache)
    p = head_forward(pooled, model.gap, gap_cache)
    if cache is not None:
        cache["x1"] = x1
        cache["cheb"] = cheb_cache
        cache["seq"] = seq
        cache["lstm"] = lstm_cache
        cache["hidden"] = hidden
        cache["gap"] = gap_cache
    return p


def get_param(model: FcpGnnModel, name: str) -> np.ndarray:
    part, attr = name.split(".")
    return getattr(getattr(model, part), attr)


def set_param(model: FcpGnnModel, name: str, value: np.ndarray):
    part, attr = name.split(".")
    holder = getattr(model, part)
    current = getattr(holder, attr)
    if current.shape != value.shape:
        raise ValidationError(
            f"parameter {name} has shape {current.shape}, got {value.shape}"
        )
    setattr(holder, attr, np.asarray(value, dtype=np.float64))


def named_params(model: FcpGnnModel) -> dict:
    return {name: get_param(model, name) for name in PARAM_NAMES}


def flatten_params(params: dict) -> np.ndarray:
    """Concatenate parameter tensors into one vector, canonical order."""
    return np.concatenate([np.ravel(params[name]) for name in PARAM_NAMES])


def unflatten_params(flat: np.ndarray, template: dict) -> dict:
    out = {}
    offset = 0
    for name in PARAM_NAMES:
        shape = template[name].shape
        size = int(np.prod(shape)) if shape else 1
        out[name] = np.asarray(flat[offset : offset + size]).reshape(shape)
        offset += size
    if offset != len(flat):
        raise ValidationError(f"flat vector has {len(flat)} values, expected {offset}")
    return out


def copy_params(params: dict) -> dict:
    return {name: value.copy() for name, value in params.items()}


def set_all_params(model: FcpGnnModel, params: dict):
    for name in PARAM_NAMES:
        set_param(model, name, params[name])


def save_checkpoint(path, model: FcpGnnModel, pca, vocab_digest: str, run_config: dict):
    """Single-JSON checkpoint: config, vocabulary digest, PCA model, and
    every parameter tensor as shape plus row-major values."""
    from .jsonio import dump_json

    config = {
        "F": model.config.f,
        "H": model.config.h,
        "P": model.config.p,
        "K": model.config.k,
        "G": model.config.g,
        "activation": model.config.activation,
    }
    config.update(run_config)
    parameters = {}
    for name in PARAM_NAMES:
        value = get_param(model, name)
        parameters[name] = {
            "shape": list(value.shape),
            "values": np.ravel(value).tolist(),
        }
    dump_json(
        {
            "config": config,
            "vocabulary_digest": vocab_digest,
            "pca": pca.to_dict() if pca is not None else None,
            "parameters": parameters,
        },
        path,
    )


def load_checkpoint(path):
    """Inverse of save_checkpoint: (model, pca, vocab_digest, config)."""
    from .features import PcaModel
    from .jsonio import load_json

    doc = load_json(path)
    config = doc["config"]
    model_config = ModelConfig(
        f=int(config["F"]),
        h=int(config["H"]),
        p=int(config["P"]),
        k=int(config["K"]),
        g=int(config["G"]),
        activation=config.get("activation", "identity"),
    )
    model = init_model(model_config, seed=0)
    for name in PARAM_NAMES:
        entry = doc["parameters"][name]
        value = np.asarray(entry["values"], dtype=np.float64).reshape(
            tuple(entry["shape"])
        )
        set_param(model, name, value)
    pca = PcaModel.from_dict(doc["pca"]) if doc.get("pca") is not None else None
    return model, pca, doc.get("vocabulary_digest"), config
