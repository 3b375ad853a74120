"""Exact reverse-mode gradients for the predictor.

Every derivative is hand-derived from the forward definitions: the
polynomial-filter adjoint reuses the Chebyshev recurrence (the rescaled
Laplacian is symmetric, so transposes collapse), the LSTM part is
standard backpropagation through time, and the loss gradient with
respect to the probabilities comes from the metrics module.
"""

import numpy as np

from .metrics import ObjectiveWeights, total_loss, total_loss_grad_p
from .model import FcpGnnModel, PARAM_NAMES, model_forward
from .kernels import spmm


def _cheb_backward(d_out, cache, theta, l_tilde, activation):
    """Gradients of one Chebyshev layer.

    Returns (d_theta, d_bias, d_x).  The input gradient runs the
    recurrence adjoint: d_t[k-1] += 2 L~ d_t[k]; d_t[k-2] -= d_t[k],
    valid because L~ is symmetric.
    """
    terms = cache["terms"]
    pre = cache["pre_activation"]
    order = len(terms) - 1
    if activation == "identity":
        d_z = d_out
    elif activation == "tanh":
        d_z = d_out * (1.0 - np.tanh(pre) ** 2)
    else:
        d_z = d_out * (pre > 0)

    d_theta = np.empty_like(theta)
    for k in range(order + 1):
        d_theta[k] = terms[k].T @ d_z
    d_bias = d_z.sum(axis=0)

    d_terms = [d_z @ theta[k].T for k in range(order + 1)]
    for k in range(order, 1, -1):
        d_terms[k - 1] += 2.0 * spmm(l_tilde, d_terms[k])
        d_terms[k - 2] -= d_terms[k]
    d_x = d_terms[0]
    if order >= 1:
        d_x = d_x + spmm(l_tilde, d_terms[1])
    return d_theta, d_bias, d_x


def _lstm_direction_backward(d_out, steps, params):
    """BPTT for one direction.

    ``d_out`` is (N, G, H) in the direction's own processing order,
    matching ``steps``.  Returns (d_w_in, d_w_hid, d_bias, d_seq) with
    d_seq also in processing order.
    """
    n, g, h = d_out.shape
    d_w_in = np.zeros_like(params.w_in)
    d_w_hid = np.zeros_like(params.w_hid)
    d_bias = np.zeros_like(params.bias)
    d_seq = np.empty((n, g, params.w_in.shape[1]))
    dh_next = np.zeros((n, h))
    dc_next = np.zeros((n, h))
    for t in range(g - 1, -1, -1):
        s = steps[t]
        dh = d_out[:, t, :] + dh_next
        do = dh * s["tanh_c"]
        dc = dh * s["o"] * (1.0 - s["tanh_c"] ** 2) + dc_next
        df = dc * s["c_prev"]
        di = dc * s["g"]
        dg = dc * s["i"]
        dc_next = dc * s["f"]

        dz_i = di * s["i"] * (1.0 - s["i"])
        dz_f = df * s["f"] * (1.0 - s["f"])
        dz_g = dg * (1.0 - s["g"] ** 2)
        dz_o = do * s["o"] * (1.0 - s["o"])
        dz = np.concatenate([dz_i, dz_f, dz_g, dz_o], axis=1)

        d_w_in += dz.T @ s["x"]
        d_w_hid += dz.T @ s["h_prev"]
        d_bias += dz.sum(axis=0)
        d_seq[:, t, :] = dz @ params.w_in
        dh_next = dz @ params.w_hid
    return d_w_in, d_w_hid, d_bias, d_seq


def model_backward(model: FcpGnnModel, cache: dict, d_p: np.ndarray) -> dict:
    """Parameter gradients given d(loss)/d(probabilities).

    ``cache`` must come from model_forward with caching enabled.
    """
    gap_cache = cache["gap"]
    hidden = cache["hidden"]
    p = gap_cache["p"]
    pooled = gap_cache["pooled"]
    gate = gap_cache["gate"]
    value = gap_cache["value"]
    h2 = hidden.shape[2]
    h_size = h2 // 2

    d_logits = np.asarray(d_p) * p * (1.0 - p)
    d_w_out = pooled.T @ d_logits
    d_b_out = np.asarray(d_logits.sum()).reshape(())
    d_pooled = np.outer(d_logits, model.gap.w_out)

    d_gate = d_pooled[:, None, :] * value
    d_value = d_pooled[:, None, :] * gate
    d_zg = d_gate * gate * (1.0 - gate)
    d_zv = d_value * (1.0 - value**2)
    d_w_gate = np.einsum("ntp,nth->ph", d_zg, hidden)
    d_b_gate = d_zg.sum(axis=(0, 1))
    d_w_value = np.einsum("ntp,nth->ph", d_zv, hidden)
    d_b_value = d_zv.sum(axis=(0, 1))
    d_hidden = d_zg @ model.gap.w_gate + d_zv @ model.gap.w_value

    d_h_fw = d_hidden[:, :, :h_size]
    d_h_bw = d_hidden[:, ::-1, h_size:]
    fw_grads = _lstm_direction_backward(
        np.ascontiguousarray(d_h_fw), cache["lstm"]["fw"], model.lstm_fw
    )
    bw_grads = _lstm_direction_backward(
        np.ascontiguousarray(d_h_bw), cache["lstm"]["bw"], model.lstm_bw
    )
    d_seq = fw_grads[3] + bw_grads[3][:, ::-1, :]

    d_x3 = d_seq[:, 2, :]
    activation = model.config.activation
    l_tilde = cache["l_tilde"]
    d_theta2, d_bias2, d_x2_cheb = _cheb_backward(
        d_x3, cache["cheb"]["cheb2"], model.cheb2.theta, l_tilde, activation
    )
    d_x2 = d_seq[:, 1, :] + d_x2_cheb
    d_theta1, d_bias1, d_x1_cheb = _cheb_backward(
        d_x2, cache["cheb"]["cheb1"], model.cheb1.theta, l_tilde, activation
    )

    return {
        "cheb1.theta": d_theta1,
        "cheb1.bias": d_bias1,
        "cheb2.theta": d_theta2,
        "cheb2.bias": d_bias2,
        "lstm_fw.w_in": fw_grads[0],
        "lstm_fw.w_hid": fw_grads[1],
        "lstm_fw.bias": fw_grads[2],
        "lstm_bw.w_in": bw_grads[0],
        "lstm_bw.w_hid": bw_grads[1],
        "lstm_bw.bias": bw_grads[2],
        "gap.w_gate": d_w_gate,
        "gap.b_gate": d_b_gate,
        "gap.w_value": d_w_value,
        "gap.b_value": d_b_value,
        "gap.w_out": d_w_out,
        "gap.b_out": d_b_out,
        "_input": d_x1_cheb + d_seq[:, 0, :],
    }


def loss_and_grads(
    model: FcpGnnModel,
    x1: np.ndarray,
    l_tilde,
    d: np.ndarray,
    mask=None,
    weights: ObjectiveWeights = None,
    class_weights=None,
    sw_mode: str = "soft",
):
    """One full forward/backward sweep.

    Returns (loss, gradient dict over PARAM_NAMES, probabilities).
    """
    cache = {}
    p = model_forward(model, x1, l_tilde, cache)
    cache["l_tilde"] = l_tilde
    loss = total_loss(d, p, mask, weights, class_weights, sw_mode)
    d_p = total_loss_grad_p(d, p, mask, weights, class_weights, sw_mode)
    grads = model_backward(model, cache, d_p)
    grads.pop("_input")
    return loss, grads, p


def zero_grads(model: FcpGnnModel) -> dict:
    from .model import get_param

    return {name: np.zeros_like(get_param(model, name)) for name in PARAM_NAMES}
