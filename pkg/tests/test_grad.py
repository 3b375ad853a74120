"""Analytic gradients of the composite loss against central differences."""

import numpy as np
import pytest

from phylo_forecast import (
    ModelConfig,
    ObjectiveWeights,
    build_fcpn,
    class_weight_vector,
    init_model,
    loss_and_grads,
    scaled_laplacian,
    total_loss,
)
from phylo_forecast.model import (
    flatten_params,
    model_forward,
    named_params,
    set_all_params,
    unflatten_params,
    zero_model,
)
from phylo_forecast.grad import zero_grads
from phylo_forecast.synth import generate_panel, random_small_config
from phylo_forecast.panel import build_vocabulary, encode_chromosomes
from phylo_forecast.labeling import detect_dominant_genotypes, label_dominant_products
from phylo_forecast import fit_pca, transform_pca


def small_instance(seed=7, h=4, p=3, rho=0.85):
    records, _ = generate_panel(random_small_config(seed))
    vocab = build_vocabulary(records)
    chrom = encode_chromosomes(records, vocab)
    labels = label_dominant_products(chrom, detect_dominant_genotypes(chrom, 0.5))
    net = build_fcpn(chrom)
    lap = scaled_laplacian(net.weights)
    x = transform_pca(fit_pca(chrom, rho), chrom)
    model = init_model(ModelConfig(f=x.shape[1], h=h, p=p), seed=1)
    d = labels.d.astype(float)
    if d.sum() == 0:
        d[0] = 1.0
    if d.sum() == len(d):
        d[-1] = 0.0
    return model, x, lap.l_tilde, d


def loss_of(model, vec, x, lt, d, mask, w, cw, mode):
    probe = zero_model(model.config)
    set_all_params(probe, unflatten_params(vec, named_params(probe)))
    return total_loss(d, model_forward(probe, x, lt), mask, w, cw, mode)


@pytest.mark.parametrize("activation", ["identity", "tanh", "relu"])
def test_every_parameter_gradient(activation):
    model, x, lt, d = small_instance()
    model = init_model(
        ModelConfig(f=x.shape[1], h=3, p=3, activation=activation), seed=2
    )
    mask = np.ones(len(d), dtype=bool)
    w = ObjectiveWeights()
    cw = class_weight_vector(d, mask)

    _, grads, _ = loss_and_grads(model, x, lt, d, mask, w, cw, "soft")
    flat = flatten_params(grads)
    theta = flatten_params(named_params(model))

    step = 1e-5
    worst = 0.0
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        fd = (
            loss_of(model, up, x, lt, d, mask, w, cw, "soft")
            - loss_of(model, dn, x, lt, d, mask, w, cw, "soft")
        ) / (2 * step)
        denom = max(abs(fd), abs(flat[i]), 1e-7)
        worst = max(worst, abs(fd - flat[i]) / denom)
    assert worst <= 1e-3


def test_masked_nodes_do_not_leak():
    model, x, lt, d = small_instance(seed=11)
    full = np.ones(len(d), dtype=bool)
    half = full.copy()
    half[len(d) // 2 :] = False
    d[0], d[1] = 1.0, 0.0  # keep both classes inside the half mask
    w = ObjectiveWeights()

    loss_half, grads_half, _ = loss_and_grads(model, x, lt, d, half, w, None, "soft")
    loss_full, grads_full, _ = loss_and_grads(model, x, lt, d, full, w, None, "soft")
    assert loss_half != pytest.approx(loss_full)
    diff = flatten_params(grads_half) - flatten_params(grads_full)
    assert np.abs(diff).max() > 0


def test_hard_mode_gradient_is_bce_only():
    model, x, lt, d = small_instance(seed=13)
    mask = np.ones(len(d), dtype=bool)
    w = ObjectiveWeights()
    zero_w = ObjectiveWeights.from_sequence([0, 0, 0, 0, 0, 0])

    _, grads_hard, _ = loss_and_grads(model, x, lt, d, mask, w, None, "hard")
    _, grads_bce, _ = loss_and_grads(model, x, lt, d, mask, zero_w, None, "soft")
    np.testing.assert_allclose(
        flatten_params(grads_hard), flatten_params(grads_bce), atol=1e-12
    )


def test_loss_and_grads_returns_probabilities():
    model, x, lt, d = small_instance(seed=3)
    mask = np.ones(len(d), dtype=bool)
    loss, grads, p = loss_and_grads(
        model, x, lt, d, mask, ObjectiveWeights(), None, "soft"
    )
    assert np.isfinite(loss)
    assert p.shape == d.shape
    np.testing.assert_array_equal(p, model_forward(model, x, lt))
    assert set(grads) == set(named_params(model))


def test_zero_grads_shapes():
    model, _, _, _ = small_instance(seed=5)
    z = zero_grads(model)
    for name, arr in named_params(model).items():
        assert z[name].shape == arr.shape
        assert not z[name].any()
