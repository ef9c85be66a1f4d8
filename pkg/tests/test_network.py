import numpy as np
import pytest
import torch

from arbsim.features import LfbeImage
from arbsim.network import (ArbitratorModel, ModelConfig, ModelError,
                            build_model, classify, extract_embedding,
                            gradient_check, gradient_norm)


def _features(rng, n_devices, batch=1):
    return rng.standard_normal((batch, n_devices, 201, 64)) * 0.5


def test_parameter_count():
    model = build_model()
    assert model.param_count == 124657
    assert model.param_count < 200_000


def test_forward_shapes():
    model = build_model().double()
    rng = np.random.default_rng(0)
    for n in (2, 3, 4, 5):
        x = torch.as_tensor(_features(rng, n, batch=3))
        logits = model(x)
        assert logits.shape == (3, n)
        probs = torch.softmax(logits, dim=1)
        assert torch.allclose(probs.sum(dim=1),
                              torch.ones(3, dtype=torch.float64))


def test_permutation_equivariance():
    model = build_model(seed=1).double()
    rng = np.random.default_rng(1)
    x = torch.as_tensor(_features(rng, 4))
    logits = model(x).detach().numpy()[0]
    perm = [2, 0, 3, 1]
    permuted_logits = model(x[:, perm]).detach().numpy()[0]
    assert np.allclose(permuted_logits, logits[perm], atol=1e-10)


def test_identical_devices_tie():
    model = build_model(seed=2).double()
    rng = np.random.default_rng(2)
    one = _features(rng, 1)
    x = torch.as_tensor(np.repeat(one, 3, axis=1))
    logits = model(x).detach().numpy()[0]
    assert np.allclose(logits, logits[0], atol=1e-10)


def test_build_model_seed_determinism():
    a = build_model(seed=5)
    b = build_model(seed=5)
    c = build_model(seed=6)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc)
               for pa, pc in zip(a.parameters(), c.parameters()))


def test_he_uniform_init_zero_bias():
    model = build_model(seed=0)
    for module in model.modules():
        if isinstance(module, (torch.nn.Conv2d, torch.nn.Linear)):
            assert torch.all(module.bias == 0)
            assert module.weight.abs().max() > 0


def test_embedding_and_classify_match_forward():
    model = build_model(seed=3).double()
    rng = np.random.default_rng(3)
    feats = _features(rng, 3)[0]
    embeddings = [extract_embedding(LfbeImage(values=f), model) for f in feats]
    out = classify(embeddings, model)
    direct = model(torch.as_tensor(feats).unsqueeze(0)).detach().numpy()[0]
    assert np.allclose(out.logits, direct, atol=1e-10)
    assert out.probabilities.sum() == pytest.approx(1.0)
    assert np.array_equal(np.argsort(out.logits), np.argsort(out.probabilities))


def test_helper_error_cases():
    model = build_model()
    with pytest.raises(ModelError):
        classify([], model)
    bad = LfbeImage.__new__(LfbeImage)
    object.__setattr__(bad, "values", np.zeros((10, 10)))
    with pytest.raises(ModelError):
        extract_embedding(bad, model)


def test_gradient_check_small_config():
    config = ModelConfig().small()
    model = build_model(config, seed=7)
    rng = np.random.default_rng(7)
    assert gradient_check(model, _features(rng, 3)[0], label=1) < 1e-6


def test_gradient_check_linear_only():
    config = ModelConfig(linear_only=True).small()
    model = build_model(config, seed=8)
    rng = np.random.default_rng(8)
    assert gradient_check(model, _features(rng, 2)[0], label=0) < 1e-7


def test_gradient_vanishes_at_confident_optimum():
    # scale the classifier head so the correct logit dominates by ~50 nats;
    # the cross-entropy loss and its gradient must then be numerically zero
    config = ModelConfig().small()
    model = build_model(config, seed=9).double()
    rng = np.random.default_rng(9)
    feats = _features(rng, 3)[0]
    with torch.no_grad():
        logits = model(torch.as_tensor(feats).unsqueeze(0))[0]
        label = int(torch.argmax(logits))
        gap = float(torch.sort(logits, descending=True).values[0]
                    - torch.sort(logits, descending=True).values[1])
        head = model.classifier.g[-1]
        head.weight *= 50.0 / gap
        head.bias *= 50.0 / gap
    assert gradient_norm(model, feats, label) < 1e-6


def test_small_config_is_small():
    small = ArbitratorModel(ModelConfig().small())
    assert small.param_count < 1000
