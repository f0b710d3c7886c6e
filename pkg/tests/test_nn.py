import numpy as np
import pytest

from conftest import finite_difference_check, perturbed_network, random_graph
from qframelet.chebyshev import make_plan, polynomial_blocks
from qframelet.data import two_clique_dataset
from qframelet.errors import ConfigError, InputError
from qframelet.exact import eigendecompose
from qframelet.graph import build_graph, normalized_laplacian
from qframelet.modulation import entropy, sigmoid
from qframelet.nn import (
    AdamState,
    ConvLayerParams,
    HeteroModelParams,
    NetworkParams,
    TrainConfig,
    TrainData,
    adam_step,
    conv_forward,
    cross_entropy,
    forward,
    hetero_forward,
    loss_and_grads,
    merge_outputs,
    predict,
    soft_threshold,
    train,
)

SIX = build_graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)])


def plan_for(g, fam=None, levels=1, degree=3, cutoff="none"):
    return make_plan(normalized_laplacian(g), fam or entropy(), levels, degree=degree, cutoff=cutoff)


def test_soft_threshold_examples():
    assert soft_threshold(0.5, 0.2) == pytest.approx(0.3)
    assert soft_threshold(-0.1, 0.2) == 0.0
    x = np.random.default_rng(0).standard_normal(20)
    assert np.array_equal(soft_threshold(x, 0.0), x)
    assert np.all(np.abs(soft_threshold(x, 0.3)) <= np.abs(x))


def test_identity_filter_is_transparent():
    # at degree 80 the Sigmoid partition error is ~1e-12, so the round trip is exact to 1e-8
    plan = plan_for(SIX, sigmoid(20), levels=1, degree=80)
    layer = ConvLayerParams.init(3, 2, plan.num_blocks, 6, seed=1)
    X = np.random.default_rng(1).standard_normal((6, 3))
    out = conv_forward(plan, layer, X, relu=False)
    assert np.abs(out - X @ layer.feature_weights).max() <= 1e-8


def test_zero_filter_gives_zero():
    plan = plan_for(SIX)
    layer = ConvLayerParams.init(3, 2, plan.num_blocks, 6)
    layer.spectral_filter[...] = 0.0
    assert np.all(conv_forward(plan, layer, np.ones((6, 3))) == 0)


@pytest.mark.parametrize("variant", ["relu-filter", "shrinkage"])
@pytest.mark.parametrize("cutoff", ["none", "partial", "full"])
def test_conv_matches_dense_oracle(variant, cutoff):
    g = random_graph(2, 15, 0.3)
    lap = normalized_laplacian(g)
    plan = make_plan(lap, entropy(), 2, cutoff=cutoff)
    blocks = polynomial_blocks(eigendecompose(lap), plan)
    rng = np.random.default_rng(3)
    layer = ConvLayerParams.init(4, 3, plan.num_blocks, 15, seed=2)
    layer.spectral_filter[...] = rng.standard_normal(layer.spectral_filter.shape)
    layer.shrink_raw[...] = np.log(np.expm1(0.1))
    X = rng.standard_normal((15, 4))
    Xp = X @ layer.feature_weights
    want = np.zeros((15, 3))
    for b in range(plan.num_blocks):
        c = layer.spectral_filter[b][:, None] * (blocks[b] @ Xp)
        if variant == "shrinkage":
            c = np.sign(c) * np.maximum(np.abs(c) - 0.1, 0)
        if plan.mask[b]:
            want += blocks[b].T @ c
    got = conv_forward(plan, layer, X, variant, relu=False)
    assert np.abs(got - want).max() <= 1e-9


def test_conv_linear_in_input():
    plan = plan_for(SIX, levels=2)
    layer = ConvLayerParams.init(3, 2, plan.num_blocks, 6, seed=4)
    layer.spectral_filter[...] = np.random.default_rng(4).standard_normal(layer.spectral_filter.shape)
    X, Y = np.random.default_rng(5).standard_normal((2, 6, 3))
    f = lambda Z: conv_forward(plan, layer, Z, relu=False)
    assert np.abs(f(2 * X - Y) - (2 * f(X) - f(Y))).max() <= 1e-10


def test_cutoff_monotone_norms():
    g = random_graph(7, 30, 0.2)
    X = np.random.default_rng(7).standard_normal((30, 3))
    norms = []
    for mode in ("full", "partial", "none"):
        plan = plan_for(g, levels=2, cutoff=mode)
        layer = ConvLayerParams.init(3, 3, plan.num_blocks, 30, seed=0)
        layer.feature_weights[...] = np.eye(3)
        norms.append(np.linalg.norm(conv_forward(plan, layer, X, relu=False)))
    assert norms[0] <= norms[1] <= norms[2]


def test_input_shape_errors():
    plan = plan_for(SIX)
    layer = ConvLayerParams.init(3, 2, plan.num_blocks, 6)
    with pytest.raises(InputError):
        conv_forward(plan, layer, np.ones((6, 4)))
    with pytest.raises(InputError):
        conv_forward(plan, ConvLayerParams.init(3, 2, plan.num_blocks, 5), np.ones((6, 3)))
    with pytest.raises(ConfigError):
        conv_forward(plan, layer, np.ones((6, 3)), variant="gelu")


def test_forward_deterministic_and_zero_input():
    plan = plan_for(SIX)
    net = NetworkParams.init(3, 4, 2, plan, seed=3, dropout_rate=0.0)
    X = np.random.default_rng(0).standard_normal((6, 3))
    a, _ = forward(net, plan, X, training=True, seed=1)
    b, _ = forward(net, plan, X, training=True, seed=1)
    assert np.array_equal(a, b)
    z, _ = forward(net, plan, np.zeros((6, 3)))
    assert np.all(z == 0)


def test_forward_matches_straight_line_computation():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    lap = normalized_laplacian(g)
    plan = make_plan(lap, sigmoid(20), 1)
    blocks = polynomial_blocks(eigendecompose(lap), plan)
    rng = np.random.default_rng(9)
    net = NetworkParams.init(2, 3, 2, plan, seed=9, dropout_rate=0.0)
    for layer in (net.layer1, net.layer2):
        layer.spectral_filter[...] = rng.uniform(0.5, 1.5, layer.spectral_filter.shape)
    X = rng.standard_normal((5, 2))

    def dense_conv(layer, H):
        Hp = H @ layer.feature_weights
        return sum(blocks[b] @ (layer.spectral_filter[b][:, None] * (blocks[b] @ Hp)) for b in range(len(blocks)))

    want = dense_conv(net.layer2, np.maximum(dense_conv(net.layer1, X), 0))
    got, _ = forward(net, plan, X)
    assert np.abs(got - want).max() <= 1e-12


@pytest.mark.parametrize("variant", ["relu-filter", "shrinkage"])
@pytest.mark.parametrize("cutoff", ["none", "partial", "full"])
@pytest.mark.parametrize("fam", [sigmoid(20), entropy(0.75)])
def test_gradients_match_finite_differences(variant, cutoff, fam):
    plan = plan_for(SIX, fam, levels=1, cutoff=cutoff)
    net = perturbed_network(plan, 3, 4, 2, seed=0, variant=variant)
    X = np.random.default_rng(0).standard_normal((6, 3))
    labels = np.array([0, 1, 0, 1, 1, 0])
    errs = finite_difference_check(net, plan, X, labels, np.array([0, 1, 3, 4]))
    assert max(errs.values()) <= 1e-4, errs


def test_hetero_gradients_match_finite_differences():
    plans = [plan_for(SIX), plan_for(build_graph(6, [(0, 2), (2, 4), (1, 3), (3, 5), (0, 5)]))]
    hm = HeteroModelParams.init(3, 4, 2, plans, seed=1, dropout_rate=0.0, merge="weighted", classifier_width=3)
    hm.merge_logits[...] = [0.3, -0.2]
    X = np.random.default_rng(1).standard_normal((6, 3))
    errs = finite_difference_check(hm, plans, X, np.array([0, 1, 0, 1, 1, 0]), np.arange(6))
    assert max(errs.values()) <= 1e-4, errs


def test_duplicated_training_nodes_keep_mean_loss():
    plan = plan_for(SIX)
    net = NetworkParams.init(3, 4, 2, plan, seed=2, dropout_rate=0.0)
    X = np.random.default_rng(2).standard_normal((6, 3))
    labels = np.array([0, 1, 0, 1, 1, 0])
    idx = np.array([0, 2, 5])
    a, _ = loss_and_grads(net, plan, X, labels, idx, 0.0, training=False)
    b, _ = loss_and_grads(net, plan, X, labels, np.concatenate([idx, idx]), 0.0, training=False)
    assert a == pytest.approx(b, abs=1e-14)
    mask = np.zeros(6, dtype=bool)
    mask[idx] = True
    c, _ = loss_and_grads(net, plan, X, labels, mask, 0.0, training=False)
    assert a == c
    with pytest.raises(InputError):
        loss_and_grads(net, plan, X, labels, np.zeros(6, dtype=bool))


def test_cross_entropy_limit():
    labels = np.array([0, 1])
    base = np.array([[1.0, -1.0], [-1.0, 1.0]])
    losses = [cross_entropy(s * base, labels, np.arange(2))[0] for s in (1, 2, 5, 10, 40)]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-30


def test_adam_zero_gradient_and_first_step():
    cfg = TrainConfig(learning_rate=0.01)
    p = {"w": np.array([1.0, -2.0, 3.0])}
    adam_step(AdamState(), p, {"w": np.zeros(3)}, cfg)
    assert p["w"].tolist() == [1.0, -2.0, 3.0]
    adam_step(AdamState(), p, {"w": np.array([0.5, -4.0, 0.0])}, cfg)
    assert p["w"] == pytest.approx([0.99, -1.99, 3.0], abs=1e-9)


def test_adam_converges_on_quadratic():
    # minimise (w - 3)^2; closed-form minimiser 3
    cfg = TrainConfig(learning_rate=0.01)
    p = {"w": np.array([0.0])}
    state = AdamState()
    for _ in range(5000):
        adam_step(state, p, {"w": 2 * (p["w"] - 3.0)}, cfg)
    assert abs(p["w"][0] - 3.0) <= 1e-6


def toy_training(seed, variant="relu-filter", lr=0.01):
    ds = two_clique_dataset()
    plan = make_plan(normalized_laplacian(ds.graph), entropy(), 2)
    net = NetworkParams.init(ds.num_features, 32, 2, plan, seed=seed, variant=variant)
    data = TrainData(ds.features, ds.labels, ds.train_idx, ds.val_idx, ds.test_idx)
    return ds, plan, net, train(net, plan, data, TrainConfig(learning_rate=lr, seed=seed))


@pytest.mark.parametrize("variant", ["relu-filter", "shrinkage"])
def test_two_clique_reaches_full_accuracy(variant):
    ds, plan, _, (best, _) = toy_training(0, variant)
    pred = np.argmax(predict(best, plan, ds.features), axis=1)
    assert np.mean(pred[ds.test_idx] == ds.labels[ds.test_idx]) == 1.0


def test_training_is_reproducible():
    _, _, _, (a, ha) = toy_training(5)
    _, _, _, (b, hb) = toy_training(5)
    assert ha.train_loss == hb.train_loss
    for k, v in a.parameters().items():
        assert np.array_equal(v, b.parameters()[k])


def test_zero_learning_rate_keeps_params():
    _, _, net, (best, hist) = toy_training(1, lr=0.0)
    for k, v in net.parameters().items():
        assert np.array_equal(v, best.parameters()[k])
    assert len(set(hist.val_accuracy)) == 1


def test_early_stopping_restores_best():
    ds = two_clique_dataset()
    plan = make_plan(normalized_laplacian(ds.graph), entropy(), 1)
    net = NetworkParams.init(2, 8, 2, plan, seed=0)
    data = TrainData(ds.features, ds.labels, ds.train_idx, ds.val_idx, ds.test_idx)
    best, hist = train(net, plan, data, TrainConfig(epochs=50, early_stop_patience=5))
    assert hist.stopped_epoch - hist.best_epoch <= 5
    assert hist.val_accuracy[hist.best_epoch] == max(hist.val_accuracy)


def test_single_metapath_equals_homogeneous():
    plan = plan_for(SIX, levels=2)
    X = np.random.default_rng(3).standard_normal((6, 3))
    net = NetworkParams.init(3, 4, 2, plan, seed=4)
    hm = HeteroModelParams.init(3, 4, 2, [plan], seed=4)
    for training in (False, True):
        a, _ = forward(net, plan, X, training, seed=4, step=2)
        b, _ = hetero_forward(hm, [plan], X, training, seed=4, step=2)
        assert np.array_equal(a, b)


def test_identical_metapaths_mean_equals_single_branch():
    plan = plan_for(SIX)
    X = np.random.default_rng(4).standard_normal((6, 3))
    hm = HeteroModelParams.init(3, 4, 2, [plan, plan], seed=0)
    hm.branches[1] = hm.branches[0].copy()
    one, _ = forward(hm.branches[0], plan, X)
    both, _ = hetero_forward(hm, [plan, plan], X)
    assert np.abs(both - one).max() <= 1e-15


def test_merge_endpoint_weights():
    a, b = np.random.default_rng(5).standard_normal((2, 4, 3))
    assert np.array_equal(merge_outputs([a, b], [1.0, 0.0]), a)
    assert np.array_equal(merge_outputs([a], [1.0]), a)


def test_hetero_config_errors():
    with pytest.raises(ConfigError):
        HeteroModelParams([], "mean")
    plan = plan_for(SIX)
    with pytest.raises(ConfigError):
        HeteroModelParams.init(3, 4, 2, [plan], merge="attention")
    hm = HeteroModelParams.init(3, 4, 2, [plan])
    with pytest.raises(ConfigError):
        hetero_forward(hm, [plan, plan], np.ones((6, 3)))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-1)
    plan = plan_for(SIX)
    with pytest.raises(ConfigError):
        NetworkParams.init(3, 4, 2, plan, dropout_rate=1.0)
