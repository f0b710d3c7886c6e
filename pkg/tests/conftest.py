"""Shared fixtures and independent reference implementations."""
import math

import numpy as np
import pytest

from qframelet.graph import build_graph


def random_graph(seed: int, n: int, p: float = 0.3):
    """Erdos-Renyi graph; may contain isolated nodes."""
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return build_graph(n, np.argwhere(upper))


def dense_laplacian(g) -> np.ndarray:
    """I - D^-1/2 A D^-1/2 written out entry by entry."""
    A = g.adjacency.toarray()
    deg = A.sum(axis=1)
    n = A.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        if deg[i] > 0:
            L[i, i] = 1.0
        for j in range(n):
            if A[i, j]:
                L[i, j] -= 1.0 / math.sqrt(deg[i] * deg[j])
    return L


def ref_sigmoid(alpha):
    def g0(x):
        return math.sqrt(1.0 / (1.0 + math.exp(alpha * (x / math.pi - 0.5))))

    def g1(x):
        return math.sqrt(1.0 / (1.0 + math.exp(-alpha * (x / math.pi - 0.5))))

    return [g0, g1]


def ref_entropy(alpha):
    def h(x):
        t = x / math.pi
        return 4 * alpha * t * (1 - t)

    def g0(x):
        return math.sqrt(max(1 - h(x), 0.0)) if x <= math.pi / 2 else 0.0

    def g1(x):
        return math.sqrt(max(h(x), 0.0))

    def g2(x):
        return math.sqrt(max(1 - h(x), 0.0)) if x > math.pi / 2 else 0.0

    return [g0, g1, g2]


def ref_coarsest(lam_max, dilation):
    """Smallest integer m with lam_max / dilation**m <= pi, by linear search."""
    m = -200
    while lam_max / dilation ** m > math.pi:
        m += 1
    return m


def ref_blocks(L_dense, funcs, levels, dilation, eig=None):
    """Dense transform blocks built directly from the block formulas.

    ``eig`` pins the eigenpairs: Entropy's g_1 has infinite slope at 0, so a
    zero eigenvalue rounded differently moves entries by ~1e-8.
    """
    lam, U = eig if eig is not None else np.linalg.eigh(L_dense)
    lam = np.clip(lam, 0.0, 2.0)
    m = ref_coarsest(lam.max(), dilation)
    K = len(funcs) - 1

    def diag(k, level):
        return np.array([funcs[k](min(x / dilation ** (m + level), math.pi)) for x in lam])

    def low_chain(upto):
        c = np.ones_like(lam)
        for j in range(upto):
            c = c * diag(0, j)
        return c

    mats = [U @ np.diag(low_chain(levels + 1)) @ U.T]
    for level in range(levels + 1):
        for k in range(1, K + 1):
            mats.append(U @ np.diag(diag(k, level) * low_chain(level)) @ U.T)
    return np.stack(mats)


@pytest.fixture
def small_graph():
    return random_graph(3, 12, 0.35)


def finite_difference_check(model, plans, X, labels, idx, weight_decay=5e-4, step=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    The error of each tensor is ``max|g - g_fd| / max(max|g|, max|g_fd|, 1e-8)``.
    """
    from qframelet.nn import loss_and_grads

    _, grads = loss_and_grads(model, plans, X, labels, idx, weight_decay, training=False)
    worst = {}
    for name, p in model.parameters().items():
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + step
            up, _ = loss_and_grads(model, plans, X, labels, idx, weight_decay, training=False)
            p[i] = orig - step
            down, _ = loss_and_grads(model, plans, X, labels, idx, weight_decay, training=False)
            p[i] = orig
            fd[i] = (up - down) / (2 * step)
        scale = max(np.abs(grads[name]).max(), np.abs(fd).max(), 1e-8)
        worst[name] = float(np.abs(grads[name] - fd).max() / scale)
    return worst


def perturbed_network(plan, d_in, hidden, classes, seed, variant):
    """Network with non-trivial filters and thresholds so every path is exercised."""
    from qframelet.nn import NetworkParams

    net = NetworkParams.init(d_in, hidden, classes, plan, seed=seed, dropout_rate=0.0, variant=variant)
    rng = np.random.default_rng(seed)
    for layer in (net.layer1, net.layer2):
        layer.spectral_filter[...] = 1.0 + 0.5 * rng.standard_normal(layer.spectral_filter.shape)
        layer.shrink_raw[...] = np.log(np.expm1(0.05 + 0.05 * rng.random(layer.shrink_raw.shape)))
    return net


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
