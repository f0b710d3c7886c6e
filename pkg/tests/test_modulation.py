import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ref_entropy, ref_sigmoid
from qframelet.errors import ConfigError, InputError
from qframelet.modulation import (
    PI,
    custom_family,
    entropy,
    evaluate,
    evaluate_all,
    make_family,
    sigmoid,
    validate_partition,
)

GRID = np.linspace(0.0, PI, 1001)


def test_sigmoid_midpoint():
    assert evaluate(sigmoid(20), 0, PI / 2) == pytest.approx(0.7071068, abs=1e-7)
    assert evaluate(sigmoid(20), 1, PI / 2) == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_entropy_midpoint():
    fam = entropy(0.75)
    assert evaluate(fam, 1, PI / 2) == pytest.approx(0.8660254, abs=1e-7)
    assert evaluate(fam, 0, PI / 2) == pytest.approx(0.5, abs=1e-15)
    assert evaluate(fam, 2, PI / 2) == 0.0


@pytest.mark.parametrize("xi", [0.0, PI])
def test_entropy_bump_vanishes_at_ends(xi):
    assert evaluate(entropy(0.75), 1, xi) == 0.0


def test_entropy_alpha_one_peaks_at_one():
    fam = entropy(1.0)
    assert evaluate(fam, 1, PI / 2) == pytest.approx(1.0, abs=1e-15)
    assert validate_partition(fam) <= 1e-12


@pytest.mark.parametrize("fam,ref", [(sigmoid(20), ref_sigmoid(20)), (sigmoid(3.5), ref_sigmoid(3.5)),
                                     (entropy(0.75), ref_entropy(0.75)), (entropy(0.1), ref_entropy(0.1))])
def test_matches_reference_closed_forms(fam, ref):
    for k in range(fam.K + 1):
        want = np.array([ref[k](x) for x in GRID])
        assert np.allclose(evaluate(fam, k, GRID), want, atol=1e-14)


@pytest.mark.parametrize("fam", [sigmoid(20), sigmoid(10), sigmoid(50), entropy(0.75), entropy(0.1), entropy(0.5)])
def test_partition_and_monotonicity(fam):
    assert validate_partition(fam) <= 1e-12
    vals = evaluate_all(fam, GRID)
    assert vals[0, 0] >= vals[0].max() - 1e-6
    slack = 1e-9 if fam.name == "sigmoid" else 0.0
    assert np.all(np.diff(vals[0]) <= slack)
    assert np.all(np.diff(vals[-1]) >= -slack)


@pytest.mark.parametrize("alpha", [0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 0.95])
def test_sweep_alphas_valid(alpha):
    assert validate_partition(entropy(alpha)) <= 1e-10


def test_entropy_bump_peak_location():
    g1sq = evaluate(entropy(0.6), 1, GRID) ** 2
    assert abs(GRID[np.argmax(g1sq)] - PI / 2) <= GRID[1]
    assert g1sq.max() == pytest.approx(0.6, abs=1e-12)


@given(st.floats(0.0, PI), st.floats(0.01, 200.0))
def test_sigmoid_identity_pointwise(xi, alpha):
    fam = sigmoid(alpha)
    assert evaluate(fam, 0, xi) ** 2 + evaluate(fam, 1, xi) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_errors():
    with pytest.raises(InputError):
        evaluate(sigmoid(), 2, 0.1)
    with pytest.raises(InputError):
        evaluate(entropy(), 0, PI + 1e-6)
    with pytest.raises(ConfigError):
        entropy(1.5)
    with pytest.raises(ConfigError):
        entropy(0.0)
    with pytest.raises(ConfigError):
        sigmoid(-1)
    with pytest.raises(ConfigError):
        make_family("haar")


def test_tiny_overshoot_is_clamped():
    assert evaluate(entropy(), 1, PI + 1e-13) == 0.0


def test_make_family_defaults():
    assert make_family("sigmoid").alpha == 20.0
    assert make_family("Entropy").alpha == 0.75
    assert make_family("entropy", 0.3).K == 2


def test_custom_family():
    fam = custom_family("cos", [lambda x: np.cos(x / 2), lambda x: np.sin(x / 2)])
    assert fam.K == 1
    with pytest.raises(ConfigError):
        custom_family("bad", [lambda x: np.ones_like(x), lambda x: np.ones_like(x)])
