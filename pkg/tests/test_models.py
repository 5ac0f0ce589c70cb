import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairscope.models import (MODEL_IDS, ModelSpec, SyntheticDataset, Table1D, class_laws, default_params, generate,
                              lipschitz_bound_check, model_for, score)


@pytest.mark.parametrize("mid", MODEL_IDS)
def test_generate_is_deterministic_and_balanced(mid):
    a, _ = generate(mid, N=501, seed=7)
    b, _ = generate(mid, N=501, seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.protected, b.protected)
    assert abs(int((a.protected == 1).sum()) - 250) <= 1
    c, _ = generate(mid, N=501, seed=8)
    assert not np.array_equal(a.features, c.features)


@pytest.mark.parametrize("mid", MODEL_IDS)
def test_feature_moments_follow_class_laws(mid):
    data, _ = generate(mid, N=40_000, seed=3)
    for i, (means, stds) in enumerate(class_laws(mid)):
        for k in (0, 1):
            col = data.features[data.protected == k, i]
            assert col.mean() == pytest.approx(means[k], abs=5 * stds[k] / np.sqrt(col.size))
            assert col.std() == pytest.approx(stds[k], rel=0.03)


def test_m1_score_and_sign():
    m = model_for("M1")
    assert m.favorable_sign == -1
    assert score(m, [5.0]) == pytest.approx(0.5)


def test_unknown_parameter_and_model():
    with pytest.raises(ValueError):
        default_params("M9")
    with pytest.raises(ValueError):
        generate("M1", {"nu": 1.0})
    with pytest.raises(ValueError):
        generate("EPS_TAU", {"tau": 0.0})
    with pytest.raises(ValueError):
        generate("M1", N=0)


def test_predict_validates_input():
    m = ModelSpec("linear", (1.0, 2.0))
    with pytest.raises(ValueError):
        m.predict(np.ones((3, 3)))
    with pytest.raises(ValueError):
        m.predict(np.array([[1.0, np.inf]]))
    ext = ModelSpec("external_scores", n_features=2)
    with pytest.raises(TypeError):
        ext.predict(np.ones((1, 2)))


def test_additive_tabular_and_roundtrip():
    m = ModelSpec("additive_tabular", tables=(Table1D([0, 1], [0, 2]), Table1D([0, 2], [1, 1])), intercept=0.5)
    np.testing.assert_allclose(m.predict([[0.5, 7.0]]), [0.5 + 1.0 + 1.0])
    assert ModelSpec.from_dict(m.to_dict()) == m
    assert m.is_additive
    assert not ModelSpec("logistic_linear", (1.0, 1.0)).is_additive


def product_sample(cols):
    grid = np.meshgrid(*cols, indexing="ij")
    return np.column_stack([a.ravel() for a in grid])


coords = st.lists(st.floats(-10, 10), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=3),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_lipschitz_bound_holds_for_product_samples(pairs, c):
    # within-class independence makes the coordinatewise sum a true upper bound
    X0 = product_sample([np.array(a) for a, _ in pairs])
    X1 = product_sample([np.array(b) for _, b in pairs])
    data = SyntheticDataset(np.vstack([X0, X1]), np.r_[np.zeros(len(X0), int), np.ones(len(X1), int)])
    lhs, rhs = lipschitz_bound_check(ModelSpec("linear", tuple(c[:len(pairs)])), data)
    assert lhs <= rhs + 1e-9


@pytest.mark.parametrize("eps,tau", [(0.1, 1.0), (1.0, 0.5), (2.0, 5.0)])
def test_lipschitz_bound_on_large_draws(eps, tau):
    data, m = generate("EPS_TAU", {"eps": eps, "tau": tau}, N=100_000, seed=2)
    lhs, rhs = lipschitz_bound_check(m, data)
    assert lhs <= rhs + 0.02


def test_lipschitz_check_rejects_nonlinear():
    data, m = generate("M1", N=50)
    with pytest.raises(ValueError):
        lipschitz_bound_check(m, data)


def test_documented_examples():
    assert score(ModelSpec("linear", (1.0, 1.0)), [2.0, 3.0]) == 5.0
    assert score(ModelSpec("logistic_linear", (-1.0,)), [50.0]) == pytest.approx(0.0, abs=1e-9)
    data, _ = generate("M3", N=200_000, seed=7)
    assert data.features[data.protected == 1, 0].mean() == pytest.approx(6.0, abs=0.02)
    data, _ = generate("ZERO_BIAS", {"tau": 1.0}, N=200_000, seed=7)
    x1 = data.features[:, 0]
    assert x1[data.protected == 1].mean() - x1[data.protected == 0].mean() == pytest.approx(1.0, abs=0.02)
    lhs, rhs = lipschitz_bound_check(*reversed(generate("ZERO_BIAS", N=100_000, seed=1)))
    assert lhs < 0.02 and rhs == pytest.approx(2.0, abs=0.03)
    data, m = generate("EPS_TAU", N=100_000, seed=1)
    lhs, rhs = lipschitz_bound_check(m, data)
    assert lhs == pytest.approx(0.1, abs=0.01) and rhs >= lhs


def test_lipschitz_identical_subpopulations():
    X = np.tile(np.array([[0.0, 1.0], [2.0, 3.0]]), (2, 1))
    data = SyntheticDataset(X, np.array([0, 0, 1, 1]))
    assert lipschitz_bound_check(ModelSpec("linear", (1.0, -1.0)), data) == (0.0, 0.0)
