import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdisc.kernels import (
    LINEAR,
    NONLINEAR,
    QUADRATIC,
    KernelError,
    KernelSpec,
    ancestor_forms,
    base_kernel,
    class_sub_grams,
    feature_dimension,
    feature_map,
    feature_matrix,
    gram,
    sub_grams_by_ancestor,
)


def _data(n=30, d=4, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))


def _explicit_quadratic_features(x, b1, b2):
    """Independent construction: one monomial per unordered pair i <= j."""
    n, d = x.shape
    rows = [np.ones(n)]
    rows += [np.sqrt(b1) * x[:, i] for i in range(d)]
    rows += [np.sqrt(b2) * x[:, i] * x[:, j] for i, j in itertools.combinations_with_replacement(range(d), 2)]
    return np.array(rows)


def _pointwise_kernel(spec, a, b):
    """Direct evaluation of the additive kernel for one pair of samples."""
    b1, b2, b3 = spec.effective_betas
    act = spec.active
    val = 1.0 + b1 * sum(a[i] * b[i] for i in act)
    val += b2 * sum(a[i] * a[j] * b[i] * b[j] for i, j in itertools.combinations_with_replacement(act, 2))
    val += b3 * np.prod([1 + np.exp(-0.5 * (a[i] - b[i]) ** 2) for i in act])
    return val


def test_linear_hand_example():
    spec = KernelSpec(LINEAR, betas=(0.1, 0.1, 0.1), active=(0,))
    k = gram(spec, np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(k, [[1.1, 0.9], [0.9, 1.1]], atol=1e-15)


def test_nonlinear_diagonal_closed_form():
    x = _data(5, 3)
    spec = KernelSpec(NONLINEAR, betas=(0.1, 0.2, 0.3), active=(0, 1, 2))
    k = gram(spec, x)
    sq = x**2
    quad = np.array([sum(r[i] * r[j] * r[i] * r[j] for i, j in itertools.combinations_with_replacement(range(3), 2)) for r in x])
    expect = 1 + 0.1 * sq.sum(1) + 0.2 * quad + 0.3 * 2**3
    np.testing.assert_allclose(np.diag(k), expect, rtol=1e-13)


def test_nonlinear_matches_pointwise_evaluation():
    x = _data(8, 3, seed=5)
    spec = KernelSpec(NONLINEAR, active=(0, 2))
    k = gram(spec, x)
    direct = np.array([[_pointwise_kernel(spec, a, b) for b in x] for a in x])
    np.testing.assert_allclose(k, direct, rtol=1e-13)


def test_quadratic_gram_is_feature_inner_product():
    x = _data(40, 3)
    spec = KernelSpec(QUADRATIC, betas=(0.3, 0.7, 0.1), active=(0, 1, 2))
    psi = _explicit_quadratic_features(x, 0.3, 0.7)
    np.testing.assert_allclose(gram(spec, x), psi.T @ psi, atol=1e-12)
    phi = feature_matrix(spec, x)
    assert phi.shape == (10, 40)
    np.testing.assert_allclose(gram(spec, x) - phi.T @ phi, 0, atol=1e-12)


def test_feature_map_small_cases():
    x = np.array([[2.0], [-3.0]])
    phi, owners = feature_map(KernelSpec(LINEAR, betas=(1, 0, 0), active=(0,)), x)
    np.testing.assert_array_equal(phi, [[1, 1], [2, -3]])
    assert owners == [frozenset(), frozenset({0})]
    assert feature_matrix(KernelSpec(QUADRATIC, active=(0, 1)), _data(5, 2)).shape[0] == 6
    assert feature_dimension(QUADRATIC, 2) == 6
    assert feature_dimension(LINEAR, 4) == 5
    with pytest.raises(KernelError):
        feature_map(KernelSpec(NONLINEAR, active=(0,)), x)


def test_spec_validation():
    with pytest.raises(KernelError):
        KernelSpec("cubic")
    with pytest.raises(KernelError):
        KernelSpec(active=(0, 1), target=1)
    with pytest.raises(KernelError):
        KernelSpec(betas=(0.1, -1, 0.1))
    with pytest.raises(KernelError, match="empty"):
        gram(KernelSpec(LINEAR), _data())
    assert KernelSpec(LINEAR, betas=(0.2, 0.3, 0.4)).effective_betas == (0.2, 0.0, 0.0)
    assert KernelSpec(QUADRATIC, betas=(0.2, 0.3, 0.4)).effective_betas == (0.2, 0.3, 0.0)


def test_linear_ancestor_split_is_rank_one():
    x = _data(20, 2)
    spec = KernelSpec(LINEAR, betas=(0.1, 0.1, 0.1), active=(0, 1))
    bundle = sub_grams_by_ancestor(spec, x)
    np.testing.assert_allclose(bundle.sub_grams[0], 0.1 * np.outer(x[:, 0], x[:, 0]), atol=1e-14)
    np.testing.assert_allclose(bundle.sub_grams[1], 0.1 * np.outer(x[:, 1], x[:, 1]), atol=1e-14)


@pytest.mark.parametrize("kind", [LINEAR, QUADRATIC, NONLINEAR])
def test_minus_kernel_is_kernel_on_remaining_columns(kind):
    x = _data(25, 4, seed=2)
    spec = KernelSpec(kind, active=(0, 1, 3))
    bundle = sub_grams_by_ancestor(spec, x)
    for t in spec.active:
        rest = spec.with_active([c for c in spec.active if c != t])
        np.testing.assert_allclose(bundle.minus[t], gram(rest, x), rtol=1e-12, atol=1e-12)
        err = np.abs(bundle.minus[t] + bundle.sub_grams[t] - bundle.full)
        assert np.all(err <= 4 * np.finfo(float).eps * np.abs(bundle.full))


def test_nonlinear_sub_grams_overlap():
    x = _data(15, 3)
    bundle = sub_grams_by_ancestor(KernelSpec(NONLINEAR, active=(0, 1, 2)), x)
    total = sum(bundle.sub_grams.values())
    assert np.max(np.abs(total - bundle.full)) > 1e-3


def test_cluster_removed_as_a_whole():
    x = _data(20, 4, seed=3)
    spec = KernelSpec(QUADRATIC, active=(0, 1, 2, 3), clusters=((0, 1),))
    assert spec.units() == [(0, 1), (2,), (3,)]
    bundle = sub_grams_by_ancestor(spec, x)
    assert set(bundle.minus) == {(0, 1), (2,), (3,)}
    np.testing.assert_allclose(bundle.minus[(0, 1)], gram(spec.with_active((2, 3)), x), rtol=1e-12, atol=1e-12)


def test_class_parts_sum_to_full():
    x = _data(20, 3)
    spec = KernelSpec(NONLINEAR, active=(0, 1, 2))
    b = class_sub_grams(spec, x)
    assert set(b.sub_grams) == {LINEAR, QUADRATIC, NONLINEAR}
    np.testing.assert_allclose(sum(b.sub_grams.values()), gram(spec, x), rtol=1e-14)


@pytest.mark.parametrize("kind", [LINEAR, QUADRATIC, NONLINEAR])
@pytest.mark.parametrize("clusters", [None, ((1, 2),)])
def test_ancestor_forms_match_explicit_matrices(kind, clusters):
    x = _data(30, 4, seed=7)
    rho = np.random.default_rng(8).standard_normal(30)
    spec = KernelSpec(kind, active=(0, 1, 2, 3), clusters=clusters)
    bundle = sub_grams_by_ancestor(spec, x)
    total, forms = ancestor_forms(spec, x, rho)
    assert total == pytest.approx(rho @ bundle.full @ rho, rel=1e-12)
    assert set(forms) == set(bundle.minus)
    for t, m in bundle.minus.items():
        assert forms[t] == pytest.approx(rho @ m @ rho, rel=1e-11)


def test_matern_base_kernel():
    u = np.array([0.0, 1.0])
    k = base_kernel(u, u, "matern52")
    s = np.sqrt(5.0)
    assert k[0, 0] == 1.0
    assert k[0, 1] == pytest.approx((1 + s + 5 / 3) * np.exp(-s))


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from([LINEAR, QUADRATIC, NONLINEAR]),
    st.sampled_from(["gaussian", "matern52"]),
    st.integers(0, 10_000),
)
def test_gram_symmetric_psd_and_permutation_equivariant(kind, base, seed):
    x = _data(20, 3, seed=seed)
    spec = KernelSpec(kind, base=base, active=(0, 1, 2))
    k = gram(spec, x)
    assert np.max(np.abs(k - k.T)) <= 1e-12
    assert np.linalg.eigvalsh(k).min() >= -1e-8 * np.mean(np.diag(k))
    perm = np.random.default_rng(seed).permutation(20)
    np.testing.assert_allclose(gram(spec, x[perm]), k[np.ix_(perm, perm)], rtol=1e-13)
