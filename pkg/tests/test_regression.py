import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdisc.kernels import LINEAR, NONLINEAR, QUADRATIC, KernelSpec, class_sub_grams, feature_matrix, gram, sub_grams_by_ancestor
from hyperdisc.regression import (
    RegressionError,
    activations,
    activations_from_spectrum,
    fit,
    gamma_from_features,
    gamma_from_spectrum,
    noise_to_signal,
    select_gamma,
    signal_coefficients,
)
from hyperdisc.spectral import kpca_reduce, reduce_features


def _instance(seed, n=40, d=3, kind=NONLINEAR):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    y = np.sin(x[:, 0]) + 0.3 * rng.standard_normal(n)
    return x, y, gram(KernelSpec(kind, active=tuple(range(d))), x)


def test_zero_kernel_is_pure_noise():
    r = fit(np.zeros((4, 4)), np.array([1.0, -1, 2, 0]), 0.5)
    assert r.v_signal == 0 and r.n2s == 1


def test_scaled_identity_kernel():
    y = np.random.default_rng(0).standard_normal(10)
    for lam, gamma in [(1.0, 1.0), (3.0, 0.5), (0.01, 2.0)]:
        r = fit(lam * np.eye(10), y, gamma)
        assert r.n2s == pytest.approx(gamma / (gamma + lam), rel=1e-12)
        assert noise_to_signal(lam * np.eye(10), y, gamma) == pytest.approx(gamma / (gamma + lam), rel=1e-12)


def test_fit_errors():
    with pytest.raises(RegressionError):
        fit(np.eye(2), np.zeros(2), 1.0)
    with pytest.raises(RegressionError):
        fit(np.eye(2), np.ones(2), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e2))
def test_representer_identities(seed, gamma):
    x, y, k = _instance(seed)
    r = fit(k, y, gamma)
    a = k + gamma * np.eye(len(y))
    ainv_y = np.linalg.solve(a, y)
    assert r.v_signal >= 0 and r.v_noise >= 0 and 0 <= r.n2s <= 1
    assert r.v_signal + r.v_noise == pytest.approx(y @ ainv_y, rel=1e-10)
    assert r.v_noise == pytest.approx(gamma * ainv_y @ ainv_y, rel=1e-10)
    np.testing.assert_allclose(k @ r.rho - y, -gamma * r.rho, atol=1e-9 * np.abs(y).max())
    assert noise_to_signal(k, y, gamma) == pytest.approx(r.n2s, rel=1e-10)


def test_feature_space_variational_problem():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 2))
    y = x[:, 0] * x[:, 1] + 0.2 * rng.standard_normal(50)
    spec = KernelSpec(QUADRATIC, active=(0, 1))
    psi = feature_matrix(spec, x)
    gamma = 0.3
    # minimize |v|^2 + |v^T psi - y|^2 / gamma directly
    v = np.linalg.solve(psi @ psi.T + gamma * np.eye(psi.shape[0]), psi @ y)
    r = fit(gram(spec, x), y, gamma)
    assert r.v_signal == pytest.approx(v @ v, rel=1e-8)
    assert r.v_noise == pytest.approx(np.sum((v @ psi - y) ** 2) / gamma, rel=1e-8)


def test_spectrum_activations_match_fit():
    x, y, k = _instance(2)
    red = kpca_reduce(k, y, 0.0)
    r = fit(k, y, 0.7)
    v_s, v_n = activations_from_spectrum(red, 0.7)
    assert v_s == pytest.approx(r.v_signal, rel=1e-9)
    assert v_n == pytest.approx(r.v_noise, rel=1e-9)
    rho_s = signal_coefficients(red, 0.7)
    assert rho_s @ k @ rho_s == pytest.approx(r.v_signal, rel=1e-9)


def test_limits_in_gamma():
    x, y, k = _instance(3, n=30, d=2)
    lam = np.linalg.eigvalsh(k)
    assert lam[0] > 0
    assert noise_to_signal(k, y, 1e-8 * lam[0]) < 1e-6
    assert noise_to_signal(k, y, 1e8 * lam[-1]) > 1 - 1e-6


def test_single_eigenpair_monotone():
    vals = []
    for lam in (0.1, 1.0, 10.0):
        red = kpca_reduce(np.array([[lam]]), np.array([2.0]), 0.0)
        vals.append(noise_to_signal(red, None, 1.0))
        assert vals[-1] == pytest.approx(1 / (1 + lam))
    assert vals[0] > vals[1] > vals[2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_omegas_in_unit_interval(seed):
    x, y, k = _instance(seed, n=25)
    red = kpca_reduce(k, y, 0.0)
    w = red.omegas(0.05)
    assert len(w) == 25 and np.all(w >= 0) and np.all(w <= 1)


def test_activation_concentrates_on_true_ancestor():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1000, 2))
    y = 2 * x[:, 0]
    spec = KernelSpec(LINEAR, active=(0, 1))
    k = gram(spec, x)
    g = gamma_from_features(feature_matrix(spec, x), y).value
    p = activations(fit(k, y, g), sub_grams_by_ancestor(spec, x))
    assert p[0] > 0.95 and p[1] < 0.05


def test_symmetric_target_has_balanced_activations():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1000, 2))
    y = x[:, 0] + x[:, 1] + 0.1 * rng.standard_normal(1000)
    spec = KernelSpec(LINEAR, active=(0, 1))
    p = activations(fit(gram(spec, x), y, 1.0), sub_grams_by_ancestor(spec, x))
    assert abs(p[0] - p[1]) < 0.05


def test_class_activations_sum_to_one():
    x, y, _ = _instance(4)
    spec = KernelSpec(NONLINEAR, active=(0, 1, 2))
    bundle = class_sub_grams(spec, x)
    p = activations(fit(bundle.full, y, 0.1), bundle)
    assert sum(p.values()) == pytest.approx(1.0, abs=1e-10)


def test_activations_need_signal():
    r = fit(np.zeros((3, 3)), np.ones(3), 1.0)
    bundle = class_sub_grams(KernelSpec(LINEAR, betas=(0, 0, 0), active=(0,)), np.zeros((3, 1)))
    bundle.full = np.zeros((3, 3))
    with pytest.raises(RegressionError):
        activations(r, bundle)


def test_noiseless_representable_target_floors_gamma():
    x = np.random.default_rng(5).standard_normal((100, 2))
    spec = KernelSpec(QUADRATIC, active=(0, 1))
    phi = feature_matrix(spec, x)
    y = x[:, 0] ** 2 - x[:, 1]
    choice = select_gamma(QUADRATIC, y, features=phi)
    assert choice.value == pytest.approx(1e-10 * 100)
    assert choice.diagnostics["floored"]
    assert noise_to_signal(reduce_features(phi, y, 0.0), None, choice.value) < 1e-6


def test_residual_gamma_estimates_noise_variance():
    rng = np.random.default_rng(6)
    n, sigma = 2000, 0.3
    x = rng.standard_normal((n, 1))
    y = 1.5 * x[:, 0] + sigma * rng.standard_normal(n)
    g = gamma_from_features(feature_matrix(KernelSpec(LINEAR, active=(0,)), x), y)
    assert g.method == "ols_residual"
    assert g.value / n == pytest.approx(sigma**2, rel=0.15)


def _omega_variance_bruteforce(gamma, lam):
    w = gamma / (gamma + lam)
    return np.var(w)


def test_spectrum_gamma_spreads_omegas():
    lam = np.array([1e4, 1e2, 1.0])
    g = gamma_from_spectrum(lam)
    assert g.method == "spectrum_variance"
    # independent oracle: dense grid search of the same objective
    grid = np.exp(np.linspace(np.log(0.1), np.log(1e5), 20001))
    best = max(_omega_variance_bruteforce(t, lam) for t in grid)
    # this spectrum has two mirror-image maxima in log gamma; compare the objective
    assert _omega_variance_bruteforce(g.value, lam) == pytest.approx(best, rel=1e-6)
    assert 1e-1 * 100 < g.value < 10 * 100
    w = g.value / (g.value + lam)
    assert not np.all(np.minimum(w, 1 - w) < 0.05)
    assert lam.min() * 1e-3 <= g.value <= lam.max() * 1e3


def test_spectrum_gamma_degenerate_and_errors():
    g = gamma_from_spectrum(np.array([2.0, 2.0, 2.0]))
    assert g.method == "spectrum_median" and g.value == 2.0
    with pytest.raises(RegressionError):
        gamma_from_spectrum(np.zeros(3))
    with pytest.raises(RegressionError):
        select_gamma(LINEAR, np.ones(3))


def test_zero_eigenvalues_count_as_unit_omegas():
    lam = np.array([10.0, 1.0])
    a = gamma_from_spectrum(lam, n_zero=0).value
    b = gamma_from_spectrum(lam, n_zero=5).value
    assert a != b
    grid = np.exp(np.linspace(np.log(0.1), np.log(100), 20001))
    full = np.concatenate([lam, np.zeros(5)])
    best = max(_omega_variance_bruteforce(t, full) for t in grid)
    assert _omega_variance_bruteforce(b, full) == pytest.approx(best, rel=1e-6)


def test_n2s_monotone_in_amplitude_and_noise():
    rng = np.random.default_rng(7)
    n = 2000
    x = rng.standard_normal((n, 1))
    z = rng.standard_normal(n)
    phi = feature_matrix(KernelSpec(LINEAR, active=(0,)), x)

    def ratio(a, sigma):
        y = a * x[:, 0] + sigma * z
        g = gamma_from_features(phi, y).value
        return noise_to_signal(reduce_features(phi, y, 0.0), None, g)

    amp = [ratio(a, 1.0) for a in (0.5, 1.0, 2.0)]
    noise = [ratio(1.0, s) for s in (0.5, 1.0, 2.0)]
    assert amp[0] > amp[1] > amp[2]
    assert noise[0] < noise[1] < noise[2]
