import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logitlab.core import (
    Dataset,
    ModelParams,
    StructuredSpectralMatrix,
    empirical_gradient,
    empirical_hessian,
    empirical_risk,
    gaussian_fisher_components,
    h_matrix,
    h_norms,
    h_power_apply,
    logistic_loss,
    sigmoid,
    sigmoid_prime,
    signal_strength,
)

import oracles


# --- primitives -------------------------------------------------------------

def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert abs(sigmoid(math.log(3)) - 0.75) < 1e-15
    # extreme tail: sigma(40) = 1 - e^-40 to within 1e-17 relative
    assert abs(sigmoid(40.0) - (1.0 - math.exp(-40.0))) <= 1e-17 * sigmoid(40.0)
    # no overflow far out
    assert sigmoid(-1e3) == pytest.approx(0.0, abs=1e-300)
    assert sigmoid(1e3) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-700, 700))
def test_sigmoid_identities(s):
    assert abs(sigmoid(s) + sigmoid(-s) - 1.0) <= 1e-14
    assert abs(sigmoid_prime(s) - sigmoid(s) * sigmoid(-s)) <= 1e-14


def test_logistic_loss_values():
    x = np.array([2.0, -1.0])
    assert logistic_loss(np.zeros(2), x, +1) == pytest.approx(math.log(2), rel=1e-15)
    # margin exactly 1
    assert logistic_loss(np.array([1.0, 1.0]), x, +1) == pytest.approx(
        0.3132616875182228, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100))
def test_loss_label_sum_identity(m):
    # loss at +1 plus loss at -1 equals log(2 + e^m + e^-m)
    theta = np.array([m])
    x = np.array([1.0])
    lhs = logistic_loss(theta, x, +1) + logistic_loss(theta, x, -1)
    rhs = abs(m) + 2 * math.log1p(math.exp(-abs(m)))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, rhs)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.array([1.0]))
    ds = Dataset(np.eye(3), np.array([1, -1, 1]))
    assert ds.n == 3 and ds.d == 3


def test_model_params():
    p = ModelParams(np.array([3.0, 4.0]))
    assert p.norm == 5.0
    assert np.allclose(p.direction, [0.6, 0.8])
    with pytest.raises(ValueError):
        ModelParams(np.zeros(2)).direction


def test_signal_strength_convention():
    assert signal_strength(np.zeros(3)) == math.e
    assert signal_strength(np.array([0.0, 7.0])) == 7.0


# --- empirical risk and derivatives ----------------------------------------

def test_empirical_risk_values():
    ds = Dataset(np.array([[1.0], [2.0]]), np.array([1.0, -1.0]))
    assert empirical_risk(np.zeros(1), ds) == pytest.approx(math.log(2), rel=1e-15)
    expected = (math.log(1 + math.exp(-0.1)) + math.log(1 + math.exp(0.2))) / 2
    assert empirical_risk(np.array([0.1]), ds) == pytest.approx(expected, rel=1e-13)


def test_zero_theta_closed_forms():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 3))
    y = rng.choice([-1.0, 1.0], size=40)
    ds = Dataset(x, y)
    g = empirical_gradient(np.zeros(3), ds)
    assert np.allclose(g, -(y[:, None] * x).sum(axis=0) / (2 * 40), atol=1e-14)
    h = empirical_hessian(np.zeros(3), ds)
    assert np.allclose(h, x.T @ x / (4 * 40), atol=1e-13)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, d = 30, 4
        ds = Dataset(rng.standard_normal((n, d)), rng.choice([-1.0, 1.0], n))
        theta = rng.standard_normal(d)
        g = empirical_gradient(theta, ds)
        g_fd = oracles.fd_gradient(lambda t: empirical_risk(t, ds), theta)
        assert np.linalg.norm(g - g_fd) <= 1e-6 * max(1.0, np.linalg.norm(g_fd))


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(13)
    for _ in range(3):
        n, d = 25, 3
        ds = Dataset(rng.standard_normal((n, d)), rng.choice([-1.0, 1.0], n))
        theta = 0.5 * rng.standard_normal(d)
        h = empirical_hessian(theta, ds)
        h_fd = oracles.fd_jacobian(lambda t: empirical_gradient(t, ds), theta)
        assert np.abs(h - h_fd).max() <= 1e-5


def test_risk_convex_along_segments():
    rng = np.random.default_rng(17)
    ds = Dataset(rng.standard_normal((30, 4)), rng.choice([-1.0, 1.0], 30))
    for _ in range(20):
        t1, t2 = rng.standard_normal(4), rng.standard_normal(4)
        lam = rng.random()
        mix = empirical_risk(lam * t1 + (1 - lam) * t2, ds)
        bound = lam * empirical_risk(t1, ds) + (1 - lam) * empirical_risk(t2, ds)
        assert mix <= bound + 1e-12


def test_hessian_psd():
    rng = np.random.default_rng(19)
    for _ in range(10):
        ds = Dataset(rng.standard_normal((20, 5)), rng.choice([-1.0, 1.0], 20))
        h = empirical_hessian(rng.standard_normal(5), ds)
        assert np.linalg.eigvalsh(h).min() >= -1e-10


# --- structured spectral matrix ---------------------------------------------

def _unit(v):
    return v / np.linalg.norm(v)


def test_h_validation():
    with pytest.raises(ValueError):
        StructuredSpectralMatrix(np.array([1.0, 1.0]), b=3.0)
    with pytest.raises(ValueError):
        StructuredSpectralMatrix(np.array([1.0, 0.0]), b=1.0)  # below e


def test_h_power_on_u_star():
    u = _unit(np.array([1.0, 2.0, -2.0]))
    h = StructuredSpectralMatrix(u, b=4.0)
    out = h_power_apply(h, -0.5, u)
    assert np.allclose(out, 4.0 ** 1.5 * u, rtol=1e-13)


def test_h_diag_action():
    h = StructuredSpectralMatrix(np.array([1.0, 0.0]), b=math.e)
    m = h_matrix(h, 1.0)
    assert np.allclose(m, np.diag([math.e ** -3, math.e ** -1]), rtol=1e-14)


def test_h_half_composes():
    rng = np.random.default_rng(23)
    u = _unit(rng.standard_normal(6))
    h = StructuredSpectralMatrix(u, b=7.5)
    v = rng.standard_normal(6)
    once = h_power_apply(h, 1.0, v)
    twice = h_power_apply(h, 0.5, h_power_apply(h, 0.5, v))
    assert np.allclose(once, twice, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.floats(math.e, 50.0), st.integers(0, 2 ** 31 - 1))
def test_h_power_roundtrip(d, b, seed):
    rng = np.random.default_rng(seed)
    u = _unit(rng.standard_normal(d))
    h = StructuredSpectralMatrix(u, b=b)
    v = rng.standard_normal(d)
    for p in (1.0, 0.5, -0.5, -1.0):
        back = h_power_apply(h, -p, h_power_apply(h, p, v))
        assert np.allclose(back, v, rtol=1e-12, atol=1e-12)


def test_h_norms():
    u = np.array([0.0, 1.0, 0.0])
    h = StructuredSpectralMatrix(u, b=9.0)
    nh, nhinv = h_norms(h, u)
    assert nh == pytest.approx(9.0 ** -1.5, rel=1e-13)
    assert nhinv == pytest.approx(9.0 ** 1.5, rel=1e-13)
    v = np.array([2.0, 0.0, 0.0])  # orthogonal to u
    nh, _ = h_norms(h, v)
    assert nh == pytest.approx(2.0 * 9.0 ** -0.5, rel=1e-13)
    rng = np.random.default_rng(29)
    w = rng.standard_normal(3)
    nh, _ = h_norms(h, w)
    assert nh == pytest.approx(np.linalg.norm(h_power_apply(h, 0.5, w)), rel=1e-12)


# --- Gaussian Fisher components ---------------------------------------------

def test_fisher_components_at_zero():
    c0, c1 = gaussian_fisher_components(0.0)
    assert c0 == pytest.approx(0.25, rel=1e-12)
    assert c1 == pytest.approx(0.25, rel=1e-12)


def test_fisher_components_reference_values():
    # 40-digit mpmath quadrature references
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40

    def ref(beta):
        sp = lambda t: mp.exp(-abs(t)) / (1 + mp.exp(-abs(t))) ** 2
        phi = lambda g: mp.exp(-g * g / 2) / mp.sqrt(2 * mp.pi)
        c0 = 2 * mp.quad(lambda g: sp(beta * g) * g * g * phi(g), [0, 1, 10, mp.inf])
        c1 = 2 * mp.quad(lambda g: sp(beta * g) * phi(g), [0, 1, 10, mp.inf])
        return float(c0), float(c1)

    for beta in (1.0, math.e, 50.0):
        c0, c1 = gaussian_fisher_components(beta)
        r0, r1 = ref(beta)
        assert c0 == pytest.approx(r0, rel=1e-8)
        assert c1 == pytest.approx(r1, rel=1e-8)


def test_fisher_components_match_adaptive_quadrature():
    for beta in (0.3, 2.0, 8.0, 13.0, 30.0):
        c0, c1 = gaussian_fisher_components(beta)
        r0, r1 = oracles.fisher_components_quad(beta)
        assert c0 == pytest.approx(r0, rel=1e-8)
        assert c1 == pytest.approx(r1, rel=1e-8)


def test_fisher_moment_bounds():
    # explicit two-sided moment bounds for E[sigma'(beta G)|G|^k], k in {0, 2}
    pref = math.sqrt(2 / math.pi)
    for beta in (1.0, 5.0, 20.0):
        c0, c1 = gaussian_fisher_components(beta)
        for k, val in ((0, c1), (2, c0)):
            lo = pref * (2 ** (k + 1) / (k + 1)) * min(
                1 / (4 * math.e ** 4 * beta ** (k + 1)),
                sigmoid_prime(2 * beta) / math.e ** 2)
            hi = pref * min(math.gamma((k + 1) / 2.0),
                            math.factorial(k) / beta ** (k + 1))
            assert lo <= val <= hi, (beta, k, lo, val, hi)


def test_fisher_components_monotone_and_ordered():
    betas = np.linspace(0.0, 50.0, 26)
    vals = [gaussian_fisher_components(b) for b in betas]
    c0s = np.array([v[0] for v in vals])
    c1s = np.array([v[1] for v in vals])
    assert (np.diff(c0s) <= 1e-12).all()
    assert (np.diff(c1s) <= 1e-12).all()
    assert (c0s <= c1s + 1e-12).all()
    assert (c0s > 0).all() and (c1s > 0).all()


def test_fisher_components_scaled_sandwich():
    # c0(beta)(beta+1)^3 and c1(beta)(beta+1) stay in fixed positive intervals
    betas = np.linspace(0.0, 50.0, 51)
    s0 = []
    s1 = []
    for b in betas:
        c0, c1 = gaussian_fisher_components(b)
        s0.append(c0 * (b + 1) ** 3)
        s1.append(c1 * (b + 1) ** 1)
    s0, s1 = np.array(s0), np.array(s1)
    assert 0.2 <= s0.min() and s0.max() <= 2.0, (s0.min(), s0.max())
    assert 0.2 <= s1.min() and s1.max() <= 0.5, (s1.min(), s1.max())
