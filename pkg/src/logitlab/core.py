"""Logistic primitives, the structured whitening matrix, and Gaussian
Fisher-information components.

Everything downstream (solver, theory, audit, harness) builds on this module.
All functions are pure; arrays are never mutated in place.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_hermite

__all__ = [
    "Dataset",
    "ModelParams",
    "StructuredSpectralMatrix",
    "sigmoid",
    "sigmoid_prime",
    "logistic_loss",
    "empirical_risk",
    "empirical_gradient",
    "empirical_hessian",
    "h_power_apply",
    "h_norms",
    "h_matrix",
    "gaussian_fisher_components",
    "signal_strength",
]

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)


def _as_theta(theta):
    """Accept a ModelParams or a bare array-like; return a 1-d float array."""
    if isinstance(theta, ModelParams):
        return theta.theta
    t = np.asarray(theta, dtype=float)
    if t.ndim != 1:
        raise ValueError(f"parameter vector must be 1-d, got shape {t.shape}")
    return t


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix with +-1 labels.

    x : (n, d) float array of covariates
    y : (n,) array with entries exactly -1 or +1
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"design matrix must be (n>=1, d>=1), got {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise ValueError("label count does not match row count")
        if not np.isfinite(x).all():
            raise ValueError("design matrix has non-finite entries")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be exactly -1 or +1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        x.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def margins(self, theta):
        """Vector of y_i <theta, x_i>."""
        return self.y * (self.x @ _as_theta(theta))


@dataclass(frozen=True)
class ModelParams:
    """A parameter vector, with norm/direction helpers."""

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float).ravel()
        if not np.isfinite(t).all():
            raise ValueError("parameter vector has non-finite entries")
        object.__setattr__(self, "theta", t)
        t.setflags(write=False)

    @property
    def norm(self):
        return float(np.linalg.norm(self.theta))

    @property
    def direction(self):
        nrm = self.norm
        if nrm == 0.0:
            raise ValueError("direction undefined at theta = 0")
        return self.theta / nrm


def signal_strength(theta_star):
    """B = max{e, ||theta*||}, the signal-strength convention used throughout."""
    return max(math.e, float(np.linalg.norm(_as_theta(theta_star))))


@dataclass(frozen=True)
class StructuredSpectralMatrix:
    """The rank-one-plus-isotropic matrix B^-3 u u^T + B^-1 (I - u u^T).

    Stored as (u_star, b); powers are applied analytically via the spectral
    decomposition, eigenvalues {B^-3 on u_star, B^-1 on its complement}.
    """

    u_star: np.ndarray
    b: float = field(default=math.e)

    def __post_init__(self):
        u = np.asarray(self.u_star, dtype=float).ravel()
        nrm = np.linalg.norm(u)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"u_star must be unit norm (got ||u|| = {nrm!r})")
        if not self.b >= math.e:
            raise ValueError(f"signal strength must be >= e, got {self.b}")
        object.__setattr__(self, "u_star", u)
        object.__setattr__(self, "b", float(self.b))
        u.setflags(write=False)

    @property
    def d(self):
        return self.u_star.shape[0]


def h_power_apply(h, p, v):
    """Apply H^p to a vector (or to the columns of a matrix) analytically.

    H^p v = B^(-3p) <u, v> u + B^(-p) (v - <u, v> u). Exact spectral calculus,
    no dense factorization; p may be any real (1, -1, 1/2, -1/2 in practice).
    """
    v = np.asarray(v, dtype=float)
    u = h.u_star
    if v.ndim == 1:
        cu = u @ v
        return h.b ** (-3.0 * p) * cu * u + h.b ** (-p) * (v - cu * u)
    cu = u @ v  # columns
    return h.b ** (-3.0 * p) * np.outer(u, cu) + h.b ** (-p) * (v - np.outer(u, cu))


def h_matrix(h, p=1.0):
    """Dense d x d realization of H^p (d is small everywhere we need this)."""
    u = h.u_star
    uu = np.outer(u, u)
    return h.b ** (-3.0 * p) * uu + h.b ** (-p) * (np.eye(h.d) - uu)


def h_norms(h, v):
    """Return (||v||_H, ||v||_{H^-1}) with ||v||_A^2 = <Av, v>."""
    v = np.asarray(v, dtype=float)
    cu = h.u_star @ v
    perp_sq = float(v @ v - cu * cu)
    perp_sq = max(perp_sq, 0.0)
    n_h = math.sqrt(h.b ** -3 * cu * cu + h.b ** -1 * perp_sq)
    n_hinv = math.sqrt(h.b ** 3 * cu * cu + h.b * perp_sq)
    return n_h, n_hinv


def sigmoid(s):
    """Numerically stable logistic function e^s / (1 + e^s).

    Branches on the sign of s so no exponential ever overflows; accurate for
    |s| well past 1e3 (the solver visits huge margins on separated data).
    """
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    out = np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def sigmoid_prime(s):
    """Derivative of the logistic function, sigma(s) * sigma(-s)."""
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def _loss_from_margins(m):
    """log(1 + e^-m) evaluated stably: log1p(e^-|m|) + max(0, -m)."""
    m = np.asarray(m, dtype=float)
    return np.log1p(np.exp(-np.abs(m))) + np.maximum(-m, 0.0)


def logistic_loss(theta, x, y):
    """Negative log-likelihood of one observation, log(1 + e^{-y <theta, x>})."""
    m = float(y) * float(np.dot(_as_theta(theta), np.asarray(x, dtype=float)))
    return float(_loss_from_margins(m))


def empirical_risk(theta, data):
    """Mean logistic loss over the dataset rows."""
    return float(_loss_from_margins(data.margins(theta)).mean())


def empirical_gradient(theta, data):
    """Gradient of the empirical risk: -(1/n) sum_i y_i sigma(-m_i) x_i."""
    m = data.margins(theta)
    w = data.y * sigmoid(-m)
    return -(data.x.T @ w) / data.n


def empirical_hessian(theta, data):
    """Hessian of the empirical risk: (1/n) sum_i sigma'(<theta, x_i>) x_i x_i^T.

    Symmetric positive semi-definite for any theta (labels drop out).
    """
    s = data.x @ _as_theta(theta)
    w = sigmoid_prime(s)
    hess = (data.x * w[:, None]).T @ data.x / data.n
    return 0.5 * (hess + hess.T)


# --- Gaussian Fisher components -------------------------------------------
#
# c0(beta) = E[sigma'(beta G) G^2], c1(beta) = E[sigma'(beta G)], G ~ N(0,1).
# Gauss-Hermite works until beta ~ 8; past that the integrand concentrates on a
# 1/beta-scale spike at the origin that fixed nodes cannot resolve, so we fall
# back to adaptive quadrature on the half-line with breakpoints at k/beta.

_GH_CACHE = {}


def _gh_nodes(m):
    if m not in _GH_CACHE:
        x, w = roots_hermite(m)
        _GH_CACHE[m] = (x * _SQRT_2, w / _SQRT_PI)
    return _GH_CACHE[m]


def _fisher_gh(beta, m):
    g, w = _gh_nodes(m)
    sp = sigmoid_prime(beta * g)
    return float(w @ (sp * g * g)), float(w @ sp)


def _fisher_quad(beta):
    # even integrands: 2 * integral over [0, inf) of sigma'(beta g) g^k phi(g)
    phi = lambda g: math.exp(-0.5 * g * g) / math.sqrt(2 * math.pi)
    f0 = lambda g: sigmoid_prime(beta * g) * g * g * phi(g)
    f1 = lambda g: sigmoid_prime(beta * g) * phi(g)
    cut = 40.0 / beta
    pts = [1.0 / beta, 10.0 / beta]
    c0 = quad(f0, 0.0, cut, points=pts, limit=200)[0] + quad(f0, cut, np.inf, limit=200)[0]
    c1 = quad(f1, 0.0, cut, points=pts, limit=200)[0] + quad(f1, cut, np.inf, limit=200)[0]
    return 2.0 * c0, 2.0 * c1


def gaussian_fisher_components(beta):
    """Return (c0, c1) = (E[sigma'(beta G) G^2], E[sigma'(beta G)]) for G ~ N(0,1).

    Gauss-Hermite ladder starting at 96 nodes, doubled until two successive
    estimates agree to 1e-9 relative; adaptive quadrature fallback when the
    ladder stalls (large beta). Relative accuracy 1e-8 or better throughout.
    Both components are strictly positive and nonincreasing in beta.
    """
    beta = float(beta)
    if beta < 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    prev = _fisher_gh(beta, 96)
    m = 192
    while m <= 3072:
        cur = _fisher_gh(beta, m)
        if (abs(cur[0] - prev[0]) <= 1e-9 * max(1e-300, abs(cur[0]))
                and abs(cur[1] - prev[1]) <= 1e-9 * max(1e-300, abs(cur[1]))):
            return cur
        prev = cur
        m *= 2
    return _fisher_quad(beta)
