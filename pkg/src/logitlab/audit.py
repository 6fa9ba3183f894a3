"""Monte Carlo auditors for design regularity, plus deviation experiments for
the whitened empirical gradient and Hessian.

Regularity here means three empirically checkable properties of a design and
a direction u*: the one-dimensional margin puts little mass near zero
(small-ball), two-dimensional margins retain joint mass (the adversarial
cases being sparse contrast directions), and one-dimensional marginals have
subexponential tails. Verdicts are reported as ratios rather than booleans so
sampling noise cannot silently flip them.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .core import (Dataset, StructuredSpectralMatrix, empirical_gradient,
                   h_norms, h_power_apply)
from .designs import (DesignSpec, SeededRng, Wellspec, as_generator,
                      sample_design, sample_labels)

__all__ = [
    "RegularityReport",
    "DeviationSummary",
    "SmallBallCurve",
    "small_ball_estimate",
    "margin_probes",
    "two_dim_margin_estimate",
    "psi1_norm_estimate",
    "gradient_deviation_experiment",
    "hessian_lower_sweep",
    "audit_design",
]

_E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class RegularityReport:
    """Summary verdict for a (design, u*) pair at level (eta, c).

    c_small_ball is the smallest c that makes the near-zero mass bound hold
    on the probed t-grid at and above eta; margin2d_min_ratio is the worst
    probability ratio over the probe directions (the joint-margin property
    holds empirically iff it is >= 1); psi1_hat estimates the subexponential
    norm of the u* marginal.
    """

    u_star: np.ndarray
    eta: float
    c_small_ball: float
    margin2d_min_ratio: float
    psi1_hat: float

    def __post_init__(self):
        u = np.asarray(self.u_star, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u_star", u)
        if not 0.0 < self.eta <= _E_INV + 1e-12:
            raise ValueError(f"eta must lie in (0, 1/e]: {self.eta}")
        for name in ("c_small_ball", "margin2d_min_ratio", "psi1_hat"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class DeviationSummary:
    """Per-replicate deviation statistics against a fixed theoretical bound."""

    samples: np.ndarray
    bound: float
    coverage: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        expect = float(np.mean(s <= self.bound))
        if abs(self.coverage - expect) > 1e-12:
            raise ValueError("coverage does not match samples vs bound")


@dataclass(frozen=True)
class SmallBallCurve:
    """Estimated curve t -> P(|<u*, X>| <= t) with Wilson 95% bands."""

    t: np.ndarray
    p_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_mc: int

    def smallest_c(self, t_min=0.0):
        """Smallest c with p_hat(t) <= c * t for every grid t >= t_min."""
        mask = self.t >= t_min
        if not mask.any():
            raise ValueError("no grid points at or above t_min")
        return float((self.p_hat[mask] / self.t[mask]).max())


def _wilson(count, n, z=1.959963984540054):
    p = count / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return np.maximum(center - half, 0.0), np.minimum(center + half, 1.0)


def _margin_chunks(design, u, n_mc, gen, extra=None):
    """Yield (m_u, m_extra) margin chunks of total length n_mc, float32 path."""
    u32 = u.astype(np.float32)
    v32 = None if extra is None else extra.astype(np.float32)
    chunk = max(1024, min(n_mc, int(3.2e7 // max(design.d, 1))))
    pos = 0
    while pos < n_mc:
        k = min(chunk, n_mc - pos)
        x = sample_design(design, k, gen, dtype=np.float32)
        mu = (x @ u32).astype(float)
        mv = None if v32 is None else (x @ v32.T).astype(float)
        yield mu, mv
        pos += k


def small_ball_estimate(design, u_star, t_grid, n_mc, rng):
    """Estimate P(|<u*, X>| <= t) on a grid of thresholds t in (0, 1].

    Returns a SmallBallCurve; curve.smallest_c(eta) is the smallest constant
    making the linear bound hold on the grid at and above eta.
    """
    u = np.asarray(u_star, dtype=float)
    t = np.sort(np.asarray(t_grid, dtype=float))
    if t.size == 0 or t[0] <= 0.0 or t[-1] > 1.0:
        raise ValueError("t_grid must lie in (0, 1]")
    n_mc = int(n_mc)
    gen = as_generator(rng)
    counts = np.zeros(t.size)
    for mu, _ in _margin_chunks(design, u, n_mc, gen):
        np.abs(mu, out=mu)
        # |m| <= t_j counted for all j at once via a sorted pass
        counts += np.searchsorted(np.sort(mu), t, side="right")
    p_hat = counts / n_mc
    lo, hi = _wilson(counts, n_mc)
    return SmallBallCurve(t, p_hat, lo, hi, n_mc)


def margin_probes(u_star, rng, n_planes=2, n_sparse_pairs=8,
                  angles=(math.pi / 64, math.pi / 32, math.pi / 16,
                          math.pi / 8, math.pi / 4, math.pi / 2)):
    """Probe directions for the joint-margin auditor.

    Mixes u* itself, smooth rotations of u* at fixed angles inside random
    2-planes, and sparse two-coordinate contrasts (e_i - e_j)/sqrt(2) in both
    signs. The sparse contrasts are the adversarial family for product
    designs, which is why they are always included. All probes are unit
    vectors with a nonnegative inner product against u*.
    """
    u = np.asarray(u_star, dtype=float)
    d = u.size
    gen = as_generator(rng)
    probes = [u]
    for _ in range(n_planes):
        w = gen.standard_normal(d)
        w -= (w @ u) * u
        nrm = np.linalg.norm(w)
        if nrm < 1e-12:
            continue
        w /= nrm
        for a in angles:
            probes.append(math.cos(a) * u + math.sin(a) * w)
    if d >= 2:
        all_pairs = d * (d - 1) // 2
        if all_pairs <= n_sparse_pairs:
            pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        else:
            pairs = set()
            while len(pairs) < n_sparse_pairs:
                i, j = gen.integers(0, d, 2)
                if i != j:
                    pairs.add((min(i, j), max(i, j)))
            pairs = sorted(pairs)
        for i, j in pairs:
            for sign in (1.0, -1.0):
                v = np.zeros(d)
                v[i], v[j] = sign / math.sqrt(2.0), -sign / math.sqrt(2.0)
                if v @ u < 0:
                    v = -v
                probes.append(v)
    return np.array(probes)


def two_dim_margin_estimate(design, u_star, eta, c, v_probes, n_mc, rng):
    """Worst-case joint-margin ratio over the probe directions.

    For each probe v the Monte Carlo estimate of
        P(|<u*, X>| <= c*eta  and  |<v, X>| >= max(eta, ||u* - v||)/c)
    is turned into the ratio P_hat * c / eta; the minimum over probes is
    returned. The joint-margin property holds empirically iff the result
    is >= 1.
    """
    u = np.asarray(u_star, dtype=float)
    v = np.atleast_2d(np.asarray(v_probes, dtype=float))
    if v.shape[1] != u.size:
        raise ValueError("probe dimension mismatch")
    nrm = np.linalg.norm(v, axis=1)
    if np.abs(nrm - 1.0).max() > 1e-6:
        raise ValueError("probes must be unit vectors")
    if (v @ u < -1e-9).any():
        raise ValueError("probes must satisfy <u*, v> >= 0")
    if not (eta > 0 and c > 0):
        raise ValueError("eta and c must be positive")
    n_mc = int(n_mc)
    gen = as_generator(rng)
    thresh = np.maximum(eta, np.linalg.norm(u[None, :] - v, axis=1)) / c
    counts = np.zeros(v.shape[0])
    for mu, mv in _margin_chunks(design, u, n_mc, gen, extra=v):
        near = np.abs(mu) <= c * eta
        counts += (near[:, None] & (np.abs(mv) >= thresh[None, :])).sum(axis=0)
    ratios = (counts / n_mc) * c / eta
    return float(ratios.min())


def psi1_norm_estimate(design, v, p_grid, n_mc, rng):
    """Subexponential-norm estimate sup_p 2e ||<v, X>||_p / p over a p-grid.

    The p-th moments are empirical; the supremum over p >= 2 is approximated
    by the max over the grid (the analytic supremum sits at small p for all
    the built-in unit-variance families).
    """
    v = np.asarray(v, dtype=float)
    p = np.asarray(p_grid, dtype=float)
    if p.size == 0 or p.min() < 2.0 or p.max() > 20.0:
        raise ValueError("p_grid must lie in [2, 20]")
    n_mc = int(n_mc)
    gen = as_generator(rng)
    acc = np.zeros(p.size)
    for mu, _ in _margin_chunks(design, v, n_mc, gen):
        np.abs(mu, out=mu)
        for i, pi in enumerate(p):
            acc[i] += float((mu ** pi).sum())
    moments = acc / n_mc
    return float((2.0 * math.e * moments ** (1.0 / p) / p).max())


def gradient_deviation_experiment(d, B, n, t, replicates, rng, u_star=None,
                                  theta_norm=None):
    """Whitened-gradient deviation experiment for the Gaussian design.

    Each replicate draws a fresh well-specified sample of size n, evaluates
    the empirical gradient at the truth, and records its norm in the
    inverse-curvature geometry. Coverage is measured against the bound
    27 sqrt((d + t) / n), which holds with probability >= 1 - 2 exp(-t) once
    n >= 4 B (d log 5 + t).

    theta_norm defaults to B (so the signal strength is exactly B); passing 0
    with B = e exercises the no-signal edge, where the statistic reduces to
    the whitened norm of a fair-coin average.
    """
    if B < math.e - 1e-12:
        raise ValueError("B must be at least e")
    if theta_norm is None:
        theta_norm = B
    if abs(max(math.e, theta_norm) - B) > 1e-9:
        raise ValueError("need max(e, theta_norm) == B")
    n_min = 4.0 * B * (d * math.log(5.0) + t)
    if n < n_min:
        raise ValueError(f"n must be at least 4B(d log5 + t) = {n_min:.1f}")
    gen = as_generator(rng)
    u = np.zeros(d)
    if u_star is None:
        u[0] = 1.0
    else:
        u = np.asarray(u_star, dtype=float).copy()
        u /= np.linalg.norm(u)
    theta_star = theta_norm * u
    h = StructuredSpectralMatrix(u, B)
    spec = DesignSpec("gaussian", d)
    law = Wellspec(theta_star)
    samples = np.empty(replicates)
    for r in range(replicates):
        x = sample_design(spec, n, gen)
        y = sample_labels(x, law, gen)
        g = empirical_gradient(theta_star, Dataset(x, y))
        samples[r] = h_norms(h, g)[1]
    bound = 27.0 * math.sqrt((d + t) / n)
    coverage = float(np.mean(samples <= bound))
    return DeviationSummary(samples, bound, coverage)


def hessian_lower_sweep(data, theta_star, h, radius, n_dirs, rng):
    """Minimum whitened-curvature eigenvalue over a neighborhood sweep.

    Samples n_dirs points uniformly on the curvature-metric sphere of the
    given radius around theta_star (plus theta_star itself), evaluates the
    empirical Hessian of the logistic loss at each, whitens it on both sides
    by the inverse square root of the reference curvature, and returns the
    smallest eigenvalue seen.

    Single pass over the data in float32 chunks: margins for all sweep points
    ride one matrix product, and the d(d+1)/2 distinct Hessian entries for
    all sweep points ride another. Accumulation is float64.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    d = theta_star.size
    if radius < 0:
        raise ValueError("radius must be >= 0")
    gen = as_generator(rng)
    white = h_power_apply(h, -0.5, np.eye(d))

    w = gen.standard_normal((n_dirs, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    thetas = np.vstack([theta_star[None, :],
                        theta_star[None, :] + radius * (w @ white.T)])
    n_thetas = thetas.shape[0]

    iu, ju = np.triu_indices(d)
    n_pairs = iu.size
    thetas32 = thetas.astype(np.float32)
    acc = np.zeros((n_thetas, n_pairs))

    x = data.x
    n = x.shape[0]
    chunk = max(1024, min(n, int(4.0e7 // max(n_thetas + n_pairs, 1))))
    pos = 0
    while pos < n:
        xc = x[pos:pos + chunk].astype(np.float32)
        s = xc @ thetas32.T
        # sigma'(s) = exp(-|s|) / (1 + exp(-|s|))^2, built in place
        np.abs(s, out=s)
        np.negative(s, out=s)
        np.exp(s, out=s)
        tmp = s + 1.0
        np.multiply(tmp, tmp, out=tmp)
        np.divide(s, tmp, out=s)
        pairs = xc[:, iu] * xc[:, ju]
        acc += (s.T @ pairs).astype(np.float64)
        pos += chunk

    acc /= n
    min_eig = math.inf
    mat = np.empty((d, d))
    for k in range(n_thetas):
        mat[iu, ju] = acc[k]
        mat[ju, iu] = acc[k]
        white_mat = white @ mat @ white
        ev = eigh(white_mat, eigvals_only=True, subset_by_index=[0, 0])[0]
        min_eig = min(min_eig, float(ev))
    return min_eig


def audit_design(design, u_star, eta, c, n_mc, rng, t_grid=None,
                 p_grid=(2.0, 4.0, 8.0, 16.0)):
    """Assemble a RegularityReport for a (design, u*) pair.

    Runs the small-ball curve (smallest viable c read off at and above eta),
    the joint-margin probe sweep at level (eta, c), and the subexponential
    norm of the u* marginal, on independent substreams.
    """
    u = np.asarray(u_star, dtype=float)
    if isinstance(rng, SeededRng):
        streams = [rng.stream("audit", k) for k in range(4)]
    else:
        gen = as_generator(rng)
        streams = [gen] * 4
    if t_grid is None:
        t_grid = np.geomspace(max(eta, 1e-3), 1.0, 25)
    curve = small_ball_estimate(design, u, t_grid, n_mc, streams[0])
    probes = margin_probes(u, streams[1])
    ratio = two_dim_margin_estimate(design, u, eta, c, probes, n_mc,
                                    streams[2])
    psi1 = psi1_norm_estimate(design, u, p_grid, n_mc, streams[3])
    return RegularityReport(u, float(eta), curve.smallest_c(eta), ratio, psi1)
