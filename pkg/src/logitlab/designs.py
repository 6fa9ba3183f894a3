"""Covariate samplers, label mechanisms, and seeded RNG streams.

Every design family is centered and isotropic (E X = 0, E XX^T = I_d).
Label mechanisms: the well-specified logit law, and the worst-case
misspecified law that assigns Y = sign(<u*, X>) with an independent
probability-p sign flip.
"""

import csv
import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import Dataset, ModelParams, sigmoid

__all__ = [
    "SeededRng",
    "as_generator",
    "DesignSpec",
    "Wellspec",
    "WorstCase",
    "sample_design",
    "sample_labels",
    "sample_dataset",
    "worstcase_signal_of_p",
    "dataset_to_csv",
    "dataset_from_csv",
    "WORSTCASE_P_MAX",
]

WORSTCASE_P_MAX = math.exp(-2.0) / 2.0


@dataclass(frozen=True)
class SeededRng:
    """Counter-based RNG streams keyed by (master_seed, *path).

    The same (seed, path) pair reproduces byte-identical draws; distinct paths
    (e.g. distinct (cell, replicate) pairs) are statistically independent
    streams, so grid cells can run in any order or in parallel without
    changing any output.
    """

    master_seed: int

    def stream(self, *path):
        key = []
        for p in path:
            if isinstance(p, str):
                # stable across processes, unlike builtin hash()
                digest = hashlib.sha256(p.encode("utf-8")).digest()
                key.append(int.from_bytes(digest[:8], "little"))
            else:
                key.append(int(p))
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(key))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Coerce a SeededRng (root stream), a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeededRng):
        return rng.stream()
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng)).stream()
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random source")


_KINDS = ("gaussian", "rademacher", "laplace", "iid_centered")


@dataclass(frozen=True)
class DesignSpec:
    """A design family and its dimension.

    kind: 'gaussian' | 'rademacher' | 'laplace' | 'iid_centered'
    table: for 'iid_centered', a (values, probabilities) pair describing the
        coordinate law; it is standardized to mean 0 / variance 1 on
        construction so the design stays isotropic.
    """

    kind: str
    d: int
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}; choose from {_KINDS}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.kind == "iid_centered":
            if self.table is None:
                raise ValueError("iid_centered requires a (values, probabilities) table")
            vals = np.asarray(self.table[0], dtype=float)
            probs = np.asarray(self.table[1], dtype=float)
            if vals.ndim != 1 or vals.shape != probs.shape or vals.size < 2:
                raise ValueError("table must be two equal-length 1-d arrays, >= 2 atoms")
            if (probs <= 0).any() or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("probabilities must be positive and sum to 1")
            mean = vals @ probs
            var = ((vals - mean) ** 2) @ probs
            if var <= 0:
                raise ValueError("table must have positive variance")
            vals = (vals - mean) / math.sqrt(var)
            vals.setflags(write=False)
            probs.setflags(write=False)
            object.__setattr__(self, "table", (vals, probs))
        elif self.table is not None:
            raise ValueError(f"table is only meaningful for iid_centered, not {self.kind}")


@dataclass(frozen=True)
class Wellspec:
    """Logit labels: P(Y = +1 | X) = sigma(<theta_star, X>)."""

    theta_star: np.ndarray

    def __post_init__(self):
        t = ModelParams(self.theta_star).theta
        object.__setattr__(self, "theta_star", t)


@dataclass(frozen=True)
class WorstCase:
    """Sign labels along u_star flipped with probability p, the misspecified
    law that maximizes gradient deviation at a given mistake rate."""

    u_star: np.ndarray
    p: float

    def __post_init__(self):
        u = np.asarray(self.u_star, dtype=float).ravel()
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError("u_star must be a unit vector")
        if not (0.0 < self.p < WORSTCASE_P_MAX):
            raise ValueError(
                f"p must lie in (0, e^-2/2) = (0, {WORSTCASE_P_MAX:.6f}), got {self.p}")
        u.setflags(write=False)
        object.__setattr__(self, "u_star", u)
        object.__setattr__(self, "p", float(self.p))


def sample_design(spec, n, rng, dtype=np.float64):
    """Draw an (n, d) design matrix with i.i.d. rows from the family.

    dtype selects the output precision (float32 cuts memory traffic in half
    for the large audit sweeps). The dtype is part of the draw's identity:
    float32 and float64 requests may consume the stream differently.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = as_generator(rng)
    if spec.kind == "gaussian":
        return gen.standard_normal((n, spec.d), dtype=dtype)
    if spec.kind == "rademacher":
        # one fair bit per entry, pulled from the stream as raw bytes; the
        # obvious integers(0, 2) route spends 32 stream bits per sign and is
        # far too slow at audit scale (d ~ 4096, 1e7 draws)
        width = (spec.d + 7) // 8
        raw = np.frombuffer(gen.bytes(n * width), dtype=np.uint8)
        bits = np.unpackbits(raw.reshape(n, width), axis=1)[:, :spec.d]
        out = bits.astype(dtype)
        out *= 2.0
        out -= 1.0
        return out
    if spec.kind == "laplace":
        # scale 1/sqrt(2) gives unit variance
        x = gen.laplace(0.0, 1.0 / math.sqrt(2.0), size=(n, spec.d))
        return x.astype(dtype, copy=False)
    vals, probs = spec.table
    edges = np.cumsum(probs)
    idx = np.searchsorted(edges, gen.random((n, spec.d)), side="right")
    return vals[np.minimum(idx, vals.size - 1)].astype(dtype, copy=False)


def sample_labels(x, law, rng):
    """Draw labels for the rows of x under the given label law.

    Wellspec: Y = +1 with probability sigma(<theta_star, x_i>).
    WorstCase: Y = sign(<u_star, x_i>) (fair coin on ties), then flipped with
    probability p, independently per row.
    """
    gen = as_generator(rng)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if isinstance(law, Wellspec):
        p_plus = sigmoid(x @ law.theta_star)
        return np.where(gen.random(n) < p_plus, 1.0, -1.0)
    if isinstance(law, WorstCase):
        s = np.sign(x @ law.u_star)
        ties = s == 0.0
        if ties.any():
            s[ties] = np.where(gen.random(int(ties.sum())) < 0.5, 1.0, -1.0)
        flip = gen.random(n) < law.p
        return np.where(flip, -s, s)
    raise TypeError(f"unknown label law {type(law).__name__}")


def sample_dataset(spec, law, n, rng):
    """Design plus labels from one stream, in a fixed consumption order."""
    gen = as_generator(rng)
    x = sample_design(spec, n, gen)
    y = sample_labels(x, law, gen)
    return Dataset(x, y)


def _mistake_rate(b):
    # sqrt(pi/2) E[|G| sigma(-b|G|)] = integral_0^inf g e^{-g^2/2} sigma(-b g) dg
    f = lambda g: g * math.exp(-0.5 * g * g) * sigmoid(-b * g)
    cut = max(1.0, 40.0 / b)
    val = quad(f, 0.0, cut, points=[1.0 / b, 10.0 / b] if b > 40 else None,
               limit=200, epsabs=1e-12, epsrel=1e-10)[0]
    val += quad(f, cut, np.inf, limit=200, epsabs=1e-14)[0]
    return val


def worstcase_signal_of_p(p):
    """Solve for the signal strength B at which the worst-case law's mistake
    probability equals p (Gaussian design).

    The defining scalar equation is p = sqrt(pi/2) E[|G| sigma(-B|G|)]; the
    solution always satisfies 1/sqrt(2p) <= B <= 1/sqrt(p), which brackets the
    root. Quadrature tolerance ~1e-10, root tolerance 1e-10 relative.
    """
    if not (0.0 < p < WORSTCASE_P_MAX):
        raise ValueError(
            f"p must lie in (0, e^-2/2) = (0, {WORSTCASE_P_MAX:.6f}), got {p}")
    lo = 0.9 / math.sqrt(2.0 * p)
    hi = 1.1 / math.sqrt(p)
    return float(brentq(lambda b: _mistake_rate(b) - p, lo, hi,
                        xtol=1e-12, rtol=1e-12))


def dataset_to_csv(ds, path):
    """Write a dataset as CSV with header x1,...,xd,y and labels in {-1,1}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(ds.d)] + ["y"])
        for i in range(ds.n):
            w.writerow([repr(float(v)) for v in ds.x[i]] + [int(ds.y[i])])


def dataset_from_csv(path):
    """Read a dataset written by dataset_to_csv (header x1,...,xd,y)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[-1] != "y" or any(h != f"x{j + 1}" for j, h in enumerate(header[:-1])):
            raise ValueError(f"unexpected CSV header {header!r}; want x1,...,xd,y")
        rows = [[float(v) for v in row] for row in r if row]
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise ValueError("malformed CSV body")
    return Dataset(arr[:, :-1], arr[:, -1])
