"""Full-scale validation runs.

Each test exercises one headline behavior of the library end to end at its
production scale, asserts the pinned tolerance, and prints a single
PASS/FAIL line with the measured statistic and the wall time. The prints are
echoed past pytest's capture so the ten lines always appear in the run log.
"""

import math
import sys
import time

import numpy as np
import pytest

from logitlab.audit import (gradient_deviation_experiment, hessian_lower_sweep,
                            margin_probes, psi1_norm_estimate,
                            two_dim_margin_estimate)
from logitlab.core import Dataset, StructuredSpectralMatrix
from logitlab.designs import (DesignSpec, SeededRng, Wellspec, sample_dataset,
                              worstcase_signal_of_p)
from logitlab.harness import (ExperimentConfig, existence_crossing_n,
                              run_existence_grid, run_risk_grid)
from logitlab.solver import SeparationStatus, check_separation
from logitlab.theory import (phase_boundary, psi, sample_boundary_margins,
                             statistical_dimension_F)

from oracles import angle_scan_separable, psi_quadrature


@pytest.fixture(autouse=True)
def _echo_past_capture(capfd):
    yield
    captured = capfd.readouterr()
    with capfd.disabled():
        if captured.out:
            sys.stdout.write(captured.out)
        if captured.err:
            sys.stderr.write(captured.err)


def _gate(label, ok, detail, elapsed, budget):
    in_time = elapsed <= budget
    line = (f"[{'PASS' if ok and in_time else 'FAIL'}] {label}: {detail} "
            f"({elapsed:.0f}s of {budget:.0f}s)")
    print(line, flush=True)
    assert ok, line
    assert in_time, line


def test_01_wilks_mean_at_scale():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(design="gaussian", law="wellspec", d_grid=(5,),
                           signal_grid=(1.0,), n_grid=(10_000,),
                           replicates=2000, master_seed=41)
    row, = run_risk_grid(cfg)
    elapsed = time.perf_counter() - t0
    ok = 4.5 <= row.wilks_mean <= 5.5
    _gate("01 wilks-mean", ok,
          f"mean 2n*excess = {row.wilks_mean:.4f} in [4.5, 5.5], "
          f"existence {row.existence_frequency:.3f}", elapsed, 300)


def test_02_zero_signal_phase_transition():
    t0 = time.perf_counter()
    pb = phase_boundary(0.0, 10**6, SeededRng(11).stream("pb0"))
    cfg = ExperimentConfig(design="gaussian", law="wellspec", d_grid=(160, 240),
                           signal_grid=(0.0,), n_grid=(400,), replicates=500,
                           master_seed=11, compute_risk=False)
    low, high = run_existence_grid(cfg)
    elapsed = time.perf_counter() - t0
    ok = (abs(pb.h_hat - 0.5) <= 0.01
          and low.existence_frequency >= 0.95
          and high.existence_frequency <= 0.05)
    _gate("02 zero-signal-phase-transition", ok,
          f"h(0) = {pb.h_hat:.5f} (|err| <= 0.01), freq(d=160) = "
          f"{low.existence_frequency:.3f} >= 0.95, freq(d=240) = "
          f"{high.existence_frequency:.3f} <= 0.05", elapsed, 180)


def test_03_gradient_bound_coverage():
    t0 = time.perf_counter()
    d, b, t = 10, math.e, 2.0
    n = math.ceil(4.0 * b * (d * math.log(5.0) + t))
    summary = gradient_deviation_experiment(d, b, n, t, 2000,
                                            SeededRng(43).stream("gd"))
    elapsed = time.perf_counter() - t0
    floor = 1.0 - 2.0 * math.exp(-2.0) - 0.02
    ok = summary.coverage >= floor
    _gate("03 gradient-bound-coverage", ok,
          f"coverage = {summary.coverage:.4f} >= {floor:.4f} at n = {n}, "
          f"bound = {summary.bound:.3f}", elapsed, 120)


def test_04_curvature_floor_sweep():
    t0 = time.perf_counter()
    d, b = 5, math.e
    n = math.ceil(320_000 * b * (d + 1))
    radius = 1.0 / (100.0 * math.sqrt(b))
    u = np.zeros(d)
    u[0] = 1.0
    theta_star = b * u
    h = StructuredSpectralMatrix(u, b)
    spec = DesignSpec("gaussian", d)
    law = Wellspec(theta_star)
    rng = SeededRng(17)
    mins = np.empty(100)
    for r in range(100):
        data = sample_dataset(spec, law, n, rng.stream("sweep", r, "data"))
        mins[r] = hessian_lower_sweep(data, theta_star, h, radius, 200,
                                      rng.stream("sweep", r, "dirs"))
    elapsed = time.perf_counter() - t0
    frac = float(np.mean(mins >= 1e-3))
    ok = frac >= 0.98
    _gate("04 curvature-floor-sweep", ok,
          f"min whitened eigenvalue >= 1/1000 on {frac:.0%} of 100 "
          f"replicates (min seen {mins.min():.4f}) at n = {n}", elapsed, 1200)


def test_05_sparse_failure_diffuse_success():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(design="rademacher", law="wellspec", d_grid=(4,),
                           signal_grid=(5.0,), n_grid=(10,), replicates=2000,
                           master_seed=47, compute_risk=False)
    row, = run_existence_grid(cfg)

    d = 4096
    rng = SeededRng(31)
    spec = DesignSpec("rademacher", d)
    u = np.full(d, 1.0 / math.sqrt(d))
    k = psi1_norm_estimate(spec, u, (2.0, 4.0, 8.0, 16.0), 10**6,
                           rng.stream("psi1"))
    eta = 18.0 * k**3 / math.sqrt(d)
    probes = margin_probes(u, rng.stream("probes"))
    ratio = two_dim_margin_estimate(spec, u, eta, 21_000.0, probes, 10**7,
                                    rng.stream("margin"))
    elapsed = time.perf_counter() - t0
    ok = row.existence_frequency <= 0.12 and ratio >= 1.0
    _gate("05 sparse-failure-diffuse-success", ok,
          f"aligned-signal existence freq = {row.existence_frequency:.4f} "
          f"<= 0.12; diffuse joint-margin ratio = {ratio:.3f} >= 1 "
          f"(psi1 = {k:.4f}, eta = {eta:.3f})", elapsed, 600)


def test_06_positive_part_moment_closed_form():
    t0 = time.perf_counter()
    grid = np.linspace(-10.0, 10.0, 2001)
    errs = [abs(psi(float(s)) - psi_quadrature(float(s))) for s in grid]
    elapsed = time.perf_counter() - t0
    worst = max(errs)
    ok = worst <= 1e-10
    _gate("06 positive-part-moment-closed-form", ok,
          f"max |closed form - quadrature| = {worst:.2e} <= 1e-10 "
          f"over 2001 points", elapsed, 60)


def test_07_statistical_dimension_consistency():
    t0 = time.perf_counter()
    rng = SeededRng(2026)
    details = []
    ok = True
    for beta in (1.0, 5.0, 10.0):
        vals = []
        for k in range(200):
            v = sample_boundary_margins(beta, 500,
                                        rng.stream("dim", int(beta), k, "v"))
            est = statistical_dimension_F(v, 50,
                                          rng.stream("dim", int(beta), k, "z"))
            vals.append(est.f_hat / 500.0)
        f_over_n = float(np.mean(vals))
        pb = phase_boundary(beta, 10**6, rng.stream("dim", int(beta), "pb"))
        ratio = f_over_n / pb.h_hat
        ok = ok and ratio <= 1.05
        details.append(f"beta={beta:g}: {ratio:.4f}")
    elapsed = time.perf_counter() - t0
    _gate("07 statistical-dimension-consistency", ok,
          "f_hat/(n h_hat) <= 1.05 over 10^4 draws each: "
          + ", ".join(details), elapsed, 300)


def test_08_planar_separation_oracle():
    t0 = time.perf_counter()
    rng = SeededRng(53)
    agree = 0
    for k in range(200):
        stream = rng.stream("sep", k)
        n = int(stream.integers(3, 11))
        if k % 2 == 0:
            x = stream.standard_normal((n, 2))
        else:
            x = 2.0 * stream.integers(0, 2, (n, 2)) - 1.0
        x = np.asarray(x, dtype=float)
        y = np.where(stream.random(n) < 0.5, 1.0, -1.0)
        verdict = (check_separation(Dataset(x, y)).status
                   is not SeparationStatus.NOT_SEPARATED)
        agree += verdict == angle_scan_separable(x, y)
    elapsed = time.perf_counter() - t0
    ok = agree == 200
    _gate("08 planar-separation-oracle", ok,
          f"agreement with angle scan on {agree}/200 mixed instances",
          elapsed, 60)


def test_09_flip_probability_calibration():
    t0 = time.perf_counter()
    details = []
    ok = True
    for p in (0.06, 0.01, 0.001):
        b = worstcase_signal_of_p(p)
        lo, hi = 1.0 / (2.0 * b * b), 1.0 / (b * b)
        ok = ok and lo <= p <= hi
        details.append(f"p={p:g}: B={b:.4f}, p B^2={p * b * b:.4f}")
    elapsed = time.perf_counter() - t0
    _gate("09 flip-probability-calibration", ok,
          "1/(2B^2) <= p <= 1/B^2 at " + "; ".join(details), elapsed, 60)


def test_10_linear_in_signal_sample_threshold():
    t0 = time.perf_counter()
    d = 20
    n_star = {}
    for b in (10.0, 20.0):
        n_star[b] = existence_crossing_n(d, b, replicates=300, master_seed=61)
    growth = n_star[20.0] / n_star[10.0]
    ratios = {b: n_star[b] / (b * d) for b in n_star}
    elapsed = time.perf_counter() - t0
    ok = (all(0.05 <= r <= 5.0 for r in ratios.values())
          and 1.3 <= growth <= 3.0)
    _gate("10 linear-in-signal-sample-threshold", ok,
          f"n*(B=10) = {n_star[10.0]} (n*/Bd = {ratios[10.0]:.2f}), "
          f"n*(B=20) = {n_star[20.0]} (n*/Bd = {ratios[20.0]:.2f}), "
          f"growth = {growth:.2f} in [1.3, 3]", elapsed, 900)
