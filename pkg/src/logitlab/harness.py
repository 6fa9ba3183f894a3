"""Config-driven experiment grids: existence phase transition, excess-risk
concentration, and misspecified-label inflation, with seeded reproducibility
and deterministic CSV output.

Every cell/replicate pair draws from its own counter-based stream keyed by
(master_seed, cell_index, replicate_index), so cells can be recomputed in any
order and a rerun of the same config reproduces every CSV byte for byte.
Wall-clock times are kept in memory only and never written to disk.
"""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass
from importlib import resources

import jsonschema
import numpy as np

from .designs import (WORSTCASE_P_MAX, DesignSpec, SeededRng, Wellspec,
                      WorstCase, sample_dataset, worstcase_signal_of_p)
from .solver import FitStatus, SeparationStatus, check_separation, fit_mle
from .theory import excess_risk_gaussian_wellspec, excess_risk_mc

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "CellSummary",
    "run_existence_grid",
    "run_risk_grid",
    "run_misspec_grid",
    "existence_crossing_n",
    "write_grid_csv",
    "load_schema",
    "GRID_CSV_HEADER",
]

SCHEMA_VERSION = "1"

_DESIGNS = ("gaussian", "rademacher", "laplace", "iid_centered")
_LAWS = ("wellspec", "worstcase")


def load_schema(name):
    """Load one of the shipped JSON schemas by stem name."""
    text = resources.files("logitlab").joinpath(
        "schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment grid.

    signal_grid holds ||theta*|| values for the well-specified law and flip
    probabilities p for the worst-case law (each p is converted to its signal
    strength via the stationarity equation). n_grid entries are sample sizes
    when n_mode is 'absolute', or multipliers of B*d when n_mode is
    'times_bd'. t is the tail parameter handed to deviation experiments that
    are driven from a config file; the grid runners record it but do not
    consume it.
    """

    design: str
    law: str
    d_grid: tuple
    signal_grid: tuple
    n_grid: tuple
    replicates: int
    master_seed: int
    n_mode: str = "absolute"
    t: float = 1.0
    risk_mc: int = 200_000
    compute_risk: bool = True
    output_path: str = None

    def __post_init__(self):
        object.__setattr__(self, "d_grid", tuple(int(d) for d in self.d_grid))
        object.__setattr__(self, "signal_grid",
                           tuple(float(s) for s in self.signal_grid))
        object.__setattr__(self, "n_grid",
                           tuple(float(n) for n in self.n_grid))
        if self.design not in _DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.law not in _LAWS:
            raise ValueError(f"unknown law {self.law!r}")
        for name in ("d_grid", "signal_grid", "n_grid"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        if any(d < 1 for d in self.d_grid):
            raise ValueError("dimensions must be >= 1")
        if self.law == "worstcase":
            bad = [s for s in self.signal_grid
                   if not 0.0 < s < WORSTCASE_P_MAX]
            if bad:
                raise ValueError(
                    f"worst-case flip probabilities outside (0, e^-2/2): {bad}")
        elif any(s < 0 for s in self.signal_grid):
            raise ValueError("signal norms must be >= 0")
        if self.n_mode not in ("absolute", "times_bd"):
            raise ValueError(f"unknown n_mode {self.n_mode!r}")
        if self.t < 0:
            raise ValueError("tail parameter t must be >= 0")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.risk_mc < 100:
            raise ValueError("risk_mc must be >= 100")
        for _, _, _, n in self.cells():
            if n < 1:
                raise ValueError("every cell must have n >= 1")

    def _resolve_n(self, value, d, signal):
        if self.n_mode == "absolute":
            return int(round(value))
        b = self.cell_signal_strength(signal)
        return int(math.ceil(value * b * d))

    def cell_signal_strength(self, signal):
        """B = max(e, ||theta*||), with p -> B conversion for worst case."""
        if self.law == "worstcase":
            return worstcase_signal_of_p(signal)
        return max(math.e, signal)

    def cells(self):
        """Deterministic cell enumeration: (index, d, signal, n)."""
        idx = 0
        for d in self.d_grid:
            for s in self.signal_grid:
                for v in self.n_grid:
                    yield idx, d, s, self._resolve_n(v, d, s)
                    idx += 1

    def to_json_dict(self):
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        for key in ("d_grid", "signal_grid", "n_grid"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_json_dict(cls, payload):
        jsonschema.validate(payload, load_schema("experiment_config"))
        payload = dict(payload)
        payload.pop("schema_version", None)
        return cls(**payload)


@dataclass(frozen=True)
class CellSummary:
    """Aggregates for one (d, signal, n) cell.

    Risk fields are NaN when no replicate produced a finite maximizer (the
    convention: excess risk is +infinity on separated samples, so separated
    replicates count toward existence_frequency and nothing else).
    wall_time_s never reaches the CSV writer.
    """

    design: str
    law: str
    d: int
    signal: float
    b: float
    p: float
    n: int
    replicates: int
    n_existing: int
    existence_frequency: float
    existence_lo: float
    existence_hi: float
    excess_q50: float
    excess_q90: float
    excess_q99: float
    wilks_mean: float
    mean_iterations: float
    direction_error_median: float
    norm_error_median: float
    noflip_frequency: float
    wall_time_s: float

    def __post_init__(self):
        if not 0.0 <= self.existence_frequency <= 1.0:
            raise ValueError("existence_frequency must lie in [0, 1]")
        qs = [self.excess_q50, self.excess_q90, self.excess_q99]
        finite = [q for q in qs if not math.isnan(q)]
        if any(x > y + 1e-15 for x, y in zip(finite, finite[1:])):
            raise ValueError("excess quantiles must be nondecreasing")


def _wilson_scalar(count, n, z=1.959963984540054):
    p = count / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _run_cell(config, cell_idx, d, signal, n, want_direction, want_noflip):
    t_start = time.perf_counter()
    rng = SeededRng(config.master_seed)
    spec = DesignSpec(config.design, d)
    u_star = np.zeros(d)
    u_star[0] = 1.0
    if config.law == "worstcase":
        p = signal
        b = worstcase_signal_of_p(p)
        law = WorstCase(u_star, p)
        theta_ref = b * u_star
    else:
        p = math.nan
        b = max(math.e, signal)
        law = Wellspec(signal * u_star)
        theta_ref = signal * u_star

    thetas, iters = [], []
    n_exist = 0
    noflip = 0
    for r in range(config.replicates):
        stream = rng.stream(cell_idx, r)
        data = sample_dataset(spec, law, n, stream)
        if want_noflip:
            noflip += int(not (data.y * (data.x @ u_star) < 0).any())
        if config.compute_risk:
            fit = fit_mle(data)
            if fit.status == FitStatus.SEPARATION_DETECTED:
                continue
            n_exist += 1
            thetas.append(fit.theta_hat.theta)
            iters.append(fit.iterations)
        else:
            # existence only: the separation check settles it without the
            # cost of polishing a maximizer
            sep = check_separation(data)
            n_exist += sep.status == SeparationStatus.NOT_SEPARATED

    freq = n_exist / config.replicates
    lo, hi = _wilson_scalar(n_exist, config.replicates)

    nan = math.nan
    q50 = q90 = q99 = wilks = mean_it = dir_med = norm_med = nan
    if thetas:
        th = np.array(thetas)
        if config.design == "gaussian" and config.law == "wellspec":
            a = th @ u_star
            orth = np.sqrt(np.maximum((th ** 2).sum(axis=1) - a ** 2, 0.0))
            excess = excess_risk_gaussian_wellspec(a, orth, signal)
        else:
            rng_mc = rng.stream(cell_idx, "risk")
            excess = np.array([
                excess_risk_mc(t, theta_ref, spec, law, config.risk_mc,
                               rng_mc)[0]
                for t in th])
        q50, q90, q99 = np.quantile(excess, [0.5, 0.9, 0.99])
        wilks = float(2.0 * n * excess.mean())
        mean_it = float(np.mean(iters))
        if want_direction and signal > 0:
            norms = np.linalg.norm(th, axis=1)
            ok = norms > 0
            dirs = th[ok] / norms[ok, None]
            dir_med = float(np.median(np.linalg.norm(dirs - u_star, axis=1)))
            norm_med = float(np.median(np.abs(norms - np.linalg.norm(theta_ref))))

    return CellSummary(
        design=config.design, law=config.law, d=d, signal=signal, b=b, p=p,
        n=n, replicates=config.replicates, n_existing=n_exist,
        existence_frequency=freq, existence_lo=lo, existence_hi=hi,
        excess_q50=float(q50), excess_q90=float(q90), excess_q99=float(q99),
        wilks_mean=wilks, mean_iterations=mean_it,
        direction_error_median=dir_med, norm_error_median=norm_med,
        noflip_frequency=(noflip / config.replicates) if want_noflip else nan,
        wall_time_s=time.perf_counter() - t_start,
    )


def _run_grid(config, want_direction=False, want_noflip=False):
    cells = [
        _run_cell(config, idx, d, s, n, want_direction, want_noflip)
        for idx, d, s, n in config.cells()
    ]
    if config.output_path:
        write_grid_csv(cells, config.output_path)
    return cells


def run_existence_grid(config):
    """Existence frequencies (and, optionally, risk aggregates) per cell."""
    return _run_grid(config)


def run_risk_grid(config):
    """Risk-focused grid: adds direction and norm error medians per cell."""
    return _run_grid(config, want_direction=True)


def run_misspec_grid(config):
    """Worst-case-label grid: adds the no-sign-error frequency per cell."""
    if config.law != "worstcase":
        raise ValueError("misspec grid requires the worstcase law")
    return _run_grid(config, want_direction=True, want_noflip=True)


def existence_crossing_n(d, signal, replicates, master_seed, design="gaussian",
                         law="wellspec", target=0.5, n_hi=None):
    """Smallest n (on the bisection lattice) where the existence frequency
    reaches the target.

    Starts from the always-separable floor n = d and an upper bracket that is
    doubled until the frequency clears the target, then bisects on integers.
    Each probe uses fresh per-(n, replicate) streams.
    """
    rng = SeededRng(master_seed)
    spec = DesignSpec(design, d)
    u_star = np.zeros(d)
    u_star[0] = 1.0
    if law == "worstcase":
        lab = WorstCase(u_star, signal)
        b = worstcase_signal_of_p(signal)
    else:
        lab = Wellspec(signal * u_star)
        b = max(math.e, signal)

    def freq(n):
        count = 0
        for r in range(replicates):
            data = sample_dataset(spec, lab, n, rng.stream("crossing", n, r))
            sep = check_separation(data)
            count += sep.status == SeparationStatus.NOT_SEPARATED
        return count / replicates

    lo = d  # n <= d points in general position are always separable
    hi = n_hi if n_hi is not None else int(math.ceil(5.0 * b * d))
    while freq(hi) < target:
        hi *= 2
        if hi > 10 ** 6:
            raise RuntimeError("existence crossing not found below n = 1e6")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if freq(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


GRID_CSV_HEADER = (
    "schema_version,design,law,d,signal,b,p,n,replicates,n_existing,"
    "existence_frequency,existence_lo,existence_hi,excess_q50,excess_q90,"
    "excess_q99,wilks_mean,mean_iterations,direction_error_median,"
    "norm_error_median,noflip_frequency"
)


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def grid_csv_text(cells):
    """Render cell summaries as deterministic CSV text (no wall times)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_CSV_HEADER.split(","))
    for c in cells:
        writer.writerow([
            SCHEMA_VERSION, c.design, c.law, c.d, _fmt(c.signal), _fmt(c.b),
            _fmt(c.p), c.n, c.replicates, c.n_existing,
            _fmt(c.existence_frequency), _fmt(c.existence_lo),
            _fmt(c.existence_hi), _fmt(c.excess_q50), _fmt(c.excess_q90),
            _fmt(c.excess_q99), _fmt(c.wilks_mean), _fmt(c.mean_iterations),
            _fmt(c.direction_error_median), _fmt(c.norm_error_median),
            _fmt(c.noflip_frequency),
        ])
    return buf.getvalue()


def write_grid_csv(cells, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(grid_csv_text(cells))
