"""Simulation scenarios with known exposure-response curves.

All four scenarios share ``U ~ N(1, 0.2)``, ``W | U ~ N(1 - 2U, 0.2)`` and
``Z | U ~ N(-1 + 1.5U, 0.2)``; they differ in the exposure and outcome
models. Second arguments of ``N(., .)`` are variances.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CerfGrid, Dataset, ModelConfig, format_float
from .errors import ConfigError, NCCerfError, StorageError

U_MEAN, U_VAR = 1.0, 0.2
SCENARIOS = (1, 2, 3, 4)
# exposure model X | U ~ N(a + 4U, 0.2): intercept a per scenario
X_INTERCEPT = {1: 1.5, 2: 1.5, 3: 1.0, 4: 2.5}
X_SLOPE, X_VAR = 4.0, 0.2


@dataclass(frozen=True)
class Scenario:
    id: int
    n: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.id not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.id}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")


def _sign(a):
    return np.where(a >= 0, 1.0, -1.0)


def outcome_mean(sid: int, x, u):
    """``E[Y | X = x, U = u]`` for scenario ``sid``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if sid == 1:
        return np.where(x < 5.5, 1 + 2 * x + 2 * u, -16 + 5 * x + 2.5 * u)
    if sid == 2:
        return -10 + 2.2 * (x - 6) ** 2 + 4 * u
    if sid == 3:
        return 1.5 + _sign(x - 5) * np.sqrt(np.abs(x - 5)) + 1.7 * u
    if sid == 4:
        return -2 * np.exp(-1.4 * (x - 6)) + 0.8 * np.exp(u)
    raise ConfigError(f"unknown scenario {sid}")


OUTCOME_VAR = {1: 0.3, 2: 0.2, 3: 0.05, 4: 0.2}


def simulate(s: Scenario, rng=None) -> Dataset:
    """Draw one dataset; the confounder is kept in ``u_hidden``."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(int(s.seed)))
    n = s.n
    sd = math.sqrt
    u = rng.normal(U_MEAN, sd(U_VAR), n)
    w = rng.normal(1 - 2 * u, sd(0.2))
    z = rng.normal(-1 + 1.5 * u, sd(0.2))
    x = rng.normal(X_INTERCEPT[s.id] + X_SLOPE * u, sd(X_VAR))
    y = rng.normal(outcome_mean(s.id, x, u), sd(OUTCOME_VAR[s.id]))
    return Dataset(y=y, x=x, z=z, w=w, u_hidden=u)


def true_cerf(sid: int, x):
    """Exposure-response curve with ``U`` integrated out analytically."""
    x = np.asarray(x, dtype=float)
    if sid == 1:
        return np.where(x < 5.5, 3 + 2 * x, -13.5 + 5 * x)
    if sid == 2:
        return -6 + 2.2 * (x - 6) ** 2
    if sid == 3:
        return 3.2 + _sign(x - 5) * np.sqrt(np.abs(x - 5))
    if sid == 4:
        # E[exp(U)] = exp(mean + var / 2)
        return -2 * np.exp(-1.4 * (x - 6)) + 0.8 * math.exp(U_MEAN + U_VAR / 2)
    raise ConfigError(f"unknown scenario {sid}")


def exposure_quantile(sid: int, q):
    """Population quantile of the exposure, which is Gaussian."""
    from scipy.stats import norm
    mean = X_INTERCEPT[sid] + X_SLOPE * U_MEAN
    var = X_SLOPE ** 2 * U_VAR + X_VAR
    return norm.ppf(q, mean, math.sqrt(var))


# ---------------------------------------------------------------------------
# Replication harness


def replicate_seed(seed: int, sid: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(sid), int(r)))


@dataclass
class BenchmarkReport:
    scenario: int
    n: int
    grid: np.ndarray
    truth: np.ndarray
    central: np.ndarray          # boolean mask over the grid
    levels: tuple
    modes: dict = field(default_factory=dict)   # mode -> ModeResult
    failed: list = field(default_factory=list)  # (mode, replicate, message)

    def summary(self) -> dict:
        out = {"scenario": self.scenario, "n": self.n,
               "grid_points": int(self.grid.size),
               "central_points": int(self.central.sum()),
               "failed_replicates": [list(f) for f in self.failed],
               "modes": {}}
        for mode, res in self.modes.items():
            out["modes"][mode] = res.summary(self.central)
        return out


@dataclass
class ModeResult:
    medians: np.ndarray       # (replicates, G)
    covered: dict             # level -> (replicates, G) bool
    pooled_median: np.ndarray
    pooled_bands: dict        # level -> (lo, hi)
    runtimes: list
    truth: np.ndarray

    def rmse(self, mask=None) -> np.ndarray:
        """Per-replicate RMSE of the posterior median against the truth."""
        mask = np.ones(self.truth.size, bool) if mask is None else mask
        err = self.medians[:, mask] - self.truth[mask]
        return np.sqrt(np.mean(err ** 2, axis=1))

    def pooled_coverage(self, level, mask) -> float:
        lo, hi = self.pooled_bands[level]
        inside = (lo <= self.truth) & (self.truth <= hi)
        return float(inside[mask].mean())

    def summary(self, central) -> dict:
        return {
            "replicates": int(self.medians.shape[0]),
            "rmse_central_mean": float(self.rmse(central).mean()),
            "rmse_central_pooled_median": float(np.sqrt(np.mean(
                (self.pooled_median[central] - self.truth[central]) ** 2))),
            "rmse_all_mean": float(self.rmse().mean()),
            "coverage_per_replicate_central": {
                str(lv): float(c[:, central].mean())
                for lv, c in self.covered.items()},
            "coverage_pooled_central": {
                str(lv): self.pooled_coverage(lv, central)
                for lv in self.pooled_bands},
            "runtime_s_mean": float(np.mean(self.runtimes)),
            "runtime_s_total": float(np.sum(self.runtimes)),
        }


def _replicate_job(job):
    from .baselines import fit

    mode, _, data, config, grid = job
    t0 = time.perf_counter()
    try:
        est = fit(data, config, mode=mode, grid=grid)
    except NCCerfError as exc:
        return None, 0.0, str(exc)
    est.chain = None  # keep worker results small
    return est, time.perf_counter() - t0, None


def run_replications(sid: int, n: int, replicates: int,
                     config: ModelConfig = None, modes=("bnp_nc",),
                     central=(0.1, 0.9), progress=None,
                     threads: int = 1) -> BenchmarkReport:
    """Simulate, fit and score ``replicates`` datasets of one scenario.

    Every replicate ``r`` draws its data from a stream keyed on
    ``(config.seed, sid, r)``, and its chain is seeded from the same key, so
    any replicate can be rerun alone. All fits are scored on one common grid
    spanning the 1st-99th percentiles of the pooled simulated exposures; the
    central region is the ``central`` percentile range of those exposures.
    ``u`` is masked for every mode except ``yxu``. ``threads > 1`` fits
    replicates in worker processes; results do not depend on it.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    config = config or ModelConfig()
    Scenario(sid, n)  # validates
    datasets = []
    for r in range(replicates):
        ss = replicate_seed(config.seed, sid, r)
        data_ss, chain_ss = ss.spawn(2)
        rng = np.random.Generator(np.random.PCG64(data_ss))
        chain_seed = int(chain_ss.generate_state(1, np.uint64)[0])
        datasets.append((simulate(Scenario(sid, n), rng), chain_seed))
    pooled_x = np.concatenate([d.x for d, _ in datasets])
    grid = CerfGrid(config.grid.points, config.grid.lower,
                    config.grid.upper).resolve(pooled_x)
    lo, hi = np.quantile(pooled_x, central)
    mask = (grid >= lo) & (grid <= hi)
    truth = true_cerf(sid, grid)
    levels = tuple(sorted(config.levels))
    report = BenchmarkReport(sid, n, grid, truth, mask, levels)
    jobs = [(mode, r, d if mode == "yxu" else d.without_u(),
             config.with_(seed=chain_seed), grid)
            for mode in modes for r, (d, chain_seed) in enumerate(datasets)]
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_replicate_job, jobs))
    else:
        results = []
        for j in jobs:
            results.append(_replicate_job(j))
            if progress and results[-1][2] is None:
                progress(j[0], j[1], results[-1][1])
    for mode in modes:
        meds, covered, runtimes, pooled = [], {lv: [] for lv in levels}, [], []
        for (m, r, *_), (est, secs, err) in zip(jobs, results):
            if m != mode:
                continue
            if err is not None:
                report.failed.append((mode, r, err))
                continue
            runtimes.append(secs)
            meds.append(est.median)
            for lv in levels:
                blo, bhi = est.bands[lv]
                covered[lv].append((blo <= truth) & (truth <= bhi))
            pooled.append(est.draws)
        if not meds:
            continue
        allv = np.concatenate(pooled)
        pmed = np.quantile(allv, 0.5, axis=0)
        pbands = {lv: tuple(np.quantile(allv, [0.5 - lv / 2, 0.5 + lv / 2],
                                        axis=0)) for lv in levels}
        report.modes[mode] = ModeResult(
            medians=np.array(meds),
            covered={lv: np.array(c) for lv, c in covered.items()},
            pooled_median=pmed, pooled_bands=pbands, runtimes=runtimes,
            truth=truth)
    return report


def write_report(report: BenchmarkReport, out_dir, thresholds=None) -> list:
    """Write ``scenario<id>_<mode>.csv`` per mode plus a summary JSON.

    The CSV has one row per grid point: truth, pooled median, pooled band
    edges and per-replicate coverage fractions at each level.
    """
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for mode, res in report.modes.items():
            path = out_dir / f"scenario{report.scenario}_{mode}.csv"
            cols = ["x", "truth", "median", "central"]
            for lv in report.levels:
                tag = f"{round(lv * 100):d}"
                cols += [f"lo_{tag}", f"hi_{tag}", f"coverage_{tag}"]
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(cols) + "\n")
                for g in range(report.grid.size):
                    row = [report.grid[g], report.truth[g],
                           res.pooled_median[g], float(report.central[g])]
                    for lv in report.levels:
                        blo, bhi = res.pooled_bands[lv]
                        row += [blo[g], bhi[g], res.covered[lv][:, g].mean()]
                    fh.write(",".join(format_float(v) for v in row) + "\n")
            written.append(path)
        summary = report.summary()
        if thresholds:
            summary["acceptance"] = thresholds
        spath = out_dir / f"scenario{report.scenario}_summary.json"
        spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
        written.append(spath)
    except OSError as exc:
        raise StorageError(f"cannot write benchmark report: {exc}") from exc
    return written
