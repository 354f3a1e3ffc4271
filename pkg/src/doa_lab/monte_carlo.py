"""Seeded Monte-Carlo trials, MSE sweeps over SNR, threshold detection and
standardized-residual Gaussianity checks.

Trial ``t`` at SNR index ``i`` draws from ``mix_seed(master_seed, i, t)``, so
results do not depend on how trials are scheduled across workers.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .array_model import ArrayScenario, mix_seed, sample_covariance, steering, synthesize
from .errors import SeparationError, ThresholdNotFound, UnsupportedMethodError
from .rmt import predict_variance, uncorrelated_variance
from .subspace import (
    default_intervals,
    eig_hermitian,
    eta_gmusic,
    eta_unconditional,
    extract_doas,
    gmusic_spectrum,
    periodogram_spectrum,
    traditional_spectrum,
    unconditional_spectrum,
)

log = logging.getLogger(__name__)

MC_METHODS = ("gmusic", "music", "periodogram", "unconditional")
THRESHOLD_FACTOR = 3.0


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    scenario: ArrayScenario
    snr_db: Tuple[float, ...]
    methods: Tuple[str, ...] = ("gmusic", "music", "periodogram")
    trials: int = 2000
    master_seed: int = 0
    sources: Tuple[int, ...] = (0,)  # DoA indices to estimate; MSE uses the first
    intervals: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in np.atleast_1d(self.snr_db)))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "sources", tuple(int(s) for s in self.sources))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        bad = set(self.methods) - set(MC_METHODS)
        if bad:
            raise UnsupportedMethodError(f"unknown methods {sorted(bad)}")
        if not all(0 <= s < self.scenario.K for s in self.sources):
            raise ValueError("source index out of range")

    def search_intervals(self) -> List[Tuple[float, float]]:
        if self.intervals is not None:
            return [tuple(x) for x in self.intervals]
        sc = self.scenario
        return default_intervals(sc.thetas, sc.M)

    def scenario_at(self, snr_index: int) -> ArrayScenario:
        return self.scenario.at_snr(self.snr_db[snr_index])


@dataclass(frozen=True, eq=False)
class TrialResults:
    plan: ExperimentPlan
    estimates: Dict[str, np.ndarray]  # method -> (n_snr, trials, n_sources)
    failures: Dict[str, np.ndarray]  # method -> (n_snr, trials) bool

    def errors(self, method: str, source_pos: int = 0) -> np.ndarray:
        truth = self.plan.scenario.thetas[self.plan.sources[source_pos]]
        return self.estimates[method][:, :, source_pos] - truth


def _spectrum(method, es, K):
    """Estimator for one trial; G-MUSIC style methods fall back to unit weights
    (traditional MUSIC) on spikes inside the bulk."""
    if method == "music":
        return traditional_spectrum(es, K), False
    if method == "periodogram":
        return periodogram_spectrum(es), False
    if method == "gmusic":
        ps = gmusic_spectrum(es, K, fallback=True)
        return ps, bool(ps.fallback)
    if method == "unconditional":
        try:
            return unconditional_spectrum(es, K), False
        except SeparationError:
            return gmusic_spectrum(es, K, fallback=True), True
    raise UnsupportedMethodError(method)


def run_trial(scenario: ArrayScenario, methods, intervals) -> Dict[str, Tuple[np.ndarray, bool]]:
    """One draw of the scenario; returns ``method -> (estimates, failed)``."""
    snap = synthesize(scenario)
    es = eig_hermitian(sample_covariance(snap), scenario.N, scenario.noise_power)
    out = {}
    for m in methods:
        ps, failed = _spectrum(m, es, scenario.K)
        out[m] = (extract_doas(ps, intervals).thetas, failed)
    return out


def _run_block(args):
    plan, i, t0, t1 = args
    sc = plan.scenario_at(i)
    iv = plan.search_intervals()
    iv = [iv[s] for s in plan.sources]
    est = {m: np.empty((t1 - t0, len(plan.sources))) for m in plan.methods}
    fail = {m: np.zeros(t1 - t0, dtype=bool) for m in plan.methods}
    for j, t in enumerate(range(t0, t1)):
        res = run_trial(sc.replace(seed=mix_seed(plan.master_seed, i, t)), plan.methods, iv)
        for m, (th, f) in res.items():
            est[m][j] = th
            fail[m][j] = f
    return i, t0, t1, est, fail


def default_workers() -> int:
    env = os.environ.get("DOA_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(plan: ExperimentPlan, workers: Optional[int] = None, block: int = 250) -> TrialResults:
    """Run every (SNR, trial) pair of the plan; output is assembled in index order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    n_snr, T, S = len(plan.snr_db), plan.trials, len(plan.sources)
    est = {m: np.empty((n_snr, T, S)) for m in plan.methods}
    fail = {m: np.zeros((n_snr, T), dtype=bool) for m in plan.methods}
    jobs = [(plan, i, t0, min(t0 + block, T)) for i in range(n_snr) for t0 in range(0, T, block)]
    if workers == 1 or len(jobs) == 1:
        results = map(_run_block, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_run_block, jobs)
    for i, t0, t1, e, f in results:
        for m in plan.methods:
            est[m][i, t0:t1] = e[m]
            fail[m][i, t0:t1] = f[m]
    if workers > 1 and len(jobs) > 1:
        pool.shutdown()
    return TrialResults(plan, est, fail)


# -- MSE ----------------------------------------------------------------------

@dataclass(frozen=True)
class MseRecord:
    method: str
    snr_db: float
    mse_emp: float
    mse_theory: float  # nan when no CLT applies
    trials: int
    failures: int
    stderr: float
    mse_theory_uncorrelated: float = float("nan")


def theoretical_mse(method: str, scenario: ArrayScenario, source: int = 0) -> float:
    """Asymptotic MSE ``variance / N^3``; nan where no prediction applies."""
    if method == "periodogram":
        return float("nan")
    clt_method = "gmusic" if method == "unconditional" else method
    try:
        return predict_variance(clt_method, scenario, source).mse(scenario.N)
    except (SeparationError, UnsupportedMethodError, ValueError):
        return float("nan")


def shortcut_mse(scenario: ArrayScenario, source: int = 0) -> float:
    """Uncorrelated widely spaced closed form with ``lambda_k = R_kk``."""
    lam = float(np.real(scenario.source_cov[source, source]))
    s2, c = scenario.noise_power, scenario.c
    if lam <= s2 * np.sqrt(c):
        return float("nan")
    return float(uncorrelated_variance(lam, s2, c)) / scenario.N ** 3


def mse_sweep(plan: ExperimentPlan, results: Optional[TrialResults] = None,
              workers: Optional[int] = None) -> List[MseRecord]:
    """Empirical MSE of the first requested DoA per (method, SNR), with theory attached."""
    if results is None:
        results = run_trials(plan, workers)
    src = plan.sources[0]
    records = []
    for m in plan.methods:
        err2 = results.errors(m) ** 2
        for i, snr in enumerate(plan.snr_db):
            sc = plan.scenario_at(i)
            e = err2[i]
            records.append(MseRecord(
                method=m,
                snr_db=snr,
                mse_emp=float(e.mean()),
                mse_theory=theoretical_mse(m, sc, src),
                trials=plan.trials,
                failures=int(results.failures[m][i].sum()),
                stderr=float(e.std(ddof=1) / np.sqrt(len(e))) if len(e) > 1 else float("nan"),
                mse_theory_uncorrelated=shortcut_mse(sc, src) if m != "periodogram" else float("nan"),
            ))
    return records


def threshold_point(records: Sequence[MseRecord], reference: Optional[Sequence[float]] = None,
                    factor: float = THRESHOLD_FACTOR) -> float:
    """Lowest SNR from which the empirical MSE stays within ``factor`` times the
    theoretical MSE, linearly interpolated (in dB, on the log ratio) between
    the last failing and the first passing grid point.

    ``reference`` overrides the records' own theoretical MSE (needed for
    methods without a CLT in the scenario).
    """
    recs = sorted(records, key=lambda r: r.snr_db)
    snr = np.array([r.snr_db for r in recs])
    emp = np.array([r.mse_emp for r in recs])
    theory = np.array([r.mse_theory for r in recs]) if reference is None else np.asarray(reference, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.log(emp / (factor * theory))
    ok = np.isfinite(ratio) & (ratio <= 0)
    if not ok[-1]:
        raise ThresholdNotFound("MSE never settles within the threshold factor")
    i = len(ok) - 1
    while i > 0 and ok[i - 1]:
        i -= 1
    if i == 0:
        raise ThresholdNotFound("no transition inside the SNR grid")
    r0, r1 = ratio[i - 1], ratio[i]
    if not np.isfinite(r0):
        return float(snr[i])
    return float(snr[i - 1] + (snr[i] - snr[i - 1]) * r0 / (r0 - r1))


# -- Gaussianity ----------------------------------------------------------------

def ks_distance(residuals) -> float:
    """Kolmogorov-Smirnov distance to the standard normal."""
    return float(stats.kstest(np.asarray(residuals, float), "norm").statistic)


@dataclass(frozen=True, eq=False)
class GaussianitySummary:
    method: str
    snr_db: float
    source: int
    scaled_errors: np.ndarray  # N^{3/2} (theta_hat - theta)
    residuals: np.ndarray  # scaled errors / sqrt(theoretical variance)
    variance_theory: float
    variance_sample: float
    ks: float
    excluded: int


def gaussianity_check(plan: ExperimentPlan, method: str, snr_db: float, source: Optional[int] = None,
                      workers: Optional[int] = None, results: Optional[TrialResults] = None) -> GaussianitySummary:
    """Standardized residuals of ``N^{3/2}(theta_hat - theta)`` at one SNR.

    Trials whose estimator hit a separation fallback are excluded and counted.
    """
    if method not in ("gmusic", "music", "unconditional"):
        raise UnsupportedMethodError(f"no CLT for method {method!r}")
    src = plan.sources[0] if source is None else source
    if results is None:
        single = ExperimentPlan(plan.scenario, (snr_db,), (method,), plan.trials, plan.master_seed, (src,),
                                plan.intervals)
        results = run_trials(single, workers)
        i, pos = 0, 0
    else:
        i = plan.snr_db.index(float(snr_db))
        pos = plan.sources.index(src)
    sc = results.plan.scenario_at(i)
    clt_method = "gmusic" if method == "unconditional" else method
    var = predict_variance(clt_method, sc, src).variance
    err = results.errors(method, pos)[i]
    keep = ~results.failures[method][i]
    scaled = sc.N ** 1.5 * err[keep]
    res = scaled / np.sqrt(var)
    return GaussianitySummary(method, float(snr_db), src, scaled, res, float(var),
                              float(np.var(scaled, ddof=1)), ks_distance(res), int((~keep).sum()))


# -- conditional vs unconditional G-MUSIC ------------------------------------

def estimator_gap(scenario: ArrayScenario, trials: int, master_seed: int = 0, source: int = 0) -> np.ndarray:
    """Per-trial ``|eta_u(theta) - eta(theta)|`` at the true DoA ``theta``.

    ``eta`` is the weighted-sum G-MUSIC cost and ``eta_u`` the contour
    (unconditional) estimate of the same quantity. Trials where either
    estimator needs the separation condition and it fails give nan.
    """
    theta = scenario.thetas[source]
    a = steering(theta, scenario.M)
    out = np.full(trials, np.nan)
    for t in range(trials):
        snap = synthesize(scenario.replace(seed=mix_seed(master_seed, 0, t)))
        es = eig_hermitian(sample_covariance(snap), scenario.N, scenario.noise_power)
        try:
            eta = float(eta_gmusic(theta, es, scenario.K))
            eta_u = eta_unconditional(a, a, es, scenario.K)
        except SeparationError:
            continue
        out[t] = abs(eta_u - eta)
    return out
