"""Command-line front end: ``doa-lab <subcommand> --config PRESET_OR_PATH --out DIR``.

Each subcommand writes CSV tables (the source of truth) and, with ``--svg``,
plots rendered from the same numbers. Exit status is 0 when every output was
written, 2 for usage or config errors and 3 when some outputs failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .array_model import sample_covariance, synthesize
from .config import ConfigError, RunConfig, list_presets, load_config, scenario_from, snr_grid
from .errors import SeparationError, ThresholdNotFound, UnsupportedMethodError
from .monte_carlo import (
    MC_METHODS,
    THRESHOLD_FACTOR,
    ExperimentPlan,
    default_workers,
    estimator_gap,
    gaussianity_check,
    mse_sweep,
    run_trials,
    theoretical_mse,
    threshold_point,
)
from .output import metadata, save_svg, write_csv
from .rmt import (
    SpikeModel,
    TwoSourceModel,
    h_of_spike,
    is_local_max,
    kappa,
    kappa_t,
    mp_cdf,
    mp_density,
    mp_support,
    phi,
    separation_check,
)

log = logging.getLogger("doa_lab")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 2, 3

DEFAULT_CONFIG = {
    "mp-hist": "fig1",
    "mse-sweep": "fig4",
    "kappa": "fig2b",
    "clt-check": "clt",
    "unconditional-compare": "uncond-wide",
    "spikes": "spikes",
}

THRESHOLD_RULE = (f"lowest grid SNR from which mse_emp <= {THRESHOLD_FACTOR:g} x reference for all higher SNRs, "
                  "interpolated on log(mse_emp / reference) in dB")


class Outputs:
    """Runs output subtasks, recording which ones failed instead of aborting."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: List[Path] = []
        self.failed: List[str] = []

    def run(self, name: str, task: Callable[[], object]):
        try:
            res = task()
        except Exception as exc:  # noqa: BLE001 - report and continue
            log.error("%s failed: %s", name, exc)
            self.failed.append(f"{name}: {exc}")
            return None
        if isinstance(res, Path):
            self.written.append(res)
        return res

    def path(self, name: str) -> Path:
        return self.out_dir / name


def _meta(run: RunConfig, seed, c_N, **extra):
    scenario = run.config.section("scenario", required=False)
    if scenario:
        extra.setdefault("sources", scenario.get("sources", "gaussian"))
    return metadata(run.subcommand, run.config.name, run.config.digest, seed, c_N, **extra)


def _methods(values: Sequence[str]) -> tuple:
    out = tuple(values)
    bad = [m for m in out if m not in MC_METHODS]
    if bad:
        raise UnsupportedMethodError(f"unknown method(s) {bad}; choose from {MC_METHODS}")
    return out


# -- mp-hist ------------------------------------------------------------------

def ks_sup_gap(sample: np.ndarray, cdf_values: np.ndarray) -> float:
    """Sup distance between the empirical CDF of sorted ``sample`` and a CDF
    evaluated at the same points."""
    n = len(sample)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf_values), np.max(cdf_values - (i - 1) / n)))


def cmd_mp_hist(run: RunConfig, out: Outputs):
    cfg = run.config
    sc = scenario_from(cfg.section("scenario"))
    seed = run.seed_or(cfg.data.get("seed", sc.seed))
    sc = sc.replace(seed=seed)
    hist = cfg.section("histogram", required=False)
    bins = int(hist.get("bins", 80))
    n_pts = int(hist.get("density_points", 400))

    t0 = time.perf_counter()
    eig = np.linalg.eigvalsh(sample_covariance(synthesize(sc)))[::-1]
    s2, c, K = sc.noise_power, sc.c, sc.K
    bulk = np.sort(eig[K:])
    gap = ks_sup_gap(bulk, mp_cdf(bulk, s2, c))
    pop = np.sort(np.linalg.eigvalsh(sc.source_cov).real)[::-1]
    elapsed = time.perf_counter() - t0
    meta = _meta(run, seed, c, noise_power=s2, cdf_sup_gap_excluding_spikes=gap)
    lo, hi = mp_support(s2, c)
    x = np.linspace(lo, hi, n_pts)
    dens = mp_density(x, s2, c)
    log.info("mp-hist: sup CDF gap %.4f (%.2f s)", gap, elapsed)

    out.run("eigenvalues.csv", lambda: write_csv(
        out.path("eigenvalues.csv"), meta, ["index", "eigenvalue"], enumerate(eig)))
    out.run("mp_density.csv", lambda: write_csv(
        out.path("mp_density.csv"), _meta(run, None, c, noise_power=s2), ["x", "density"], zip(x, dens)))

    def outliers():
        rows = []
        for k, lam in enumerate(pop):
            try:
                pred = float(phi(lam, s2, c))
            except SeparationError:
                pred = float("nan")
            rows.append((k, lam, pred, eig[k], (eig[k] - pred) / pred))
        return write_csv(out.path("outliers.csv"), meta,
                         ["index", "population", "predicted", "observed", "relative_error"], rows)

    out.run("outliers.csv", outliers)
    if run.svg:
        def draw(ax):
            ax.hist(eig, bins=bins, density=True, alpha=0.5, label="sample eigenvalues")
            ax.plot(x, dens, "k-", label="Marchenko-Pastur")
            ax.set_xlabel("eigenvalue")
            ax.legend()
        out.run("mp_hist.svg", lambda: save_svg(out.path("mp_hist.svg"), draw))


# -- mse-sweep ----------------------------------------------------------------

def sweep_plan(cfg, methods=None, trials: Optional[int] = None, seed: Optional[int] = None) -> ExperimentPlan:
    """Experiment plan described by the ``scenario`` and ``sweep`` sections of a config."""
    sc = scenario_from(cfg.section("scenario"))
    sweep = cfg.section("sweep")
    if methods is None:
        methods = _methods(sweep.get("methods", ("gmusic", "music", "periodogram")))
    intervals = sweep.get("intervals")
    return ExperimentPlan(
        scenario=sc,
        snr_db=tuple(snr_grid(sweep.get("snr_db", {"start": -10, "stop": 30, "step": 1}))),
        methods=tuple(methods),
        trials=int(sweep.get("trials", 2000)) if trials is None else trials,
        master_seed=int(cfg.data.get("seed", 0)) if seed is None else seed,
        sources=tuple(sweep.get("sources", (0,))),
        intervals=tuple(tuple(float(v) for v in iv) for iv in intervals) if intervals else None,
    )


def _plan(run: RunConfig, methods=None) -> ExperimentPlan:
    sweep = run.config.section("sweep")
    return sweep_plan(run.config, methods, run.trials_or(sweep.get("trials", 2000)),
                      run.seed_or(run.config.data.get("seed", 0)))


def _mse_rows(records):
    for r in records:
        theory = "" if r.method == "periodogram" else r.mse_theory
        yield (r.method, r.snr_db, r.mse_emp, theory, r.trials, r.failures, r.stderr)


MSE_COLUMNS = ["method", "snr_db", "mse_emp", "mse_theory", "trials", "failures", "stderr"]


def thresholds(plan: ExperimentPlan, records) -> Dict[str, object]:
    """Threshold SNR per method. MUSIC on closely spaced DoAs has no CLT, so
    it is measured against the G-MUSIC prediction."""
    out: Dict[str, object] = {}
    src = plan.sources[0]
    gm_ref = [theoretical_mse("gmusic", plan.scenario_at(i), src) for i in range(len(plan.snr_db))]
    for m in plan.methods:
        recs = [r for r in records if r.method == m]
        if m == "periodogram":
            continue
        own = m != "music" or not plan.scenario.closely_spaced
        try:
            out[m] = (threshold_point(recs) if own else threshold_point(recs, reference=gm_ref),
                      "own" if own else "gmusic")
        except ThresholdNotFound:
            out[m] = ("not-found", "own" if own else "gmusic")
    return out


def _interval_meta(plan: ExperimentPlan) -> str:
    iv = plan.search_intervals()
    return "; ".join(f"[{lo:.17g}, {hi:.17g}]" for lo, hi in (iv[s] for s in plan.sources))


def cmd_mse_sweep(run: RunConfig, out: Outputs):
    plan = _plan(run)
    sc = plan.scenario
    results = run_trials(plan, run.threads)
    records = mse_sweep(plan, results)
    meta = _meta(run, plan.master_seed, sc.c, trials=plan.trials, threshold_rule=THRESHOLD_RULE,
                 intervals=_interval_meta(plan))
    out.run("mse.csv", lambda: write_csv(out.path("mse.csv"), meta, MSE_COLUMNS, _mse_rows(records)))

    def shortcut():
        rows = [(r.snr_db, r.mse_theory, r.mse_theory_uncorrelated) for r in records if r.method == plan.methods[0]]
        return write_csv(out.path("theory.csv"), meta, ["snr_db", "mse_theory", "mse_theory_uncorrelated"], rows)

    out.run("theory.csv", shortcut)
    th = thresholds(plan, records)
    out.run("thresholds.csv", lambda: write_csv(
        out.path("thresholds.csv"), meta, ["method", "threshold_db", "reference"],
        [(m, v, ref) for m, (v, ref) in th.items()]))
    if run.svg:
        out.run("mse.svg", lambda: save_svg(out.path("mse.svg"), lambda ax: _draw_mse(ax, plan, records)))
    return records


def _draw_mse(ax, plan, records):
    for m in plan.methods:
        recs = [r for r in records if r.method == m]
        snr = [r.snr_db for r in recs]
        line, = ax.semilogy(snr, [r.mse_emp for r in recs], "o-", ms=3, label=f"{m} empirical")
        if m != "periodogram":
            ax.semilogy(snr, [r.mse_theory for r in recs], "--", color=line.get_color(), label=f"{m} theory")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("MSE")
    ax.legend(fontsize=7)


# -- kappa --------------------------------------------------------------------

def kappa_table(alpha: float, c: float, sigma2: float, beta_min: float, beta_max: float, points: int):
    """Grid (including 0 and alpha exactly) with kappa and kappa_t columns."""
    model = TwoSourceModel(alpha, c, sigma2)
    beta = np.union1d(np.linspace(beta_min, beta_max, points), [0.0, alpha])
    return model, beta, kappa(beta, model), kappa_t(beta, model)


def cmd_kappa(run: RunConfig, out: Outputs):
    cfg = run.config
    sec = cfg.section("kappa")
    c, s2 = float(sec.get("c", 0.5)), float(sec.get("sigma2", 1.0))
    if ("alpha" in sec) == ("alpha_pi_over_c" in sec):
        raise ConfigError("kappa: give exactly one of alpha, alpha_pi_over_c")
    alpha = float(sec["alpha"]) if "alpha" in sec else float(sec["alpha_pi_over_c"]) * np.pi / c
    b0 = float(sec.get("beta_min", -alpha / 2.0))
    b1 = float(sec.get("beta_max", 1.5 * alpha))
    model, beta, k, kt = kappa_table(alpha, c, s2, b0, b1, int(sec.get("points", 801)))
    sep = separation_check(model)
    f = lambda b: kappa_t(b, model)  # noqa: E731
    resolves = is_local_max(f, 0.0, alpha) and is_local_max(f, alpha, alpha)
    if not sep.ok:
        log.warning("kappa: separation condition violated (|sinc(alpha c/2)| = %.4f > 1 - sigma2 sqrt(c) = %.4f)",
                    model.s, 1.0 - s2 * np.sqrt(c))
    meta = _meta(run, None, c, alpha=alpha, sigma2=s2, sinc_alpha_c_over_2=model.sinc_alpha,
                 separation_condition="holds" if sep.ok else "VIOLATED (formula evaluated regardless)",
                 kappa_t_local_max_at_0_and_alpha="yes" if resolves else "no",
                 marks="0 and alpha rows have mark=theta1 and mark=theta2")
    marks = np.where(beta == 0.0, "theta1", np.where(beta == alpha, "theta2", ""))
    out.run("kappa.csv", lambda: write_csv(out.path("kappa.csv"), meta, ["beta", "kappa", "kappa_t", "mark"],
                                           zip(beta, k, kt, marks)))
    if run.svg:
        def draw(ax):
            ax.plot(beta, k, label="kappa")
            ax.plot(beta, kt, label="kappa_t")
            for b in (0.0, alpha):
                ax.axvline(b, color="grey", lw=0.5)
            ax.set_xlabel("beta")
            ax.legend()
        out.run("kappa.svg", lambda: save_svg(out.path("kappa.svg"), draw))


# -- clt-check ----------------------------------------------------------------

def cmd_clt_check(run: RunConfig, out: Outputs):
    cfg = run.config
    sc = scenario_from(cfg.section("scenario"))
    sec = cfg.section("clt")
    methods = tuple(run.extra.get("methods") or sec.get("methods", ("gmusic", "music")))
    for m in methods:
        if m not in ("gmusic", "music", "unconditional"):
            raise UnsupportedMethodError(f"clt-check: no asymptotic distribution for method {m!r}")
    snr = float(sec.get("snr_db", sc.snr_db))
    src = int(sec.get("source", 0))
    plan = ExperimentPlan(sc, (snr,), _methods(methods), run.trials_or(sec.get("trials", 5000)),
                          run.seed_or(cfg.data.get("seed", 0)), (src,))
    results = run_trials(plan, run.threads)
    summaries = [gaussianity_check(plan, m, snr, src, results=results) for m in methods]
    meta = _meta(run, plan.master_seed, sc.c, snr_db=snr, source=src, trials=plan.trials,
                 intervals=_interval_meta(plan))

    def residuals():
        rows = []
        for s in summaries:
            rows.extend((s.method, t, e, r) for t, (e, r) in enumerate(zip(s.scaled_errors, s.residuals)))
        return write_csv(out.path("residuals.csv"), meta, ["method", "trial", "scaled_error", "residual"], rows)

    def summary():
        rows = [(s.method, s.variance_theory, s.variance_sample, s.variance_sample / s.variance_theory - 1.0,
                 s.ks, s.excluded, plan.trials) for s in summaries]
        return write_csv(out.path("summary.csv"), meta,
                         ["method", "variance_theory", "variance_sample", "relative_error", "ks", "excluded",
                          "trials"], rows)

    out.run("residuals.csv", residuals)
    out.run("summary.csv", summary)
    for s in summaries:
        log.info("clt-check %s: var %.4f (theory %.4f), KS %.4f", s.method, s.variance_sample,
                 s.variance_theory, s.ks)
    if run.svg:
        def draw(ax):
            x = np.linspace(-4, 4, 200)
            for s in summaries:
                ax.hist(s.residuals, bins=60, density=True, histtype="step", label=s.method)
            ax.plot(x, np.exp(-x * x / 2) / np.sqrt(2 * np.pi), "k-", label="N(0, 1)")
            ax.set_xlabel("standardized residual")
            ax.legend()
        out.run("residuals.svg", lambda: save_svg(out.path("residuals.svg"), draw))
    return summaries


# -- unconditional-compare ----------------------------------------------------

def cmd_unconditional_compare(run: RunConfig, out: Outputs):
    cfg = run.config
    scen = cfg.section("scenario")
    plan = _plan(run, ("gmusic", "unconditional"))
    sc = plan.scenario
    meta = _meta(run, plan.master_seed, sc.c, trials=plan.trials, intervals=_interval_meta(plan))

    def mse():
        records = mse_sweep(plan, run_trials(plan, run.threads))
        return write_csv(out.path("mse.csv"), meta, MSE_COLUMNS, _mse_rows(records))

    out.run("mse.csv", mse)

    gap = cfg.section("gap", required=False)
    scales = [int(s) for s in gap.get("scales", (1, 2))]
    g_trials = run.trials_or(gap.get("trials", 200))
    g_snr = float(gap.get("snr_db", 10.0))
    gaps = {}
    for s in scales:
        scaled = scenario_from({**scen, "M": int(scen["M"]) * s, "N": int(scen["N"]) * s}).at_snr(g_snr)
        gaps[(scaled.M, scaled.N)] = estimator_gap(scaled, g_trials, plan.master_seed)
    gmeta = _meta(run, plan.master_seed, sc.c, snr_db=g_snr, trials=g_trials,
                  quantity="|eta_unconditional(theta1) - eta_gmusic(theta1)|")
    out.run("gaps.csv", lambda: write_csv(
        out.path("gaps.csv"), gmeta, ["M", "N", "trial", "gap"],
        [(M, N, t, v) for (M, N), g in gaps.items() for t, v in enumerate(g)]))
    out.run("gap_summary.csv", lambda: write_csv(
        out.path("gap_summary.csv"), gmeta, ["M", "N", "median_gap", "valid_trials"],
        [(M, N, float(np.nanmedian(g)) if np.isfinite(g).any() else float("nan"), int(np.isfinite(g).sum()))
         for (M, N), g in gaps.items()]))
    return gaps


# -- spikes -------------------------------------------------------------------

def spike_rows(model: SpikeModel):
    for lam in model.spikes:
        margin = lam - model.sigma2 * np.sqrt(model.c)
        if margin > 0:
            yield lam, float(phi(lam, model.sigma2, model.c)), float(h_of_spike(lam, model.sigma2, model.c)), True, margin
        else:
            yield lam, float("nan"), float("nan"), False, margin


def cmd_spikes(run: RunConfig, out: Outputs):
    sec = run.config.section("spikes")
    model = SpikeModel(float(sec.get("sigma2", 1.0)), float(sec["c"]), tuple(sec["values"]))
    rows = list(spike_rows(model))
    cols = ["lambda", "phi", "h", "separated", "margin"]
    print("\t".join(cols))
    for r in rows:
        print("\t".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r))
    meta = _meta(run, None, model.c, sigma2=model.sigma2)
    out.run("spikes.csv", lambda: write_csv(out.path("spikes.csv"), meta, cols, rows))


COMMAND_FUNCS = {
    "mp-hist": cmd_mp_hist,
    "mse-sweep": cmd_mse_sweep,
    "kappa": cmd_kappa,
    "clt-check": cmd_clt_check,
    "unconditional-compare": cmd_unconditional_compare,
    "spikes": cmd_spikes,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doa-lab", description="Subspace DoA estimation experiments.")
    p.add_argument("--version", action="version", version=f"doa_lab {__version__}")
    p.add_argument("--list-presets", action="store_true", help="print bundled preset names and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")
    for name in COMMAND_FUNCS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=DEFAULT_CONFIG[name], help="config path or preset name")
        sp.add_argument("--out", default=None, help="output directory (default results/<config>)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $DOA_LAB_THREADS or CPU count)")
        sp.add_argument("--svg", action="store_true", help="also render SVG plots")
        if name == "clt-check":
            sp.add_argument("--method", action="append", dest="methods", help="restrict to method (repeatable)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_presets:
        print("\n".join(list_presets()))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        run = RunConfig(
            subcommand=args.command,
            config=cfg,
            out_dir=Path(args.out) if args.out else Path("results") / cfg.name,
            trials=args.trials,
            seed=args.seed,
            threads=args.threads if args.threads is not None else default_workers(),
            svg=args.svg,
            extra={"methods": getattr(args, "methods", None)},
        )
        out = Outputs(run.out_dir)
        COMMAND_FUNCS[args.command](run, out)
    except (ConfigError, UnsupportedMethodError) as exc:
        print(f"doa-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if out.failed:
        print("doa-lab: some outputs failed:", file=sys.stderr)
        for f in out.failed:
            print(f"  {f}", file=sys.stderr)
        return EXIT_PARTIAL
    for p in out.written:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
