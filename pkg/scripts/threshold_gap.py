"""Closely spaced threshold analysis for the fig7 / fig8 presets.

Prints, per SNR, the G-MUSIC prediction, both empirical MSEs and their ratios
to the prediction, then the threshold points under the 3x rule. A second
table gives the asymptotic picture: the SNR above which the separation
condition holds and the SNR above which kappa_t shows two separate peaks (that
is, where MUSIC resolves the pair in the large-array limit).

    python3 scripts/threshold_gap.py --preset fig7 --trials 500
"""
import argparse

import numpy as np


from doa_lab.cli import sweep_plan, thresholds
from doa_lab.config import load_config
from doa_lab.monte_carlo import mse_sweep
from doa_lab.rmt import TwoSourceModel, music_resolves, separation_check


def asymptotic_snr(alpha: float, c: float, grid=np.arange(0.0, 60.0, 0.25)):
    sep = res = None
    for snr in grid:
        model = TwoSourceModel(alpha, c, 10.0 ** (-snr / 10.0))
        if sep is None and separation_check(model).ok:
            sep = snr
        if res is None and sep is not None:
            if music_resolves(model):
                res = snr
    return sep, res


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--preset", default="fig7")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args(argv)

    plan = sweep_plan(load_config(args.preset), methods=("gmusic", "music"), trials=args.trials)
    recs = mse_sweep(plan, workers=args.threads)
    g = [r for r in recs if r.method == "gmusic"]
    m = [r for r in recs if r.method == "music"]
    print(f"{'snr':>5} {'theory':>10} {'gmusic':>10} {'music':>10} {'g/th':>6} {'m/th':>6} {'fallback':>8}")
    for a, b in zip(g, m):
        print(f"{a.snr_db:5.1f} {a.mse_theory:10.3e} {a.mse_emp:10.3e} {b.mse_emp:10.3e} "
              f"{a.mse_emp / a.mse_theory:6.2f} {b.mse_emp / a.mse_theory:6.2f} {a.failures:8d}")
    th = thresholds(plan, recs)
    print("thresholds:", {k: v for k, v in th.items()})

    sc = plan.scenario
    alpha = sc.N * (sc.thetas[1] - sc.thetas[0])
    sep, res = asymptotic_snr(alpha, sc.c)
    print(f"alpha = {alpha:.4f}, c = {sc.c:g}: separation from {sep} dB, "
          f"kappa_t shows two peaks from {res} dB")


if __name__ == "__main__":
    main()
