"""Run every bundled preset through the CLI, writing CSVs (and SVGs) under results/.

    python3 scripts/reproduce_figures.py            # full trial counts
    python3 scripts/reproduce_figures.py --trials 200 --only fig4 fig7
"""
import argparse
import sys
import time

from doa_lab.cli import main
from doa_lab.config import list_presets, load_config


def run(preset: str, out_root: str, trials, threads, svg: bool) -> int:
    cfg = load_config(preset)
    argv = [cfg.command, "--config", preset, "--out", f"{out_root}/{preset}"]
    if trials is not None and cfg.command not in ("kappa", "spikes", "mp-hist"):
        argv += ["--trials", str(trials)]
    if threads is not None:
        argv += ["--threads", str(threads)]
    if svg:
        argv.append("--svg")
    t0 = time.perf_counter()
    code = main(argv)
    print(f"{preset:14s} {cfg.command:22s} exit {code}  {time.perf_counter() - t0:7.1f} s", flush=True)
    return code


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--only", nargs="*", help="preset names (default: all)")
    p.add_argument("--out", default="results")
    p.add_argument("--trials", type=int, default=None, help="override Monte-Carlo trial counts")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-svg", action="store_true")
    return p.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    presets = args.only or list_presets()
    codes = [run(p, args.out, args.trials, args.threads, not args.no_svg) for p in presets]
    sys.exit(max(codes))
