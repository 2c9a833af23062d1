"""Fit BNP-NC, YX and YXU to one simulated data set and plot them.

Usage: python3 demos/compare_models.py [scenario] [out.svg]
"""

import sys

import numpy as np

from nccerf import ModelConfig, Scenario, fit, simulate, true_cerf
from nccerf.svgplot import render


def main():
    sid = int(sys.argv[1]) if len(sys.argv) > 1 else 2
    out = sys.argv[2] if len(sys.argv) > 2 else f"scenario{sid}_compare.svg"
    data = simulate(Scenario(sid, n=2000, seed=11))
    cfg = ModelConfig(iterations=2000, burn_in=1000, seed=11)

    fits = [fit(data, cfg, mode) for mode in ("bnp_nc", "yx", "yxu")]
    grid = fits[0].grid
    truth = true_cerf(sid, grid)
    central = (grid > np.quantile(data.x, 0.1)) & (grid < np.quantile(data.x, 0.9))
    for est in fits:
        rmse = np.sqrt(np.mean((est.median - truth)[central] ** 2))
        lo, hi = est.bands[0.95]
        cov = np.mean(((lo <= truth) & (truth <= hi))[central])
        print(f"{est.label:7s} central RMSE {rmse:6.3f}   95% band coverage {cov:.2f}")

    with open(out, "w") as fh:
        fh.write(render(fits, truth=(grid, truth), title=f"Scenario {sid}"))
    print("wrote", out)


if __name__ == "__main__":
    main()
