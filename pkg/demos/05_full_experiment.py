"""End-to-end run on the bundled toy dataset.

Writes the toy bundle into ./toy_run/, evaluates the smoothing grid,
then compares cloze against LM probabilities as reading-time predictors
with ten-fold cross-validation. Equivalent CLI:

    wordpred make-toy --out-dir toy_run/bundle
    wordpred grid --stimuli ... --out-dir toy_run/grid
    wordpred exp1 --stimuli ... --toy-seed 0 --out-dir toy_run/exp1
"""

from pathlib import Path

import numpy as np

from wordpred.experiments import ExperimentConfig, run_exp1, run_grid
from wordpred.toydata import make_toy_bundle

root = Path("toy_run")
bundle = make_toy_bundle(root / "bundle", seed=0)
print("toy bundle written:")
for name, path in sorted(bundle.items()):
    print(f"  {name:10s} {path}")

config = ExperimentConfig(
    stimuli=bundle["stimuli"],
    rt=bundle["rt"],
    measure="SPR",
    out_dir=root / "grid",
    cloze=bundle["cloze"],
    freq=bundle["freq"],
    toy_seed=0,
)

grid_report = run_grid(config)
s, best_transform, gain = grid_report.grid.best_cell()
print(f"\nsmoothing grid best cell: S={s}, {best_transform.label}, gain={gain:.2f} nats")

exp1 = run_exp1(
    ExperimentConfig(
        stimuli=bundle["stimuli"],
        rt=bundle["rt"],
        measure="SPR",
        out_dir=root / "exp1",
        cloze=bundle["cloze"],
        freq=bundle["freq"],
        toy_seed=0,
    )
)
print("\ncloze vs LM comparison (SPR):")
for label, gains in exp1.comparison.fold_gains.items():
    print(f"  {label:6s} mean gain {np.mean(gains):+.4f} nats/obs (sem {exp1.comparison.sems[label]:.4f})")
for key, p in exp1.comparison.p_values.items():
    adj = exp1.comparison.p_adjusted[key]
    print(f"  {key}: p={p:.4f}, Bonferroni-adjusted {adj:.4f}")
name, r, lo, hi = exp1.correlations[0]
print(f"  corr(cloze, {name}) = {r:.3f}  [{lo:.3f}, {hi:.3f}]")
print(f"\noutputs in {root}/exp1: report.csv, summary.csv, chart.svg, provenance.txt")
