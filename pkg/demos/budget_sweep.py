"""How much of the optimum do the mechanisms reach as the budget grows?

Twenty simulated drivers on a 20x20 grid, 30 repetitions per budget.  The
optimum is found by enumeration, so POV (value over optimum) is exact.
Prints a small table and writes the full CSV next to this script.

    python demos/budget_sweep.py [repetitions]
"""
import sys
from pathlib import Path

from crowdbid import ExperimentConfig, PopulationConfig, run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 30
cfg = ExperimentConfig(
    population=PopulationConfig(bidder_count=20),
    sweep="budget",
    points=(1.0, 2.0, 4.0, 8.0, 16.0),
    mechanisms=("tvm", "hvm", "random"),
    repetitions=reps,
)


def show(done, total):
    if done % 25 == 0 or done == total:
        print(f"\r  {done}/{total} cells", end="", file=sys.stderr, flush=True)


report = run_experiment(cfg, progress=show)
print(file=sys.stderr)

print(f"{'budget':>7} " + " ".join(f"{m:>16}" for m in cfg.mechanisms))
for x in cfg.points:
    cells = []
    for m in cfg.mechanisms:
        r = report.row(m, x)
        cells.append(f"{r.pov_mean:.3f} +- {r.pov_ci95:.3f}" if r.pov_mean is not None else "n/a")
    print(f"{x:7.1f} " + " ".join(f"{c:>16}" for c in cells))

out = Path(__file__).with_name("budget_sweep.csv")
out.write_text(report.to_csv())
print(f"\nfull table: {out}")
