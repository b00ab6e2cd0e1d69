"""Interpolation vs. bisection when searching for the input budget.

Each probe is a full auction run, so the number of probes is what the
search costs.  Both searches start from the same doubling bracket.
"""
import sys

import numpy as np

from crowdbid import PopulationConfig, binary_search_budget, generate_population, hvm_run, population_instance

sizes = [int(a) for a in sys.argv[1:]] or [100, 200, 400]
rows = []
for k, m in enumerate(sizes):
    auction = population_instance(generate_population(PopulationConfig(bidder_count=m, rng_seed=k)), 5.0)
    out_i, log_i = hvm_run(auction)
    out_b, log_b = binary_search_budget(auction)
    rows.append((m, log_i.bracket_probes, log_i.tvm_evaluations, log_b.tvm_evaluations,
                 out_i.achieved_value, out_b.achieved_value))

print(" bidders  bracket  interp  bisect   value(interp)  value(bisect)")
for m, br, ni, nb, vi, vb in rows:
    print(f"{m:8d} {br:8d} {ni:7d} {nb:7d} {vi:15.4f} {vb:14.4f}")
saved = np.mean([1 - r[2] / r[3] for r in rows])
print(f"\nprobes saved by interpolation: {saved:.1%} on average")
