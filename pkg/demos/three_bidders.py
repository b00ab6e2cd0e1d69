"""Walk through one small auction by hand.

Three drivers bid for four street blocks observed at a single time.  The
script prints what the truthful mechanism looks at in each round, what the
single winner is paid and why, what the budget search adds on top, and
how far both are from the best subset money could buy.

    python demos/three_bidders.py
"""
from crowdbid import hvm_run, make_instance, tvm_allocate, tvm_run
from crowdbid.oracle import brute_force_optimal, subset_value

values = [0.3, 0.2, 0.1, 0.4]
profiles = [
    [0.2, 0.1, 0.3, 0.4],
    [0.0, 0.8, 0.05, 0.15],
    [0.4, 0.2, 0.0, 0.4],
]
bids = [10.0, 8.0, 12.0]
auction = make_instance(values, profiles, bids, budget=20.0, true_costs=bids)

print("stand-alone value of each driver")
for pid in auction.ids.tolist():
    v = subset_value(auction, [pid])
    print(f"  {pid}: value {v:.4f}, bid {auction.bid_of(pid).bid:5.1f}, value per unit {v / auction.bid_of(pid).bid:.5f}")

trace = tvm_allocate(auction)
print("\norder in which drivers were considered")
for c in trace.considered_order:
    verdict = "accepted" if c.accepted else "dropped"
    print(f"  {c.participant_id}: marginal {c.marginal:.4f}  ratio {c.ratio:.5f}  {verdict}")

# Driver 2 goes first.  Once it is in, driver 1 asks 10 for 0.2285 of extra
# value, but half the budget split by value share only allows
# 10 * 0.2285 / (0.225 + 0.2285) = 5.04.  Driver 3 fails the same way.
out = tvm_run(auction)
print(f"\nwinners {out.winners}, value {out.achieved_value:.4f}")
for pid, r in out.rewards.items():
    print(f"  driver {pid} bid {auction.bid_of(pid).bid} and is paid {r:.4f}")
print(f"  spent {out.payments_total:.4f} of {auction.budget}")

best, log = hvm_run(auction)
print(f"\nbudget search: {log.tvm_evaluations} runs, status {log.status}")
for b, p in log.probes:
    print(f"  input budget {b:10.4f} -> payments {p:8.4f}")
print(f"  kept input budget {log.b_star}, winners {best.winners}, value {best.achieved_value:.4f}")

opt = brute_force_optimal(auction)
print(f"\nbest affordable subset {list(opt.subset)} with value {opt.opt_value:.4f}")
print(f"  largest single driver holds {opt.lambda_:.1%} of it, so the guarantee is empty here")
