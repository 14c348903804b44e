"""
A transient graph whose walkers still meet infinitely often
===========================================================

The biased ladder is a half-line with 2^n parallel two-step paths
between levels n and n+1.  Watching only spine-to-spine moves, the walk
steps right with probability about 2/3, so it is transient; the widening
bundles still funnel both walkers through the same vertices often enough
that meetings never stop.
"""

from combwalks import (RecordPolicy, build_graph, drift_estimate,
                       meeting_growth_curve, run_ensemble)

g = build_graph("biased-ladder")
print("spine degrees:", [g.degree((0, n, 0)) for n in range(6)])

# sample the last-visited spine level every 2 steps to expose the drift
record = RecordPolicy(spine_stride=2)
out = run_ensemble(g, n_steps=10_000, replicas=300, seed=2, record=record)
est = drift_estimate(out)
print(f"net rightward bias per spine move: {est.per_move:+.4f} "
      f"({est.moves} moves; the jump chain gives +1/3)")

# meetings keep accumulating at every scale, unlike on the comb
out = run_ensemble(g, n_steps=2 ** 15, replicas=300, seed=2)
curve = meeting_growth_curve(out)
print("\n      t   mean meetings   still-meeting fraction")
for t, m, s in zip(curve.times, curve.mean_meetings, curve.survival_frac):
    if t >= 2 ** 9:
        print(f"{t:>7d}   {m:13.2f}   {s:22.3f}")
ratio = curve.mean_meetings[-1] / curve.mean_meetings[-2]
print(f"\nfinal/half-time mean ratio: {ratio:.3f} (keeps growing)")
