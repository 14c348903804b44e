"""
Dyadic cell statistics for meeting events
=========================================

Bucket every meeting (time N, tooth height L) into dyadic cells
2^r <= N <= 2^{r+1}, 2^k <= |L| <= 2^{k+1} and study the per-cell counts
Z, the hit indicator A = {Z > 0}, and the 6-cell neighbourhood sum W.
A walk needs about n^{1/4} of headroom to put a meeting at height 2^k,
so E[Z] climbs while 2^{r/4} < 2^{k+1} and only afterwards settles into
its 2^{-r/4} decay; rescaling by 2^{r/4 - k} makes the handover visible.
"""

from combwalks import (build_graph, conditional_W, dyadic_collision_stats,
                       kendall_trend, run_ensemble)

g = build_graph("comb:line")
summaries = run_ensemble(g, n_steps=4096, replicas=1500, seed=3)
total = sum(s.meetings for s in summaries)
print(f"{len(summaries)} replicas, {total} meetings recorded\n")

rs = range(2, 12)
grid = dyadic_collision_stats(summaries, rs, range(0, 4))

# scaled column: z_mean * 2^{r/4} / 2^k climbs while the cell is out of
# reach and stops climbing once r >= 4(k+1) (starred rows)
print("  r   k  z_mean   a_prob   scaled")
for k in (1, 2):
    for r in rs:
        c = grid[(r, k)]
        scaled = c.z_mean * 2 ** (r / 4) / 2 ** k
        tag = " *" if r >= 4 * (k + 1) else ""
        print(f"  {r:2d}  {k}  {c.z_mean:7.4f}  {c.a_prob:.4f}  "
              f"{scaled:7.4f}{tag}")
    climb = [(r, grid[(r, k)].z_mean) for r in rs if r < 4 * (k + 1)]
    sat = [(r, grid[(r, k)].z_mean * 2 ** (r / 4) / 2 ** k)
           for r in rs if r >= 4 * (k + 1) and grid[(r, k)].z_mean > 0]
    tau_c = kendall_trend(*zip(*climb))
    if len(sat) >= 2:
        tau_s = kendall_trend(*zip(*sat))
        print(f"  k={k}: raw z_mean trend before the stars {tau_c:+.2f}, "
              f"scaled trend after {tau_s:+.2f} (flat)\n")
    else:
        print(f"  k={k}: no saturated rows before r = {4 * (k + 1)}; "
              "a longer run would be needed\n")

# W | A in one well-populated cell, with a bootstrap standard error
est, se, cond = conditional_W(summaries, (8, 1), seed=3)
print(f"cell (8,1): E[W | A] = {est:.2f} +- {se:.2f} from {cond} replicas")
