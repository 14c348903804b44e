"""
Exact n-step distributions and return probabilities
====================================================

Build a graph from its family string, push the walk's distribution
forward with the sparse kernel, and read off decay exponents.
"""

from combwalks import (build_graph, estimate_exponent,
                       return_probability_series, transition_vector)

# the comb over the line: a copy of Z attached at every integer
g = build_graph("comb:line")
print("graph:", g.family, "root:", g.root, "root degree:", g.degree(g.root))

# the walk's exact law after 6 steps, as (vertex, probability) pairs
dist = transition_vector(g, g.root, 6)
top = sorted(dist.items(), key=lambda vp: -vp[1])[:5]
for v, p in top:
    print(f"  p^(6)(root, {v}) = {p:.6f}")

# return probabilities p^(2k)(root, root); the even-time series comes
# from a half-horizon iteration via the reversibility identity
series = return_probability_series(g, 512)
print("p^(2)(0,0)  =", series.value_at(2))
print("p^(512)(0,0) =", f"{series.value_at(512):.3e}")

# on the comb the diagonal decays like n^(-3/4), against n^(-1/2) on the
# line and n^(-1) on the plane; fit the dyadic tail to see all three
for spec in ("comb:line", "line", "grid2d"):
    s = return_probability_series(build_graph(spec), 512)
    fit = estimate_exponent(s, (64, 512))
    print(f"{spec:10s} log-log slope over [64, 512]: {fit.slope:+.3f}")
