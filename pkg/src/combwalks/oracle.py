"""Exact n-step transition kernels on truncated graphs.

Everything here is dynamic programming on a finite ball: one step of simple
random walk is the linear map (P^T x)(w) = sum over neighbors v of
x(v)/deg(v), and a walk started at the root cannot leave the radius-R ball
in fewer than R steps, so truncating at R = n_max + 1 gives the exact
distribution for every n <= n_max.  No spectral shortcuts, no approximation;
probabilities are double precision and all exactness claims are stated as
residuals <= 1e-12 per comparison (iterated averaging accumulates rounding
on the order of n ulp).

Two identities from the theory double as self-tests:

  reversibility   p^(2n)(v,v) = sum_w p^(n)(v,w)^2 deg(v)/deg(w)
  loop-around     sum_w p^(i)(v,w) p^(j)(v,w) = p^(i+j)(v,v)   (constant degree)

The reversibility identity is also an optimization: the even-time return
series up to 2K needs only a K-step iteration, which halves the ball radius
and quarters the state count.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graphs import Ball, BudgetError, GraphError, ball, _ball_bfs, DEFAULT_BUDGET

MASS_TOL = 1e-10        # guard on probability conservation during iteration


class OracleError(RuntimeError):
    """Truncation too small for the requested horizon, or mass leaked."""


# ---------------------------------------------------------------------------
# kernel iteration
# ---------------------------------------------------------------------------

class Kernel:
    """Transposed one-step operator on a ball, in CSR form.

    Row i of the matrix gathers mass into vertex i from its in-ball
    neighbors.  Because the ball is indexed level-major, the distribution
    after n steps is supported on the first `ball.interior_size(n)` rows,
    and each step only needs the leading block of rows; the per-step slice
    is a zero-copy view.
    """

    def __init__(self, ball_, release_arcs=False):
        n = ball_.size
        src, dst = ball_.arc_src, ball_.arc_dst
        order = np.argsort(dst, kind="stable")
        indices = np.ascontiguousarray(src[order], dtype=np.int32)
        data = (1.0 / ball_.degrees)[indices]
        counts = np.bincount(dst, minlength=n)
        indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int32)
        del order, counts
        if release_arcs:
            ball_.arc_src = ball_.arc_dst = None
        self.pt = sp.csr_matrix((data, indices, indptr), shape=(n, n))
        self.ball = ball_

    def start_vector(self, index=None):
        vec = np.zeros(self.ball.size)
        vec[self.ball.root_index if index is None else index] = 1.0
        return vec

    def step(self, vec, reach):
        """One step, writing only rows within graph distance `reach`."""
        b = self.ball
        rows = b.interior_size(min(reach, b.radius))
        pt = self.pt
        m = int(pt.indptr[rows])
        sub = sp.csr_matrix(
            (pt.data[:m], pt.indices[:m], pt.indptr[:rows + 1]),
            shape=(rows, pt.shape[1]), copy=False)
        out = np.zeros(b.size)
        out[:rows] = sub @ vec
        return out

    def iterate(self, n_steps, on_step=None, start=None):
        """Run `n_steps` steps from the root, with a mass-conservation guard.

        `on_step(n, vec)` is called after each step; the vector must not be
        mutated by the callback.  Raises OracleError if the ball is too
        small for the horizon or if probability mass is not conserved
        (which would mean leakage across the truncation boundary).
        """
        b = self.ball
        if n_steps > b.radius - 1:
            raise OracleError(
                f"ball radius {b.radius} too small for {n_steps} steps; "
                f"need radius >= n + 1")
        vec = self.start_vector() if start is None else start
        for n in range(1, n_steps + 1):
            vec = self.step(vec, n)
            if n % 64 == 0 or n == n_steps:
                err = abs(vec.sum() - 1.0)
                if err > MASS_TOL:
                    raise OracleError(f"mass leaked at step {n}: |sum-1| = {err:.3e}")
            if on_step is not None:
                on_step(n, vec)
        return vec


# ---------------------------------------------------------------------------
# distributions and series containers
# ---------------------------------------------------------------------------

class SparseDistribution:
    """Exact n-step distribution over a ball's vertex indices."""

    def __init__(self, ball_, n, dense):
        self.ball = ball_
        self.n = n
        self.dense = dense

    def probability(self, vertex):
        idx = self.ball.index_of(vertex)
        return float(self.dense[idx])

    def items(self, eps=0.0):
        out = []
        for i in np.nonzero(self.dense > eps)[0]:
            out.append((self.ball.vertex_of(int(i)), float(self.dense[i])))
        return out

    def validate(self, tol=1e-12):
        d = self.dense
        if d.min() < 0:
            raise OracleError(f"negative mass {d.min():.3e}")
        if abs(d.sum() - 1.0) > tol:
            raise OracleError(f"mass {d.sum()!r} != 1")
        support_reach = self.ball.interior_size(min(self.n, self.ball.radius))
        if np.any(d[support_reach:] != 0.0):
            raise OracleError("support outside graph distance n from root")
        return True


class KernelSeries:
    """A named list of (n, value) pairs from the exact kernel."""

    def __init__(self, name, n, values):
        self.name = name
        self.n = np.asarray(n, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)

    def __len__(self):
        return len(self.n)

    def value_at(self, n):
        hit = np.nonzero(self.n == n)[0]
        if len(hit) == 0:
            raise KeyError(f"no entry at n={n} in series {self.name}")
        return float(self.values[hit[0]])

    def rows(self):
        return list(zip(self.n.tolist(), self.values.tolist()))


# ---------------------------------------------------------------------------
# rooted truncations
# ---------------------------------------------------------------------------

def rooted_ball(graph, root, radius, budget=DEFAULT_BUDGET):
    """Ball around an arbitrary root; closed forms apply at the family root."""
    if root is None or root == graph.root:
        return ball(graph, radius, budget)
    if not graph.contains(root):
        raise GraphError(f"{root!r} is not a vertex of {graph.family}")
    return _ball_bfs(graph, radius, budget, root=root)


def transition_vector(graph, root, n, budget=DEFAULT_BUDGET):
    """Exact n-step distribution of simple random walk from `root`."""
    if n < 0:
        raise OracleError("n must be >= 0")
    b = rooted_ball(graph, root, n + 1, budget)
    kern = Kernel(b)
    vec = kern.iterate(n)
    dist = SparseDistribution(b, n, vec)
    dist.validate()
    return dist


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------

def _step_sliced(pt, vec, rows):
    """One transposed-kernel step restricted to the leading `rows` rows."""
    m = int(pt.indptr[rows])
    sub = sp.csr_matrix(
        (pt.data[:m], pt.indices[:m], pt.indptr[:rows + 1]),
        shape=(rows, pt.shape[1]), copy=False)
    out = np.zeros(pt.shape[0])
    out[:rows] = sub @ vec
    return out


def _grid_octant_series(k_max, every, budget):
    """Return series on Z^2 from the origin via the exact dihedral quotient.

    The eight reflections/rotations of Z^2 fixing the origin act by graph
    automorphisms, so lumping orbits {(x, y): x >= y >= 0} is exact: the
    quotient chain's mass q_o is the walk's probability of the whole orbit.
    The origin orbit is a singleton, giving the diagonal directly, and
    sum_w p(n,w)^2 = sum_o q_o^2 / |o| since p is constant on orbits.
    This is an eightfold state cut; it is cross-checked against the generic
    kernel and the closed-form one-dimensional binomial square in tests.
    """
    from .graphs import _ragged, _budget_check

    R = k_max + 1
    ycol = np.arange(R // 2 + 1, dtype=np.int64)
    counts = R - 2 * ycol + 1
    n_states = int(counts.sum())
    _budget_check(n_states, 4 * n_states, budget, "grid2d octant")
    xs, starts = _ragged(ycol, counts)
    ys = np.repeat(ycol, counts)
    level = (xs + ys).astype(np.int32)
    order = np.lexsort((ys, xs, level))
    xs, ys, level = xs[order], ys[order], level[order]
    offset = np.zeros(R // 2 + 2, dtype=np.int64)
    offset[:len(starts) - 1] = starts[:-1]

    def flat(x, y):
        return offset[y] + (x - y)

    lookup = np.full(n_states, -1, dtype=np.int64)
    lookup[flat(xs, ys)] = np.arange(n_states)

    srcs, dsts = [], []
    for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nx, ny = xs + dx, ys + dy
        a = np.maximum(np.abs(nx), np.abs(ny))
        b = np.minimum(np.abs(nx), np.abs(ny))
        ok = a + b <= R
        srcs.append(lookup[flat(xs[ok], ys[ok])].astype(np.int32))
        dsts.append(lookup[flat(a[ok], b[ok])].astype(np.int32))
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)

    arc_order = np.argsort(dst, kind="stable")
    indices = np.ascontiguousarray(src[arc_order], dtype=np.int32)
    data = np.full(len(indices), 0.25)
    indptr = np.concatenate(
        ([0], np.cumsum(np.bincount(dst, minlength=n_states)))).astype(np.int32)
    pt = sp.csr_matrix((data, indices, indptr), shape=(n_states, n_states))
    del src, dst, srcs, dsts, arc_order

    level_start = np.concatenate(
        ([0], np.cumsum(np.bincount(level, minlength=R + 1)))).astype(np.int64)
    inv_orbit = np.where((xs == 0) & (ys == 0), 1.0,
                         np.where((ys == 0) | (xs == ys), 0.25, 0.125))

    vec = np.zeros(n_states)
    vec[0] = 1.0
    out = np.empty(k_max)
    for k in range(1, k_max + 1):
        vec = _step_sliced(pt, vec, int(level_start[min(k, R) + 1]))
        if k % 64 == 0 or k == k_max:
            err = abs(vec.sum() - 1.0)
            if err > MASS_TOL:
                raise OracleError(f"mass leaked at step {k}: |sum-1| = {err:.3e}")
        if every == "even":
            out[k - 1] = np.dot(vec * vec, inv_orbit)
        else:
            out[k - 1] = vec[0]
    if every == "even":
        return KernelSeries("return", 2 * np.arange(1, k_max + 1), out)
    return KernelSeries("return", np.arange(1, k_max + 1), out)


def return_probability_series(graph, n_max, root=None, every="even",
                              budget=DEFAULT_BUDGET, method="auto"):
    """Exact return probabilities p^(n)(root, root) for n <= n_max.

    every="even" (default) computes the even-time series
    p^(2k)(root,root) for 2k <= n_max through the reversibility identity,
    which needs only a (n_max // 2)-step iteration.  every="all" iterates
    the full horizon and reads the diagonal directly, including odd times
    (zero on bipartite graphs).

    Parameters
    ----------
    graph : Graph
    n_max : int
        Largest time in the series.
    root : vertex tuple, optional
        Defaults to the family root.
    every : "even" | "all"
    budget : int
        Memory budget in bytes for the truncation.

    Returns
    -------
    KernelSeries
    """
    if n_max < 1:
        raise OracleError("n_max must be >= 1")
    if every not in ("even", "all"):
        raise ValueError(f"every must be 'even' or 'all', got {every!r}")
    if (method == "auto" and graph.family == "grid2d"
            and (root is None or root == graph.root)):
        k_max = n_max // 2 if every == "even" else n_max
        if k_max < 1:
            raise OracleError("n_max < 2 has no even entries")
        return _grid_octant_series(k_max, every, budget)
    if every == "even":
        k_max = n_max // 2
        if k_max < 1:
            raise OracleError("n_max < 2 has no even entries")
        b = rooted_ball(graph, root, k_max + 1, budget)
        kern = Kernel(b, release_arcs=True)
        w = b.degrees[b.root_index] / b.degrees
        out = np.empty(k_max)

        def grab(k, vec):
            out[k - 1] = np.dot(vec * vec, w)

        kern.iterate(k_max, on_step=grab)
        return KernelSeries("return", 2 * np.arange(1, k_max + 1), out)
    if every == "all":
        b = rooted_ball(graph, root, n_max + 1, budget)
        kern = Kernel(b, release_arcs=True)
        ridx = b.root_index
        out = np.empty(n_max)

        def grab(n, vec):
            out[n - 1] = vec[ridx]

        kern.iterate(n_max, on_step=grab)
        return KernelSeries("return", np.arange(1, n_max + 1), out)
    raise AssertionError("unreachable")


def meeting_expectation_series(graph, n_max, root=None, budget=DEFAULT_BUDGET):
    """Exact meeting-expectation series for two independent walks from `root`.

    The increment at time n is sum_w p^(n)(root,w)^2, the probability the
    two walks occupy the same vertex at time n; the partial sums over
    1 <= m <= n estimate the expected number of meetings (time 0 excluded,
    matching the sampler's convention).

    Returns
    -------
    (partial, increment) : pair of KernelSeries
    """
    if n_max < 1:
        raise OracleError("n_max must be >= 1")
    b = rooted_ball(graph, root, n_max + 1, budget)
    kern = Kernel(b, release_arcs=True)
    inc = np.empty(n_max)

    def grab(n, vec):
        inc[n - 1] = np.dot(vec, vec)

    kern.iterate(n_max, on_step=grab)
    ns = np.arange(1, n_max + 1)
    return (KernelSeries("meeting_partial", ns, np.cumsum(inc)),
            KernelSeries("meeting_increment", ns, inc))


class PerSiteSeries:
    """max over tooth height L of P[both walks at (., L) at time n], exactly.

    `table[i, j]` is the probability both independent walks sit on the same
    vertex with tooth height `heights[j]` at time `n[i]`; `values` is the
    row-wise maximum (the series the exponent bound applies to).
    """

    def __init__(self, n, heights, table):
        self.n = n
        self.heights = heights
        self.table = table
        self.values = table.max(axis=1)

    def series(self):
        return KernelSeries("persite_max", self.n, self.values)

    def at_height(self, L):
        j = np.nonzero(self.heights == L)[0]
        if len(j) == 0:
            raise KeyError(f"height {L} not in table")
        return self.table[:, j[0]]


def per_site_collision_series(graph, n_max, root=None, budget=DEFAULT_BUDGET):
    """Exact per-tooth-height simultaneous-occupation series on a comb.

    For each n <= n_max and each tooth height L, computes
    sum_v p^(n)(root,(v,L))^2 by an exact kernel iteration; heights are
    signed tooth coordinates (or the Chebyshev annulus radius for Z^2
    teeth).  The sum over base vertices v is exact because the ball is.
    """
    if n_max < 1:
        raise OracleError("n_max must be >= 1")
    b = rooted_ball(graph, root, n_max + 1, budget)
    if b.tooth is not None:
        height_coord = b.tooth
    elif b.annulus is not None:
        height_coord = b.annulus
    else:
        raise GraphError(f"{graph.family} has no teeth; per-site series "
                         "is defined on comb families")
    hmin = int(height_coord.min())
    hid = (height_coord - hmin).astype(np.int64)
    n_heights = int(hid.max()) + 1
    kern = Kernel(b, release_arcs=True)
    table = np.zeros((n_max, n_heights))

    def grab(n, vec):
        table[n - 1] = np.bincount(hid, weights=vec * vec, minlength=n_heights)

    kern.iterate(n_max, on_step=grab)
    heights = np.arange(n_heights, dtype=np.int64) + hmin
    return PerSiteSeries(np.arange(1, n_max + 1), heights, table)


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------

def verify_loop_around(graph, v, i, j, budget=DEFAULT_BUDGET):
    """Residual of sum_w p^(i)(v,w) p^(j)(v,w) = p^(i+j)(v,v).

    Only valid on constant-degree graphs (the identity uses pi(w) constant);
    raises GraphError otherwise.
    """
    if getattr(graph, "constant_degree", None) is None:
        raise GraphError(
            f"loop-around identity needs constant degree; {graph.family} varies")
    if i < 0 or j < 0:
        raise OracleError("i and j must be >= 0")
    b = rooted_ball(graph, v, i + j + 1, budget)
    kern = Kernel(b)
    snaps = {}
    want = {i, j, i + j}

    def grab(n, vec):
        if n in want:
            snaps[n] = vec.copy()

    vec0 = kern.start_vector()
    snaps[0] = vec0
    if i + j > 0:
        kern.iterate(i + j, on_step=grab)
    lhs = float(np.dot(snaps[i], snaps[j]))
    rhs = float(snaps[i + j][b.root_index])
    return abs(lhs - rhs)


def verify_reversibility(graph, v, n, budget=DEFAULT_BUDGET):
    """Residual of p^(2n)(v,v) = sum_w p^(n)(v,w)^2 deg(v)/deg(w)."""
    if n < 0:
        raise OracleError("n must be >= 0")
    b = rooted_ball(graph, v, 2 * n + 1, budget)
    kern = Kernel(b)
    snaps = {}

    def grab(m, vec):
        if m in (n, 2 * n):
            snaps[m] = vec.copy()

    snaps[0] = kern.start_vector()
    if n > 0:
        kern.iterate(2 * n, on_step=grab)
    w = b.degrees[b.root_index] / b.degrees
    lhs = float(np.dot(snaps[n] * snaps[n], w))
    rhs = float(snaps[2 * n][b.root_index])
    return abs(lhs - rhs)


def identity_check_suite(tol=1e-10, budget=DEFAULT_BUDGET):
    """Built-in grid of exact-identity checks; returns (name, residual, pass).

    Loop-around on cycle(5), cycle(6), and the line for every i <= j with
    i + j <= 24; reversibility on star(4), comb(cycle:4), comb(line) for
    n <= 12.  One ball and one iteration pass per graph.
    """
    from .graphs import build_graph

    rows = []

    for spec in ("cycle:5", "cycle:6", "line"):
        g = build_graph(spec)
        b = ball(g, 25, budget)
        kern = Kernel(b)
        snaps = [kern.start_vector()]
        kern.iterate(24, on_step=lambda n, vec: snaps.append(vec.copy()))
        ridx = b.root_index
        for s in range(1, 25):
            for i in range(0, s // 2 + 1):
                j = s - i
                res = abs(float(np.dot(snaps[i], snaps[j])) - float(snaps[s][ridx]))
                rows.append((f"loop-around {spec} i={i} j={j}", res, res <= tol))

    for spec in ("star:4", "comb:cycle:4", "comb:line"):
        g = build_graph(spec)
        b = ball(g, 25, budget)
        kern = Kernel(b)
        snaps = [kern.start_vector()]
        kern.iterate(24, on_step=lambda n, vec: snaps.append(vec.copy()))
        ridx = b.root_index
        w = b.degrees[ridx] / b.degrees
        for n in range(1, 13):
            lhs = float(np.dot(snaps[n] * snaps[n], w))
            rhs = float(snaps[2 * n][ridx])
            res = abs(lhs - rhs)
            rows.append((f"reversibility {spec} n={n}", res, res <= tol))

    return rows
