"""Collision statistics over ensemble output.

The sampler's summaries carry every meeting event as (time N, height L).
This module reduces them to the dyadic cell counts the bound-checking
workflow needs: for a cell (r, k) write n = 2^r and l = 2^k, and per
replica

    Z[r,k]  = number of records with n <= N <= 2n and l <= |L| <= 2l,
    A[r,k]  = 1 if Z[r,k] > 0,
    W[r,k]  = sum of Z over the six cells {r, r+1} x {k-1, k, k+1}.

Cell boundaries are closed on both ends, so a record sitting exactly on a
power of two counts in both adjacent cells; that is deliberate and only
inflates bound checks, never deflates them.  Negative heights fold into
positive cells by absolute value.  Plane teeth store the annulus radius
max(|x|, |y|) in the same height slot, so the identical bucketing applies.

Cells with l < 2 have no meaningful W (their inner shell l/2 is not a
power of two); they carry raw Z and A only.  Height-0 records (backbone
meetings) fall in no cell at all.

Everything here is a pure function of the summary list; estimates do not
depend on replica order or on how the ensemble was sharded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy import stats as _sps


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# dyadic cells
# ---------------------------------------------------------------------------

@dataclass
class DyadicCellStats:
    """Monte-Carlo estimates for one dyadic cell (r, k)."""

    r: int
    k: int
    z_mean: float
    a_prob: float
    w_mean: float          # nan when the cell has no W (k < 1)
    w_given_a: float       # nan when no replica conditions
    count: int
    cond_count: int
    z: np.ndarray = field(repr=False, default=None)
    w: np.ndarray = field(repr=False, default=None)


def _gather_records(summaries):
    """All meeting events as flat arrays (replica row, time, |height|)."""
    rows, ns, ls = [], [], []
    for i, s in enumerate(summaries):
        for rec in s.collisions:
            rows.append(i)
            ns.append(rec.n)
            ls.append(abs(rec.l))
    return (np.array(rows, dtype=np.int64),
            np.array(ns, dtype=np.int64),
            np.array(ls, dtype=np.int64))


def _cell_z(rows, ns, ls, n_rep, r, k):
    lo_n, hi_n = 1 << r, 1 << (r + 1)
    lo_l, hi_l = 1 << k, 1 << (k + 1)
    m = (ns >= lo_n) & (ns <= hi_n) & (ls >= lo_l) & (ls <= hi_l)
    return np.bincount(rows[m], minlength=n_rep)


def dyadic_collision_stats(summaries, r_range, k_range):
    """Grid of DyadicCellStats over r in r_range, k in k_range.

    Z is counted directly; W is assembled from the Z values of the six
    surrounding cells, which means Z is internally computed on the grid
    extended by one in r and one in k on each side.
    """
    r_range = sorted(set(int(r) for r in r_range))
    k_range = sorted(set(int(k) for k in k_range))
    if not r_range or not k_range:
        raise StatsError("empty cell ranges")
    if min(k_range) < 0:
        raise StatsError("height cells start at k = 0")
    n_rep = len(summaries)
    rows, ns, ls = _gather_records(summaries)

    need_r = set(r_range) | {r + 1 for r in r_range}
    need_k = set()
    for k in k_range:
        need_k.add(k)
        if k >= 1:
            need_k.update((k - 1, k + 1))
    z = {(r, k): _cell_z(rows, ns, ls, n_rep, r, k)
         for r in need_r for k in need_k}

    grid = {}
    for r in r_range:
        for k in k_range:
            zc = z[(r, k)]
            if k >= 1:
                w = sum(z[(rr, kk)] for rr in (r, r + 1)
                        for kk in (k - 1, k, k + 1))
                w_mean = float(w.mean())
            else:
                w = None
                w_mean = math.nan
            a = zc > 0
            cond = int(a.sum())
            if w is not None and cond:
                wga = float(w[a].mean())
            else:
                wga = math.nan
            grid[(r, k)] = DyadicCellStats(
                r=r, k=k,
                z_mean=float(zc.mean()),
                a_prob=float(a.mean()),
                w_mean=w_mean,
                w_given_a=wga,
                count=n_rep,
                cond_count=cond,
                z=zc,
                w=w,
            )
    return grid


def conditional_W(summaries, cell, n_boot=1000, seed=0):
    """Ê[W | A] for one cell with a bootstrap standard error.

    Returns (estimate, standard error, conditioning count).  The bootstrap
    reseeds deterministically from (seed, cell), so repeated runs with the
    same inputs give identical output.  Cells conditioning on fewer than
    30 replicas are reported, not rejected; the caller decides.
    """
    r, k = cell
    if k < 1:
        raise StatsError(f"cell k={k} carries no W")
    grid = dyadic_collision_stats(summaries, [r], [k])
    st = grid[(r, k)]
    if st.cond_count == 0:
        raise StatsError(f"no replica satisfies A in cell {cell}")
    w_cond = st.w[st.z > 0].astype(np.float64)
    gen = Generator(Philox(SeedSequence(entropy=seed, spawn_key=(r, k))))
    idx = gen.integers(0, len(w_cond), size=(n_boot, len(w_cond)))
    se = float(w_cond[idx].mean(axis=1).std(ddof=1))
    return float(w_cond.mean()), se, st.cond_count


# ---------------------------------------------------------------------------
# exponent fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    n_lo: int
    n_hi: int
    points: int


def _series_rows(series):
    if hasattr(series, "rows"):
        return list(series.rows())
    return [(int(n), float(v)) for n, v in series]


def estimate_exponent(series, fit_range):
    """Least-squares power-law exponent over dyadic points of a series.

    Fits log2(value) against log2(n) using only n that are powers of two
    inside [n_lo, n_hi].  Needs at least three such points, all positive.
    """
    n_lo, n_hi = fit_range
    pts = [(n, v) for n, v in _series_rows(series)
           if n_lo <= n <= n_hi and (n & (n - 1)) == 0 and n > 0]
    if len(pts) < 3:
        raise StatsError(f"need >= 3 dyadic points in [{n_lo}, {n_hi}], "
                         f"got {len(pts)}")
    if any(v <= 0 for _, v in pts):
        raise StatsError("power-law fit needs positive values")
    x = np.log2([n for n, _ in pts])
    y = np.log2([v for _, v in pts])
    res = _sps.linregress(x, y)
    return ExponentFit(slope=float(res.slope), intercept=float(res.intercept),
                       stderr=float(res.stderr), n_lo=n_lo, n_hi=n_hi,
                       points=len(pts))


def kendall_trend(xs, ys):
    """Kendall tau of ys against xs; nan when fewer than two points."""
    if len(xs) < 2:
        return math.nan
    tau = _sps.kendalltau(xs, ys).statistic
    return float(tau)


# ---------------------------------------------------------------------------
# growth curves and drift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthCurve:
    times: tuple
    mean_meetings: tuple
    survival_frac: tuple      # fraction of replicas with a meeting after t


def meeting_growth_curve(summaries, checkpoints=None):
    """Mean meetings and post-t survival fraction on a checkpoint grid.

    The grid defaults to the one stored in the summaries; an explicit grid
    must be a subset of it.  Survival uses the full collision lists.
    """
    if not summaries:
        raise StatsError("no summaries")
    have = [t for t, _ in summaries[0].checkpoints]
    if checkpoints is None:
        checkpoints = have
    missing = [t for t in checkpoints if t not in have]
    if missing:
        raise StatsError(f"checkpoints {missing} not recorded")
    last = np.array([s.collisions[-1].n if s.collisions else 0
                     for s in summaries], dtype=np.int64)
    means, surv = [], []
    for t in checkpoints:
        ms = [dict(s.checkpoints)[t] for s in summaries]
        means.append(float(np.mean(ms)))
        surv.append(float(np.mean(last > t)))
    return GrowthCurve(tuple(checkpoints), tuple(means), tuple(surv))


def meeting_growth_curves(per_graph, checkpoints=None):
    """meeting_growth_curve for each named ensemble in a dict."""
    return {name: meeting_growth_curve(sums, checkpoints)
            for name, sums in per_graph.items()}


@dataclass(frozen=True)
class DriftEstimate:
    """Spine drift of the ladder walk.

    ``per_move`` is the net bias of moves between distinct spine vertices,
    sum of signed jumps over sum of absolute jumps; this is the statistic
    that converges to the jump chain's 2/3 - 1/3 = 1/3.  ``per_half_step``
    is the least-squares slope of mean position against n/2; a move between
    spine vertices happens only about every other two-step window, so this
    reads roughly half the per-move bias.
    """

    per_move: float
    per_half_step: float
    moves: int


def drift_estimate(summaries):
    """Estimate the rightward spine drift from recorded spine traces."""
    num = 0
    den = 0
    acc = None
    stride = None
    for s in summaries:
        spine = s.extras.get("spine")
        if spine is None:
            raise StatsError("summaries carry no spine traces")
        if stride is None:
            stride = spine["stride"]
            acc = np.zeros(len(spine["x"]), dtype=np.float64)
            n_tr = 0
        for wkey in ("x", "y"):
            tr = np.asarray(spine[wkey], dtype=np.int64)
            d = np.diff(tr)
            num += int(d.sum())
            den += int(np.abs(d).sum())
            acc += tr
            n_tr += 1
    if den == 0:
        raise StatsError("no spine moves recorded")
    mean_pos = acc / n_tr
    half_steps = np.arange(len(mean_pos), dtype=np.float64) * stride / 2.0
    res = _sps.linregress(half_steps, mean_pos)
    return DriftEstimate(per_move=num / den,
                         per_half_step=float(res.slope),
                         moves=den)


# ---------------------------------------------------------------------------
# envelope violations
# ---------------------------------------------------------------------------

def lil_threshold(n, alpha):
    """Envelope 2 (2n)^(1/(2 alpha)) for the tooth coordinate."""
    return 2.0 * (2.0 * n) ** (1.0 / (2.0 * alpha))


def lil_envelope_check(summaries, alpha):
    """Violation counts of |tooth| > 2(2n)^(1/(2 alpha)) per replica.

    The sampler records violation times during the run; this collects the
    list matching ``alpha`` and reports per-replica counts and the last
    violation time (0 when none).  alpha must lie in (0, 1); the envelope
    argument needs alpha > 2/3 to sum, which is the caller's business.
    """
    if not 0.0 < alpha < 1.0:
        raise StatsError("alpha must be in (0, 1)")
    counts, last = [], []
    for s in summaries:
        lil = s.extras.get("lil")
        if lil is None:
            raise StatsError("summaries carry no envelope records")
        try:
            ai = lil["alphas"].index(alpha)
        except ValueError:
            raise StatsError(f"alpha={alpha} was not recorded "
                             f"(have {lil['alphas']})") from None
        times = lil["times"][ai]
        counts.append(len(times))
        last.append(times[-1] if times else 0)
    return np.array(counts, dtype=np.int64), np.array(last, dtype=np.int64)
