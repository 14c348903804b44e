"""Monte-Carlo samplers for one or two independent walks on the comb family.

Three constructions produce the same walk law on a comb:

* direct      -- pick a uniform neighbour each step;
* selfloop    -- split the walk at a spine vertex into a lazy tooth walk
                 (self-loop probability d/(d+2) at height 0) plus a base walk
                 advanced once per self-loop event; the pair (base position
                 at the loop count, tooth height) is the walk;
* clock       -- run the undelayed tooth walk first and re-insert geometric
                 holding times at every visit to height 0, then read the
                 delayed path off the two sequences.

The direct construction works on every family; the other two only on combs
whose base has constant degree, and exist so their bookkeeping quantities
(loop counts, revisit counts, holding-time sums) can be checked against the
direct law.

Everything is driven by the keyed Philox streams in :mod:`.rng`.  Draws are
chunked in fixed blocks of ``CHUNK`` per stream, and every stream consumes a
fixed number of values per step whether or not the step uses them, so a
replica's trajectory never depends on how replicas are grouped into worker
processes.  ``run_ensemble`` therefore emits byte-identical JSONL for any
worker count.

Walker state lives in integer numpy arrays, one column per walker; the two
walkers of ``replicas`` pairs run stacked in a single width ``2*replicas``
block.  Meetings are detected by comparing the halves.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graphs import (BiasedLadder, Comb, Comb2, Cycle, Graph, GraphError,
                     Grid2D, Line, PathTwo, Star, build_graph)
from .rng import (RngStream, X_BASE, X_MAIN, X_SKEL, X_TOOTH, Y_MAIN,
                  Y_SKEL, Y_TOOTH)

CHUNK = 4096
_LEVEL_BITS = 62          # midpoint identities use the low 62 bits


class SimulationError(RuntimeError):
    """A walk left the region the run was told to stay inside."""


# ---------------------------------------------------------------------------
# record types
# ---------------------------------------------------------------------------

def dyadic_checkpoints(n_steps):
    """Powers of two up to n_steps, plus n_steps itself."""
    if n_steps < 1:
        return ()
    ts = {1 << j for j in range(n_steps.bit_length()) if (1 << j) <= n_steps}
    ts.add(n_steps)
    return tuple(sorted(ts))


@dataclass(frozen=True)
class RecordPolicy:
    """What to keep besides meetings: checkpoint grid, envelope-violation
    times for each exponent alpha, and (ladder only) the last-visited spine
    position every ``spine_stride`` steps."""

    checkpoints: tuple = ()
    lil_alphas: tuple = ()
    spine_stride: int = 0

    def resolved_checkpoints(self, n_steps):
        if self.checkpoints:
            ts = tuple(int(t) for t in self.checkpoints if 0 < t <= n_steps)
            if list(ts) != sorted(set(ts)):
                raise ValueError("checkpoints must be strictly increasing")
            return ts
        return dyadic_checkpoints(n_steps)


@dataclass(frozen=True)
class CollisionRecord:
    """One meeting event of the pair."""

    replica: int
    n: int
    vertex: tuple
    l: int

    def to_dict(self):
        return {"n": self.n, "vertex": list(self.vertex), "l": self.l}


@dataclass
class PairTrajectorySummary:
    replica: int
    n_steps: int
    meetings: int
    collisions: list
    checkpoints: list          # [(t, meetings up to t)]
    final_x: tuple
    final_y: tuple
    max_tooth_x: int
    max_tooth_y: int
    method: str = "direct"
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "replica": self.replica,
            "T": self.n_steps,
            "meetings": self.meetings,
            "collisions": [c.to_dict() for c in self.collisions],
            "checkpoints": [{"t": t, "meetings": m} for t, m in self.checkpoints],
            "final": {"x": list(self.final_x), "y": list(self.final_y)},
            "max_tooth": {"x": self.max_tooth_x, "y": self.max_tooth_y},
            "method": self.method,
        }
        d.update(self.extras)
        return d

    @classmethod
    def from_dict(cls, d):
        extras = {k: v for k, v in d.items()
                  if k not in ("replica", "T", "meetings", "collisions",
                               "checkpoints", "final", "max_tooth", "method")}
        return cls(
            replica=d["replica"],
            n_steps=d["T"],
            meetings=d["meetings"],
            collisions=[CollisionRecord(d["replica"], c["n"],
                                        tuple(c["vertex"]), c["l"])
                        for c in d["collisions"]],
            checkpoints=[(c["t"], c["meetings"]) for c in d["checkpoints"]],
            final_x=tuple(d["final"]["x"]),
            final_y=tuple(d["final"]["y"]),
            max_tooth_x=d["max_tooth"]["x"],
            max_tooth_y=d["max_tooth"]["y"],
            method=d.get("method", "direct"),
            extras=extras,
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))


def write_summaries(path, summaries):
    with open(path, "w") as fh:
        for s in summaries:
            fh.write(s.to_json() + "\n")


def read_summaries(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PairTrajectorySummary.from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# per-family step kernels
#
# A kernel holds the coordinates of `width` independent walkers as int64
# column arrays and advances them all one step from a vector of uniforms.
# `channels` is the number of uniform streams consumed per step (the lazy
# construction needs two); `needs_raw` asks for one extra 62-bit integer
# per step (midpoint identities on the ladder).  Draws are consumed every
# step even when a walker's branch ignores them.
# ---------------------------------------------------------------------------

class _KernelBase:
    channels = 1
    needs_raw = False
    tracks_depth = False

    def positions(self):
        raise NotImplementedError

    def vertex(self, col):
        return tuple(int(a[col]) for a in self.positions())

    def height(self):
        return None

    def depth(self):
        return None

    def distance(self):
        raise NotImplementedError


def _sign(u):
    return np.where(u < 0.5, -1, 1)


class _LineKernel(_KernelBase):
    def __init__(self, graph, start, width):
        self.x = np.full(width, start[0], dtype=np.int64)

    def step(self, us, raw=None):
        self.x += _sign(us[0])

    def positions(self):
        return (self.x,)

    def distance(self):
        return np.abs(self.x)


class _CycleKernel(_KernelBase):
    def __init__(self, graph, start, width):
        self.m = graph.m
        self.x = np.full(width, start[0], dtype=np.int64)

    def step(self, us, raw=None):
        self.x = (self.x + _sign(us[0])) % self.m

    def positions(self):
        return (self.x,)

    def distance(self):
        return np.minimum(self.x, self.m - self.x)


class _PathTwoKernel(_KernelBase):
    def __init__(self, graph, start, width):
        self.x = np.full(width, start[0], dtype=np.int64)

    def step(self, us, raw=None):
        self.x = 1 - self.x

    def positions(self):
        return (self.x,)

    def distance(self):
        return self.x.copy()


class _StarKernel(_KernelBase):
    def __init__(self, graph, start, width):
        self.k = graph.k
        self.x = np.full(width, start[0], dtype=np.int64)

    def step(self, us, raw=None):
        leaf = 1 + (us[0] * self.k).astype(np.int64)
        self.x = np.where(self.x == 0, leaf, 0)

    def positions(self):
        return (self.x,)

    def distance(self):
        return (self.x != 0).astype(np.int64)


class _Grid2DKernel(_KernelBase):
    def __init__(self, graph, start, width):
        self.x = np.full(width, start[0], dtype=np.int64)
        self.y = np.full(width, start[1], dtype=np.int64)

    def step(self, us, raw=None):
        c = (us[0] * 4).astype(np.int64)
        self.x += (c == 1).astype(np.int64) - (c == 0)
        self.y += (c == 3).astype(np.int64) - (c == 2)

    def positions(self):
        return (self.x, self.y)

    def distance(self):
        return np.abs(self.x) + np.abs(self.y)


class _CombKernel(_KernelBase):
    """Comb over a degree-2 base (line or cycle of length >= 3)."""

    tracks_depth = True

    def __init__(self, graph, start, width):
        self.m = graph.base.m if isinstance(graph.base, Cycle) else 0
        self.b = np.full(width, start[0], dtype=np.int64)
        self.t = np.full(width, start[1], dtype=np.int64)

    def step(self, us, raw=None):
        u = us[0]
        spine = self.t == 0
        c = (u * 4).astype(np.int64)
        db = np.where(spine, (c == 1).astype(np.int64) - (c == 0), 0)
        dt = np.where(spine, (c == 3).astype(np.int64) - (c == 2), _sign(u))
        self.b += db
        if self.m:
            self.b %= self.m
        self.t += dt

    def positions(self):
        return (self.b, self.t)

    def height(self):
        return self.t

    def depth(self):
        return np.abs(self.t)

    def distance(self):
        base = np.minimum(self.b, self.m - self.b) if self.m else np.abs(self.b)
        return base + np.abs(self.t)


class _CombPathTwoKernel(_KernelBase):
    """Comb over the single edge: spine vertices have degree 3."""

    tracks_depth = True

    def __init__(self, graph, start, width):
        self.b = np.full(width, start[0], dtype=np.int64)
        self.t = np.full(width, start[1], dtype=np.int64)

    def step(self, us, raw=None):
        u = us[0]
        spine = self.t == 0
        c = (u * 3).astype(np.int64)       # 0: cross base edge, 1: t-1, 2: t+1
        self.b = np.where(spine & (c == 0), 1 - self.b, self.b)
        dt = np.where(spine, (c == 2).astype(np.int64) - (c == 1), _sign(u))
        self.t += dt

    def positions(self):
        return (self.b, self.t)

    def height(self):
        return self.t

    def depth(self):
        return np.abs(self.t)

    def distance(self):
        return self.b + np.abs(self.t)


class _Comb2Kernel(_KernelBase):
    """Comb with a plane at every base vertex; plane moves exist everywhere,
    base moves only at the plane origin."""

    tracks_depth = True

    def __init__(self, graph, start, width):
        base = graph.base
        self.m = base.m if isinstance(base, Cycle) else 0
        self.path2 = isinstance(base, PathTwo)
        self.b = np.full(width, start[0], dtype=np.int64)
        self.t1 = np.full(width, start[1], dtype=np.int64)
        self.t2 = np.full(width, start[2], dtype=np.int64)

    def step(self, us, raw=None):
        u = us[0]
        origin = (self.t1 == 0) & (self.t2 == 0)
        if self.path2:
            # class order at the origin: base edge, t1-, t1+, t2-, t2+
            c = (u * 5).astype(np.int64)
            flip = origin & (c == 0)
            c = np.maximum(c - 1, 0)
            self.b = np.where(flip, 1 - self.b, self.b)
            dt1_o = (c == 1).astype(np.int64) - (c == 0)
            dt2_o = (c == 3).astype(np.int64) - (c == 2)
            moved_base = flip
        else:
            # class order at the origin: b-, b+, t1-, t1+, t2-, t2+
            c = (u * 6).astype(np.int64)
            db = (c == 1).astype(np.int64) - (c == 0)
            self.b += np.where(origin, db, 0)
            if self.m:
                self.b %= self.m
            dt1_o = (c == 3).astype(np.int64) - (c == 2)
            dt2_o = (c == 5).astype(np.int64) - (c == 4)
            moved_base = origin & (c < 2)
        c4 = (u * 4).astype(np.int64)
        dt1_t = (c4 == 1).astype(np.int64) - (c4 == 0)
        dt2_t = (c4 == 3).astype(np.int64) - (c4 == 2)
        self.t1 += np.where(origin, np.where(moved_base, 0, dt1_o), dt1_t)
        self.t2 += np.where(origin, np.where(moved_base, 0, dt2_o), dt2_t)

    def positions(self):
        return (self.b, self.t1, self.t2)

    def height(self):
        return np.maximum(np.abs(self.t1), np.abs(self.t2))

    def depth(self):
        return self.height()

    def distance(self):
        if self.path2:
            base = self.b
        elif self.m:
            base = np.minimum(self.b, self.m - self.b)
        else:
            base = np.abs(self.b)
        return base + np.abs(self.t1) + np.abs(self.t2)


class _LadderKernel(_KernelBase):
    """Half-line spine with 2^n two-step bridges between levels n and n+1.

    Neighbour classes of spine(n >= 1), in order, have probabilities
    1/D, 1/D, 2^(n-1)/D, 2^n/D with D = 2 + 3*2^(n-1); the thresholds are
    computed from s = 2^(1-n) as s/E, 2s/E, (2s+1)/E with E = 2s + 3, which
    stays exact in floating point until s underflows and degrades gracefully
    after.  Midpoint identities are drawn as the low min(n, 62) bits of an
    extra 62-bit integer per step; beyond 62 bits distinct identities are
    truncated together, which distorts meeting chances at those levels by
    at most 2^-62 per step.
    """

    needs_raw = True
    tracks_depth = True

    def __init__(self, graph, start, width):
        self.kind = np.full(width, start[0], dtype=np.int64)
        self.n = np.full(width, start[1], dtype=np.int64)
        self.idx = np.full(width, start[2], dtype=np.int64)
        self.last_spine = self.n.copy()

    def step(self, us, raw=None):
        u = us[0]
        kind, n = self.kind, self.n
        on_spine = kind == 0
        deep = on_spine & (n > 0)
        s = np.exp2(1.0 - n)
        e = 2.0 * s + 3.0
        c1 = s / e
        c2 = 2.0 * s / e
        c3 = (2.0 * s + 1.0) / e

        go_left = deep & (u < c1)
        go_right = (deep & (u >= c1) & (u < c2)) | (on_spine & (n == 0) & (u < 0.5))
        mid_left = deep & (u >= c2) & (u < c3)
        mid_right = (deep & (u >= c3)) | (on_spine & (n == 0) & (u >= 0.5))

        # from a midpoint at level l: spine(l) or spine(l+1), half each
        from_mid = ~on_spine
        mid_to_left = from_mid & (u < 0.5)
        mid_to_right = from_mid & (u >= 0.5)

        new_kind = np.where(mid_left | mid_right, 1, 0)
        new_n = np.select(
            [go_left, go_right, mid_left, mid_right, mid_to_left, mid_to_right],
            [n - 1, n + 1, n - 1, n, n, n + 1],
        )
        lvl = np.minimum(new_n, _LEVEL_BITS)
        new_idx = np.where(new_kind == 1,
                           raw & ((np.int64(1) << lvl) - 1), 0)
        self.kind = new_kind
        self.n = new_n
        self.idx = new_idx
        self.last_spine = np.where(new_kind == 0, new_n, self.last_spine)

    def positions(self):
        return (self.kind, self.n, self.idx)

    def height(self):
        return np.zeros_like(self.n)

    def depth(self):
        return self.n

    def distance(self):
        return self.n + (self.kind == 1)


class _SelfLoopCombKernel(_KernelBase):
    """Lazy-walk construction of the comb walk over a constant-degree base.

    The tooth coordinate runs as a walk on the integers with a self-loop of
    probability d/(d+2) at 0; each self-loop event advances an independent
    base walk one step and bumps the loop counter.  The assembled pair
    (base position, tooth height) has exactly the direct comb law.  Two
    uniforms per step: channel 0 drives the tooth, channel 1 the base move,
    the latter consumed even on steps with no base move.
    """

    channels = 2
    tracks_depth = True

    def __init__(self, graph, start, width):
        if not isinstance(graph, Comb):
            raise GraphError("self-loop construction needs a comb graph")
        base = graph.base
        if base.constant_degree is None:
            raise GraphError("self-loop construction needs a constant-degree base")
        self.d = base.constant_degree
        self.m = base.m if isinstance(base, Cycle) else 0
        self.path2 = isinstance(base, PathTwo)
        self.b = np.full(width, start[0], dtype=np.int64)
        self.t = np.full(width, start[1], dtype=np.int64)
        self.k = np.zeros(width, dtype=np.int64)

    def step(self, us, raw=None):
        u, ub = us
        q = self.d / (self.d + 2.0)
        at0 = self.t == 0
        hold = at0 & (u < q)
        down = np.where(at0, (u >= q) & (u < q + 1.0 / (self.d + 2.0)), u < 0.5)
        self.t += np.where(hold, 0, np.where(down, -1, 1))
        if self.path2:
            self.b = np.where(hold, 1 - self.b, self.b)
        else:
            db = np.where(hold, _sign(ub), 0)
            self.b += db
            if self.m:
                self.b %= self.m
        self.k += hold

    def positions(self):
        return (self.b, self.t)

    def height(self):
        return self.t

    def depth(self):
        return np.abs(self.t)

    def distance(self):
        if self.path2:
            base = self.b
        elif self.m:
            base = np.minimum(self.b, self.m - self.b)
        else:
            base = np.abs(self.b)
        return base + np.abs(self.t)

    def loop_counts(self):
        return self.k


_DIRECT_KERNELS = [
    (Line, _LineKernel),
    (Cycle, _CycleKernel),
    (PathTwo, _PathTwoKernel),
    (Star, _StarKernel),
    (Grid2D, _Grid2DKernel),
    (Comb2, _Comb2Kernel),
    (BiasedLadder, _LadderKernel),
]


def _make_kernel(graph, start, width, method):
    if method == "selfloop":
        return _SelfLoopCombKernel(graph, start, width)
    if method != "direct":
        raise ValueError(f"unknown construction: {method!r}")
    if isinstance(graph, Comb):
        cls = _CombPathTwoKernel if isinstance(graph.base, PathTwo) else _CombKernel
        return cls(graph, start, width)
    for gcls, kcls in _DIRECT_KERNELS:
        if isinstance(graph, gcls):
            return kcls(graph, start, width)
    raise GraphError(f"no sampler for family {graph.family}")


# ---------------------------------------------------------------------------
# block runner
# ---------------------------------------------------------------------------

def _fill_uniform(buf, gens, length):
    for j, g in enumerate(gens):
        buf[:length, j] = g.random(length)


def _fill_raw(buf, gens, length):
    for j, g in enumerate(gens):
        buf[:length, j] = g.integers(0, np.int64(1) << _LEVEL_BITS,
                                     dtype=np.int64, size=length)


def _lil_threshold(n_steps, alpha):
    n = np.arange(n_steps + 1, dtype=np.float64)
    return 2.0 * np.power(2.0 * n, 1.0 / (2.0 * alpha))


def _run_block(graph, start, n_steps, seed, replicas, record, method,
               truncation_radius=None, stream_roles=None):
    """Simulate one block of replica pairs; returns summaries in order."""

    B = len(replicas)
    W = 2 * B
    kernel = _make_kernel(graph, start, W, method)
    cps = record.resolved_checkpoints(n_steps)
    is_ladder = isinstance(graph, BiasedLadder)
    stride = record.spine_stride if is_ladder else 0

    if stream_roles is None:
        x_role = X_TOOTH if method == "selfloop" else X_MAIN
        y_role = Y_TOOTH if method == "selfloop" else Y_MAIN
        stream_roles = (x_role, y_role)
    base_streams = [RngStream(seed, r, stream_roles[0]) for r in replicas] + \
                   [RngStream(seed, r, stream_roles[1]) for r in replicas]
    gen_sets = []
    for ch in range(kernel.channels):
        gen_sets.append([s.derive(ch).generator() for s in base_streams])
    raw_gens = None
    if kernel.needs_raw:
        raw_gens = [s.derive(1).generator() for s in base_streams]

    u_bufs = [np.empty((CHUNK, W)) for _ in range(kernel.channels)]
    raw_buf = np.empty((CHUNK, W), dtype=np.int64) if kernel.needs_raw else None

    meetings = np.zeros(B, dtype=np.int64)
    max_depth = np.zeros(W, dtype=np.int64)
    cp_counts = {}
    cp_set = set(cps)
    hit_times, hit_cols, hit_verts, hit_heights = [], [], [], []
    lil_alphas = tuple(record.lil_alphas) if kernel.tracks_depth else ()
    lil_thr = [_lil_threshold(n_steps, a) for a in lil_alphas]
    lil_times = [[[] for _ in range(W)] for _ in lil_alphas]
    spine_rows = []
    k_rows = {}

    if stride:
        spine_rows.append(kernel.last_spine.astype(np.int32))

    n = 0
    while n < n_steps:
        length = min(CHUNK, n_steps - n)
        for ch in range(kernel.channels):
            _fill_uniform(u_bufs[ch], gen_sets[ch], length)
        if raw_buf is not None:
            _fill_raw(raw_buf, raw_gens, length)
        for t in range(length):
            n += 1
            us = [buf[t] for buf in u_bufs]
            kernel.step(us, raw_buf[t] if raw_buf is not None else None)

            arrays = kernel.positions()
            eq = arrays[0][:B] == arrays[0][B:]
            for a in arrays[1:]:
                eq &= a[:B] == a[B:]
            if eq.any():
                cols = np.nonzero(eq)[0]
                meetings[cols] += 1
                h = kernel.height()
                for col in cols:
                    hit_times.append(n)
                    hit_cols.append(int(col))
                    hit_verts.append(kernel.vertex(col))
                    hit_heights.append(int(h[col]) if h is not None else 0)

            if kernel.tracks_depth:
                d = kernel.depth()
                np.maximum(max_depth, d, out=max_depth)
                for ai, thr in enumerate(lil_thr):
                    bad = d > thr[n]
                    if bad.any():
                        for col in np.nonzero(bad)[0]:
                            lil_times[ai][col].append(n)

            if truncation_radius is not None:
                dist = kernel.distance()
                if (dist > truncation_radius).any():
                    col = int(np.argmax(dist > truncation_radius))
                    r = replicas[col % B]
                    raise SimulationError(
                        f"replica {r} left the radius-{truncation_radius} "
                        f"ball at step {n}")

            if stride and n % stride == 0:
                spine_rows.append(kernel.last_spine.astype(np.int32))
            if n in cp_set:
                cp_counts[n] = meetings.copy()
                if method == "selfloop":
                    k_rows[n] = kernel.loop_counts().copy()

    out = []
    hit_cols_arr = np.array(hit_cols, dtype=np.int64)
    for b, rep in enumerate(replicas):
        if len(hit_cols_arr):
            idx = np.nonzero(hit_cols_arr == b)[0]
        else:
            idx = []
        cols_recs = [CollisionRecord(rep, hit_times[i], hit_verts[i],
                                     hit_heights[i]) for i in idx]
        extras = {}
        if lil_alphas:
            extras["lil"] = {
                "alphas": list(lil_alphas),
                "times": [sorted(set(lil_times[ai][b]) | set(lil_times[ai][B + b]))
                          for ai in range(len(lil_alphas))],
            }
        if stride:
            extras["spine"] = {
                "stride": stride,
                "x": [int(row[b]) for row in spine_rows],
                "y": [int(row[B + b]) for row in spine_rows],
            }
        if method == "selfloop":
            extras["k_trace"] = [{"t": t, "x": int(k_rows[t][b]),
                                  "y": int(k_rows[t][B + b])} for t in cps]
        out.append(PairTrajectorySummary(
            replica=rep,
            n_steps=n_steps,
            meetings=int(meetings[b]),
            collisions=cols_recs,
            checkpoints=[(t, int(cp_counts[t][b])) for t in cps],
            final_x=kernel.vertex(b),
            final_y=kernel.vertex(B + b),
            max_tooth_x=int(max_depth[b]),
            max_tooth_y=int(max_depth[B + b]),
            method=method,
            extras=extras,
        ))
    return out


def run_pair(graph, start=None, n_steps=0, rng_x=None, rng_y=None,
             record=None, method="direct", truncation_radius=None):
    """Simulate one pair of independent walks for ``n_steps`` steps.

    ``rng_x`` and ``rng_y`` are RngStream keys; their siblings (offset +1)
    are drawn from automatically when the construction needs an auxiliary
    stream.  Defaults follow the role table in :mod:`.rng` with seed 0,
    replica 0.
    """
    if start is None:
        start = graph.root
    graph._require(start)
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    default_x = X_TOOTH if method == "selfloop" else X_MAIN
    default_y = Y_TOOTH if method == "selfloop" else Y_MAIN
    rng_x = rng_x or RngStream(0, 0, default_x)
    rng_y = rng_y or RngStream(0, 0, default_y)
    if (rng_x.seed, rng_x.replica) != (rng_y.seed, rng_y.replica):
        raise ValueError("pair streams must share seed and replica")
    record = record or RecordPolicy()
    return _run_block(graph, start, n_steps, rng_x.seed, [rng_x.replica],
                      record, method, truncation_radius,
                      stream_roles=(rng_x.stream, rng_y.stream))[0]


def run_pair_decomposed(graph, start=None, n_steps=0, seed=0, replica=0,
                        record=None):
    """Pair run through the self-loop construction, with loop-count traces."""
    return run_pair(graph, start, n_steps,
                    RngStream(seed, replica, X_TOOTH),
                    RngStream(seed, replica, Y_TOOTH),
                    record, method="selfloop")


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

_BLOCK = 512


def _block_worker(payload):
    (spec, start, n_steps, seed, lo, hi, record_fields, method, radius) = payload
    graph = build_graph(spec)
    record = RecordPolicy(*record_fields)
    sums = _run_block(graph, tuple(start), n_steps, seed, range(lo, hi),
                      record, method, radius)
    return [s.to_dict() for s in sums]


def run_ensemble(graph, start=None, n_steps=0, replicas=1, seed=0, workers=1,
                 checkpoints=None, record=None, method="direct",
                 truncation_radius=None):
    """Simulate ``replicas`` independent pairs and return their summaries
    in replica order.

    Replica r always uses the streams keyed (seed, r, role), and draws are
    chunked identically in every process, so the result is a pure function
    of (graph, start, n_steps, replicas, seed, record): worker count changes
    wall time only.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if start is None:
        start = graph.root
    graph._require(start)
    if record is None:
        record = RecordPolicy(checkpoints=tuple(checkpoints or ()))
    elif checkpoints is not None:
        record = RecordPolicy(tuple(checkpoints), record.lil_alphas,
                              record.spine_stride)

    blocks = []
    lo = 0
    while lo < replicas:
        hi = min(lo + _BLOCK, replicas)
        blocks.append((lo, hi))
        lo = hi

    record_fields = (record.checkpoints, record.lil_alphas, record.spine_stride)
    if workers <= 1 or len(blocks) == 1:
        out = []
        for lo, hi in blocks:
            out.extend(_run_block(graph, start, n_steps, seed, range(lo, hi),
                                  record, method, truncation_radius))
        return out

    payloads = [(graph.family, start, n_steps, seed, lo, hi,
                 record_fields, method, truncation_radius)
                for lo, hi in blocks]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for dicts in pool.map(_block_worker, payloads):
            out.extend(PairTrajectorySummary.from_dict(d) for d in dicts)
    return out


def srw_step(graph, vertex, rng):
    """One uniform-neighbour step from ``vertex``; ``rng`` is a Generator."""
    kernel = _make_kernel(graph, vertex, 1, "direct")
    us = [np.array([rng.random()])]
    raw = None
    if kernel.needs_raw:
        raw = rng.integers(0, np.int64(1) << _LEVEL_BITS, dtype=np.int64, size=1)
    kernel.step(us, raw)
    return kernel.vertex(0)


# ---------------------------------------------------------------------------
# geometric-clock construction
# ---------------------------------------------------------------------------

def _clock_arrays(d, n_steps, gen_s, gen_g, width):
    """Vectorized clock bookkeeping for `width` tooth walks of length n_steps.

    Returns dict of (n_steps+1, width) int64 arrays: the delayed tooth path
    V, loop counts K, revisit counts H, and holding-time sums R, plus the
    undelayed path S and per-visit holds G.  Memory is O(n_steps * width);
    meant for moderate horizons, not the chunked long runs.
    """
    T = n_steps
    q = d / (d + 2.0)
    steps = np.where(gen_s.random((T, width)) < 0.5, -1, 1).astype(np.int64)
    S = np.zeros((T + 1, width), dtype=np.int64)
    np.cumsum(steps, axis=0, out=S[1:])

    # visit ordinals: ordinal 0 is the start at time 0, later ordinals are
    # revisits S_i = 0, i >= 1.  VA[i] = number of visits with time <= i.
    revisit = (S[1:] == 0).astype(np.int64)
    VA = np.empty((T + 1, width), dtype=np.int64)
    VA[0] = 1
    np.cumsum(revisit, axis=0, out=VA[1:])
    VA[1:] += 1

    # holds: G[j] belongs to visit ordinal j; inverse-cdf geometric with
    # P[G = k] = q^k (1 - q), using 1-u in (0,1] so log stays finite
    u = gen_g.random((T + 2, width))
    G = np.floor(np.log1p(-u) / math.log(q)).astype(np.int64)
    Gpref = np.zeros((T + 3, width), dtype=np.int64)
    np.cumsum(G, axis=0, out=Gpref[1:])

    # tau[m] = delayed time when undelayed step m completes
    tau = np.empty((T + 1, width), dtype=np.int64)
    tau[0] = 0
    if T:
        consumed = np.take_along_axis(Gpref, VA[:T], axis=0)
        tau[1:] = np.arange(1, T + 1, dtype=np.int64)[:, None] + consumed

    ns = np.arange(T + 1, dtype=np.int64)
    sigma = np.empty((T + 1, width), dtype=np.int64)
    for n in range(T + 1):
        sigma[n] = (tau <= n).sum(axis=0) - 1
    V = np.take_along_axis(S, sigma, axis=0)
    K = ns[:, None] - sigma
    H = np.take_along_axis(VA, ns[:, None] // 2, axis=0) - 1
    R = np.take_along_axis(Gpref, H + 1, axis=0) - np.take_along_axis(Gpref, np.ones_like(H), axis=0)
    return {"S": S, "G": G, "V": V, "K": K, "H": H, "R": R, "sigma": sigma}


def geometric_clock_path(d, n_steps, seed=0, replica=0, walker="x"):
    """Single delayed tooth walk built from an undelayed walk plus holds.

    Returns 1-d arrays S, V, K, H, R (and the holds G): V is the lazy tooth
    walk with self-loop d/(d+2) at 0, K counts its self-loop steps, H counts
    undelayed revisits to 0 up to half time, R sums the holds of those
    revisits.  Either K_n >= R_n or K_n >= n/2 holds at every n.
    """
    if d < 1:
        raise ValueError("base degree must be >= 1")
    roles = (X_SKEL,) if walker == "x" else (Y_SKEL,)
    gen_s = RngStream(seed, replica, roles[0]).generator()
    gen_g = RngStream(seed, replica, roles[0] + 1).generator()
    arrs = _clock_arrays(d, n_steps, gen_s, gen_g, 1)
    return {k: v[:, 0] for k, v in arrs.items()}


def clock_dichotomy_violations(d, n_steps, replicas, seed=0, batch=4096):
    """Count (replica, time) pairs violating K_n >= R_n or K_n >= n/2."""
    bad = 0
    checked = 0
    lo = 0
    while lo < replicas:
        width = min(batch, replicas - lo)
        gen_s = RngStream(seed, lo, X_SKEL).generator()
        gen_g = RngStream(seed, lo, X_SKEL + 1).generator()
        # one batch = one stream pair advanced across columns; replica
        # granularity is irrelevant here, only the aggregate count matters
        arrs = _clock_arrays(d, n_steps, gen_s, gen_g, width)
        ns = np.arange(n_steps + 1, dtype=np.int64)[:, None]
        ok = (arrs["K"] >= arrs["R"]) | (2 * arrs["K"] >= ns)
        bad += int((~ok).sum())
        checked += ok.size
        lo += width
    return bad, checked


def sample_marginal(graph, n_steps, replicas, seed=0, method="direct",
                    start=None, batch=8192):
    """Positions of a single walk at time ``n_steps`` for many replicas.

    The three constructions must produce the same marginal law; this is the
    hook the distribution tests use.  Returns an (replicas, k) int64 array
    of coordinate tuples.
    """
    if start is None:
        start = graph.root
    graph._require(start)
    if method == "clock":
        if not isinstance(graph, Comb):
            raise GraphError("clock construction needs a comb graph")
        base = graph.base
        if base.constant_degree is None:
            raise GraphError("clock construction needs a constant-degree base")
        if start[1] != 0:
            raise GraphError("clock construction starts on the spine")
        d = base.constant_degree
        cols = []
        lo = 0
        while lo < replicas:
            width = min(batch, replicas - lo)
            gen_s = RngStream(seed, lo, X_SKEL).generator()
            gen_g = RngStream(seed, lo, X_SKEL + 1).generator()
            gen_u = RngStream(seed, lo, X_BASE).generator()
            arrs = _clock_arrays(d, n_steps, gen_s, gen_g, width)
            K = arrs["K"][n_steps]
            V = arrs["V"][n_steps]
            # base walk advanced once per self-loop event
            if isinstance(base, PathTwo):
                b = (start[0] + K) % 2
            else:
                bsteps = np.where(gen_u.random((n_steps, width)) < 0.5, -1, 1)
                bpath = np.zeros((n_steps + 1, width), dtype=np.int64)
                np.cumsum(bsteps, axis=0, out=bpath[1:])
                b = start[0] + np.take_along_axis(bpath, K[None, :], axis=0)[0]
                if isinstance(base, Cycle):
                    b %= base.m
            cols.append(np.stack([b, V], axis=1))
            lo += width
        return np.concatenate(cols, axis=0)

    out = []
    lo = 0
    while lo < replicas:
        width = min(batch, replicas - lo)
        kernel = _make_kernel(graph, start, width, method)
        gens = [RngStream(seed, lo + j, X_TOOTH if method == "selfloop"
                          else X_MAIN).derive(0).generator() for j in range(width)]
        gens2 = None
        if kernel.channels == 2:
            gens2 = [RngStream(seed, lo + j, X_TOOTH).derive(1).generator()
                     for j in range(width)]
        raw_gens = None
        if kernel.needs_raw:
            raw_gens = [RngStream(seed, lo + j, X_MAIN).derive(1).generator()
                        for j in range(width)]
        ubuf = np.empty((CHUNK, width))
        ubuf2 = np.empty((CHUNK, width)) if gens2 else None
        rbuf = np.empty((CHUNK, width), dtype=np.int64) if raw_gens else None
        done = 0
        while done < n_steps:
            length = min(CHUNK, n_steps - done)
            _fill_uniform(ubuf, gens, length)
            if ubuf2 is not None:
                _fill_uniform(ubuf2, gens2, length)
            if rbuf is not None:
                _fill_raw(rbuf, raw_gens, length)
            for t in range(length):
                us = [ubuf[t]] if ubuf2 is None else [ubuf[t], ubuf2[t]]
                kernel.step(us, rbuf[t] if rbuf is not None else None)
            done += length
        out.append(np.stack(kernel.positions(), axis=1))
        lo += width
    return np.concatenate(out, axis=0)
