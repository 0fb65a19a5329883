"""Pathwise couplings on a shared event stream, with event-by-event
ordering verification, plus influence graphs, invasion paths and the
counterexample search for the naive birth-rate coupling.

Two configurations are ordered xi1 <= xi2 when both the occupied sets and
the infected sets are nested; with the encoding 0 < 1 < 2 this is exactly
the pointwise inequality xi1(x) <= xi2(x), which is what the verifier
checks at the touched vertex after every event.  Rate couplings are all
realized by thinning labels on a single maximal-rate stream, so every
coupling is a pure reinterpretation of one immutable event sequence.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .engine import (
    KIND_BIRTH, KIND_DEATH, KIND_INFECTION, KIND_RECOVERY,
    EventStream, Trajectory, generate_stream, materialize_stream,
)
from .lattice import Configuration, ParamSet, flat_index, unflat


@dataclass(frozen=True)
class SpaceTimePoint:
    vertex: object
    time: float


@dataclass
class OrderingReport:
    """Outcome of an event-by-event ordering verification."""

    holds: bool
    first_violation: Optional[tuple]  # (time, vertex, state_a, state_b)
    checked_events: int


@dataclass
class InvasionPath:
    """Chain of births carrying occupancy from t_0 to a space-time point:
    vertices x_1..x_n with times t_0 < ... < t_n."""

    vertices: list
    times: list

    @property
    def temporal_length(self) -> float:
        return self.times[-1] - self.times[0]


def configuration_leq(a: Configuration, b: Configuration) -> bool:
    """The partial order: occupied and infected sets of a nested in b's."""
    if not a.same_geometry(b):
        raise ValueError("configurations have different geometries")
    return bool(np.all(a.states <= b.states))


def _run_pair(stream: EventStream, init_a: Configuration, init_b: Configuration,
              rules_a, rules_b, check_mode: int, params=None,
              stop_on_violation: bool = False, with_logs: bool = True):
    """Replay a stream through two rule tables, verifying after each event."""
    n = len(stream)
    sa = init_a.states.copy()
    sb = init_b.states.copy()
    if with_logs:
        la = [np.empty(n, dtype=np.float64), np.empty(n, dtype=np.int64),
              np.empty(n, dtype=np.uint8), np.empty(n, dtype=np.uint8),
              np.empty(n, dtype=np.int64)]
        lb = [np.empty(n, dtype=np.float64), np.empty(n, dtype=np.int64),
              np.empty(n, dtype=np.uint8), np.empty(n, dtype=np.uint8),
              np.empty(n, dtype=np.int64)]
    else:
        la = [np.empty(0, dtype=np.float64), np.empty(0, dtype=np.int64),
              np.empty(0, dtype=np.uint8), np.empty(0, dtype=np.uint8),
              np.empty(0, dtype=np.int64)]
        lb = [a.copy() for a in la]
    viol, na, nb, processed = K.replay_pair(
        n, stream.times, stream.kinds, stream.srcs, stream.tgts, stream.labels,
        sa, sb, rules_a[0], rules_a[1], rules_b[0], rules_b[1],
        stream.dim, stream.side, stream.interaction_range,
        check_mode, stop_on_violation, with_logs,
        la[0], la[1], la[2], la[3], la[4],
        lb[0], lb[1], lb[2], lb[3], lb[4], 0)
    if viol >= 0:
        f = int(stream.srcs[viol]) if stream.tgts[viol] < 0 else int(stream.tgts[viol])
        fv = (float(stream.times[viol]),
              unflat(f, stream.dim, stream.side),
              int(sa[f]) if stop_on_violation else None,
              int(sb[f]) if stop_on_violation else None)
        # states at the violation are only meaningful if we stopped there;
        # otherwise recompute them from the logged deltas below
        report = OrderingReport(False, fv, processed)
    else:
        report = OrderingReport(True, None, processed)
    traj_a = Trajectory(init_a, stream.horizon, la[0][:na].copy(),
                        la[1][:na].copy(), la[2][:na].copy(),
                        la[3][:na].copy(), la[4][:na].copy(), params)
    traj_b = Trajectory(init_b, stream.horizon, lb[0][:nb].copy(),
                        lb[1][:nb].copy(), lb[2][:nb].copy(),
                        lb[3][:nb].copy(), lb[4][:nb].copy(), params)
    if viol >= 0 and not stop_on_violation:
        t_v = float(stream.times[viol])
        f = int(stream.srcs[viol]) if stream.tgts[viol] < 0 else int(stream.tgts[viol])
        report.first_violation = (t_v, unflat(f, stream.dim, stream.side),
                                  int(traj_a.states_array_at(t_v)[f]),
                                  int(traj_b.states_array_at(t_v)[f]))
    return traj_a, traj_b, report


def _check_mode_for(init_a: Configuration, init_b: Configuration) -> int:
    """Occupied-set equality is only checkable when it holds at time 0."""
    occ_equal = bool(np.all((init_a.states != 0) == (init_b.states != 0)))
    return 2 if occ_equal else 1


def couple_shared(stream: EventStream, init1: Configuration,
                  init2: Configuration):
    """Two copies of the stacked process on the same stream (attractiveness).

    Requires init1 <= init2; verifies the order after every event, and
    occupied-set equality whenever the initial occupied sets coincide.
    """
    if not configuration_leq(init1, init2):
        raise ValueError("init1 must be <= init2 in the partial order")
    mode = _check_mode_for(init1, init2)
    return _run_pair(stream, init1, init2, K.STANDARD_RULES, K.STANDARD_RULES,
                     mode)


def couple_infection_rates(params: ParamSet, lambda2_low: float,
                           init1: Configuration, init2: Configuration,
                           horizon: float, seed: int):
    """Monotone coupling in the infection rate: one stream at the high rate;
    the low-rate process uses an infection arrow iff its thinning label is
    below lambda2_low / lambda2."""
    if lambda2_low > params.lambda2:
        raise ValueError(f"lambda2_low {lambda2_low} exceeds lambda2 {params.lambda2}")
    if lambda2_low < 0:
        raise ValueError("lambda2_low must be non-negative")
    if not configuration_leq(init1, init2):
        raise ValueError("init1 must be <= init2 in the partial order")
    stream = generate_stream(params, horizon, seed)
    cut = lambda2_low / params.lambda2 if params.lambda2 > 0 else 1.0
    rules_low = K.make_rules(
        infection=(cut, 2.0, K.ROLE_INFECT, K.ROLE_NONE, K.ROLE_NONE))
    mode = _check_mode_for(init1, init2)
    return _run_pair(stream, init1, init2, rules_low, K.STANDARD_RULES, mode,
                     params)


def couple_equal_rates(params: ParamSet, init: Configuration, horizon: float,
                       seed: int):
    """Domination by the process with birth rate = infection rate = lambda2.

    One unified arrow stream at rate lambda2/N per pair; an arrow with label
    u < lambda1/lambda2 acts as birth-and-infection for both processes,
    otherwise as infection only for the first and birth-and-infection for
    the second.  Verifies pointwise xi1 <= xi2.
    """
    if params.lambda1 > params.lambda2:
        raise ValueError(
            f"needs lambda1 <= lambda2, got {params.lambda1} > {params.lambda2}")
    stream = materialize_stream((1.0, params.delta, params.lambda2, 0.0),
                                params.dim, params.side,
                                params.interaction_range, horizon, seed)
    cut = params.lambda1 / params.lambda2 if params.lambda2 > 0 else 1.0
    rules_1 = K.make_rules(
        birth=(cut, 2.0, K.ROLE_COMBINED, K.ROLE_INFECT, K.ROLE_INFECT))
    rules_2 = K.make_rules(
        birth=(2.0, 2.0, K.ROLE_COMBINED, K.ROLE_COMBINED, K.ROLE_COMBINED))
    return _run_pair(stream, init, init, rules_1, rules_2, 1, params)


def couple_contact_lower(lambda0: float, params: ParamSet,
                         init_xi: Configuration, init_eta: Configuration,
                         horizon: float, seed: int):
    """Lower bound by a contact process with birth lambda0, death 1+delta.

    One unified arrow stream at rate (lambda1+lambda2-lambda0)/N per pair:
    labels below lambda0/S act as birth-and-infection for xi and as plain
    birth for eta; the next lambda1-lambda0 band is birth-only for xi and
    the rest infection-only for xi.  Recovery marks kill eta.  Verifies
    pointwise eta <= xi; eta is two-valued {0, 2}.
    """
    if lambda0 > min(params.lambda1, params.lambda2):
        raise ValueError(
            f"lambda0 {lambda0} exceeds min(lambda1, lambda2) "
            f"= {min(params.lambda1, params.lambda2)}")
    if lambda0 < 0:
        raise ValueError("lambda0 must be non-negative")
    if not np.all(np.isin(init_eta.states, (0, 2))):
        raise ValueError("init_eta must be two-valued {0, 2}")
    if not configuration_leq(init_eta, init_xi):
        raise ValueError("init_eta must be <= init_xi pointwise")
    S = params.lambda1 + params.lambda2 - lambda0
    stream = materialize_stream((1.0, params.delta, S, 0.0),
                                params.dim, params.side,
                                params.interaction_range, horizon, seed)
    if S > 0:
        c0, c1 = lambda0 / S, params.lambda1 / S
    else:
        c0, c1 = 1.0, 2.0
    rules_eta = K.make_rules(
        recovery=K.REC_DEATH,
        birth=(c0, 2.0, K.ROLE_BIRTH, K.ROLE_NONE, K.ROLE_NONE))
    rules_xi = K.make_rules(
        birth=(c0, c1, K.ROLE_COMBINED, K.ROLE_BIRTH, K.ROLE_INFECT))
    traj_eta, traj_xi, report = _run_pair(stream, init_eta, init_xi,
                                          rules_eta, rules_xi, 1, params)
    return traj_xi, traj_eta, report


def couple_box(params: ParamSet, part, init: Configuration, horizon: float,
               seed: int):
    """Coupling with the box version: infection arrows leaving the reduced
    neighborhood are dropped and births leaving it deliver a healthy
    offspring.  Verifies box <= full and occupied-set equality."""
    part.check_side(params.side)
    stream = generate_stream(params, horizon, seed)
    rules_box = K.make_rules(box_l=part.l)
    traj_box, traj_full, report = _run_pair(stream, init, init, rules_box,
                                            K.STANDARD_RULES, 2, params)
    return traj_full, traj_box, report


@dataclass
class CouplingWitness:
    """Stream prefix exhibiting a violated ordering, with the violating
    space-time point."""

    stream: EventStream
    point: SpaceTimePoint
    seed: Optional[int]
    property_name: str
    lambda1_low: float
    lambda1_high: float

    def to_text(self) -> str:
        head = (f"# violation: {self.property_name} at t={self.point.time:.17g} "
                f"x={self.point.vertex} (lambda1_low={self.lambda1_low:.17g}, "
                f"lambda1_high={self.lambda1_high:.17g}, seed={self.seed})\n")
        return head + self.stream.to_text()


def _birth_coupling_rules(lambda1_low: float, lambda1_high: float):
    cut = lambda1_low / lambda1_high if lambda1_high > 0 else 1.0
    rules_low = K.make_rules(
        birth=(cut, 2.0, K.ROLE_BIRTH, K.ROLE_NONE, K.ROLE_NONE))
    return rules_low, K.STANDARD_RULES


def check_birth_coupling(stream: EventStream, init: Configuration,
                         lambda1_low: float, lambda1_high: float):
    """Run the naive basic coupling for two birth rates on one stream and
    verify infected-set inclusion (low subset of high) after every event."""
    if lambda1_low > lambda1_high:
        raise ValueError("lambda1_low must be <= lambda1_high")
    rules_low, rules_high = _birth_coupling_rules(lambda1_low, lambda1_high)
    return _run_pair(stream, init, init, rules_low, rules_high, 3,
                     stop_on_violation=True, with_logs=False)


def search_birth_coupling_violation(lambda1_low: float, params: ParamSet,
                                    init: Configuration, horizon: float,
                                    seeds) -> Optional[CouplingWitness]:
    """Search replays of the naive birth-rate coupling (extra birth arrows
    for the high-rate process) for a violation of infected-set inclusion.

    params.lambda1 is the high rate.  Returns the first witness found: the
    stream prefix up to the violating event plus the space-time point, or
    None if every seed preserves the inclusion.
    """
    if lambda1_low > params.lambda1:
        raise ValueError("lambda1_low must be <= params.lambda1")
    for seed in seeds:
        stream = generate_stream(params, horizon, seed)
        _, _, report = check_birth_coupling(stream, init, lambda1_low,
                                            params.lambda1)
        if not report.holds:
            t_v, x_v = report.first_violation[0], report.first_violation[1]
            prefix = stream.truncated(report.checked_events)
            return CouplingWitness(prefix, SpaceTimePoint(x_v, t_v), seed,
                                   "infected-set-inclusion", lambda1_low,
                                   params.lambda1)
    return None


# ---------------------------------------------------------------------------
# influence graphs and invasion paths


class _StreamIndex:
    """Per-vertex views of a stream: death-mark times and incoming arrows."""

    def __init__(self, stream: EventStream):
        self.stream = stream
        V = stream.side ** stream.dim
        self.deaths = [[] for _ in range(V)]
        self.in_arrows = [[] for _ in range(V)]  # (time, src, event index)
        for i in range(len(stream)):
            k = stream.kinds[i]
            if k == KIND_DEATH:
                self.deaths[stream.srcs[i]].append(float(stream.times[i]))
            elif k == KIND_BIRTH or k == KIND_INFECTION:
                self.in_arrows[stream.tgts[i]].append(
                    (float(stream.times[i]), int(stream.srcs[i]), i))

    def segment_floor(self, v: int, tau: float) -> float:
        """Largest death time at v that is <= tau, or 0.0."""
        d = self.deaths[v]
        i = bisect_right(d, tau)
        return d[i - 1] if i else 0.0

    def arrows_between(self, v: int, lo: float, hi: float):
        """Incoming arrows at v with lo < time <= hi."""
        arr = self.in_arrows[v]
        i = bisect_right(arr, (lo, float("inf"), 0))
        out = []
        while i < len(arr) and arr[i][0] <= hi:
            out.append(arr[i])
            i += 1
        return out


def influence_graph(stream: EventStream, p: SpaceTimePoint):
    """Backward closure of (x, t) over birth and infection arrows, blocked
    by death marks.  Returns vertex-interval segments (vertex, lo, hi):
    the states on these segments determine the state at (x, t)."""
    if p.time > stream.horizon:
        raise ValueError(f"point time {p.time} exceeds stream horizon {stream.horizon}")
    idx = _StreamIndex(stream)
    x0 = flat_index(p.vertex, stream.dim, stream.side)
    # best[(v, floor)] = highest tau explored on that death-free interval
    best: dict = {}
    segments: dict = {}
    stack = [(x0, float(p.time))]
    while stack:
        v, tau = stack.pop()
        floor = idx.segment_floor(v, tau)
        key = (v, floor)
        prev = best.get(key, None)
        if prev is not None and tau <= prev:
            continue
        lo = floor if prev is None else prev
        best[key] = tau
        segments[key] = (floor, max(tau, segments.get(key, (0, tau))[1]))
        for (a_t, a_src, _i) in idx.arrows_between(v, lo, tau):
            stack.append((a_src, a_t))
    out = []
    for (v, floor), (_f, hi) in segments.items():
        out.append((unflat(v, stream.dim, stream.side), floor, hi))
    out.sort(key=lambda s: (s[1], s[2], str(s[0])))
    return out


def influence_base_vertices(segments) -> set:
    """Vertices whose influence segment reaches time 0."""
    return {v for (v, lo, _hi) in segments if lo == 0.0}


def invasion_paths(stream: EventStream, p: SpaceTimePoint,
                   traj: Trajectory) -> list:
    """All invasion paths from time 0 to p: chains of birth arrows along
    which every vertex is newly occupied at its segment start and stays
    occupied to the segment end.  Empty when p is vacant; a single path
    (the birth lineage) when p is occupied."""
    dim, side = stream.dim, stream.side
    x0 = flat_index(p.vertex, dim, side)
    if traj.states_array_at(p.time)[x0] == 0:
        return []
    # per-vertex change history
    hist: dict = {}
    for i in range(traj.n_changes):
        hist.setdefault(int(traj.vertices[i]), []).append(i)

    def interval_start(v: int, tau: float, inclusive: bool):
        """(start_time, causing event index or None) of the occupancy
        interval of v covering tau (or tau- when not inclusive)."""
        rows = hist.get(v, [])
        times = [float(traj.times[i]) for i in rows]
        j = (bisect_right(times, tau) if inclusive else bisect_left(times, tau)) - 1
        while j >= 0:
            i = rows[j]
            if traj.olds[i] == 0:
                return float(traj.times[i]), int(traj.event_indices[i])
            if traj.news[i] == 0:
                raise AssertionError("walk entered a vacant interval")
            j -= 1
        return 0.0, None

    verts = [x0]
    times = [float(p.time)]
    tau = float(p.time)
    v = x0
    inclusive = True
    while True:
        start, eidx = interval_start(v, tau, inclusive)
        if eidx is None:
            if traj.initial.states[v] == 0:
                raise AssertionError("lineage reached time 0 on a vacant vertex")
            times.append(0.0)
            break
        if stream.kinds[eidx] != KIND_BIRTH:
            raise AssertionError("occupancy interval not started by a birth arrow")
        parent = int(stream.srcs[eidx])
        times.append(start)
        verts.append(parent)
        v = parent
        tau = start
        inclusive = False
    verts.reverse()
    times.reverse()
    path = InvasionPath([unflat(v, dim, side) for v in verts], times)
    _validate_invasion_path(stream, traj, verts, times)
    return [path]


def _validate_invasion_path(stream: EventStream, traj: Trajectory,
                            verts, times):
    """Check the defining conditions: occupied throughout each segment,
    newly occupied at each segment start, no death mark inside a segment."""
    idx = _StreamIndex(stream)
    n = len(verts)
    for j in range(n):
        v, lo, hi = verts[j], times[j], times[j + 1]
        d = idx.deaths[v]
        i = bisect_right(d, lo)
        if i < len(d) and d[i] < hi:
            raise AssertionError("death mark inside an invasion path segment")
        if traj.states_array_at(lo)[v] == 0:
            raise AssertionError("segment start is vacant")
        if lo > 0.0 and traj.states_array_before(lo)[v] != 0:
            raise AssertionError("segment start is not newly occupied")
