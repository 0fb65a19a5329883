"""Graphical-representation event streams and trajectory replay.

The process is built by replaying a state-independent stream of Poisson
marks and arrows: death marks at rate ``rates[0]`` per vertex, recovery
marks at ``rates[1]`` per vertex, birth arrows at ``rates[2]/N`` and
infection arrows at ``rates[3]/N`` per ordered neighbor pair.  The stream
depends only on (rates, geometry, horizon, seed), never on a configuration,
so any number of coupled processes can replay the identical sequence.

A uniform thinning label in (0, 1) is attached to every event so that one
stream can be reinterpreted at several parameter values without touching
the randomness.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .lattice import (
    Configuration, ParamSet, as_coords, flat_index, from_coords, unflat,
)

KIND_DEATH = K.KIND_DEATH
KIND_RECOVERY = K.KIND_RECOVERY
KIND_BIRTH = K.KIND_BIRTH
KIND_INFECTION = K.KIND_INFECTION
KIND_CHARS = "DRBI"

_CHUNK_EVENTS = 1 << 20
_CHECKPOINT_EVERY = 16384


@dataclass(frozen=True)
class Event:
    """One mark or arrow of the graphical representation."""

    time: float
    kind: int
    source: object
    target: object = None
    label: float = 0.0

    def __post_init__(self):
        if self.kind not in (0, 1, 2, 3):
            raise ValueError(f"invalid event kind {self.kind}")
        if self.kind in (KIND_BIRTH, KIND_INFECTION) and self.target is None:
            raise ValueError("arrows need a target vertex")
        if self.kind in (KIND_DEATH, KIND_RECOVERY) and self.target is not None:
            raise ValueError("marks have no target vertex")


@dataclass
class EventStream:
    """Time-ordered event sequence, the single source of randomness.

    rates = (death, recovery, birth, infection); the standard process uses
    (1, delta, lambda1, lambda2).  Arrays hold flat vertex indices; tgts is
    -1 for marks.  Events are sorted by time; equal floating-point times
    (never observed in practice) are ordered by generation index.
    """

    dim: int
    side: int
    interaction_range: int
    rates: tuple
    horizon: float
    seed: Optional[int]
    times: np.ndarray = field(repr=False)
    kinds: np.ndarray = field(repr=False)
    srcs: np.ndarray = field(repr=False)
    tgts: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.times.shape[0]

    def event(self, i: int) -> Event:
        k = int(self.kinds[i])
        tgt = None
        if k in (KIND_BIRTH, KIND_INFECTION):
            tgt = unflat(int(self.tgts[i]), self.dim, self.side)
        return Event(float(self.times[i]), k,
                     unflat(int(self.srcs[i]), self.dim, self.side),
                     tgt, float(self.labels[i]))

    def events(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self.event(i)

    def truncated(self, n: int) -> "EventStream":
        """Prefix of the first n events (same horizon and metadata)."""
        return EventStream(self.dim, self.side, self.interaction_range,
                           self.rates, self.horizon, self.seed,
                           self.times[:n].copy(), self.kinds[:n].copy(),
                           self.srcs[:n].copy(), self.tgts[:n].copy(),
                           self.labels[:n].copy())

    def split_at_time(self, t: float) -> tuple["EventStream", "EventStream"]:
        """Head (events <= t) and tail (events > t) as two streams."""
        i = int(np.searchsorted(self.times, t, side="right"))
        head = EventStream(self.dim, self.side, self.interaction_range,
                           self.rates, t, self.seed,
                           self.times[:i], self.kinds[:i], self.srcs[:i],
                           self.tgts[:i], self.labels[:i])
        tail = EventStream(self.dim, self.side, self.interaction_range,
                           self.rates, self.horizon, self.seed,
                           self.times[i:], self.kinds[i:], self.srcs[i:],
                           self.tgts[i:], self.labels[i:])
        return head, tail

    @classmethod
    def from_events(cls, events, dim: int, side: int, interaction_range: int,
                    horizon: float, rates=(0.0, 0.0, 0.0, 0.0),
                    seed: Optional[int] = None) -> "EventStream":
        """Build a hand-written stream; validates the event invariants."""
        n = len(events)
        times = np.empty(n, dtype=np.float64)
        kinds = np.empty(n, dtype=np.uint8)
        srcs = np.empty(n, dtype=np.int64)
        tgts = np.empty(n, dtype=np.int64)
        labels = np.empty(n, dtype=np.float64)
        prev = 0.0
        for i, ev in enumerate(events):
            if not ev.time > prev:
                raise ValueError(f"event {i}: times must be strictly increasing and > 0")
            prev = ev.time
            if ev.time > horizon:
                raise ValueError(f"event {i}: time {ev.time} exceeds horizon {horizon}")
            if not 0.0 <= ev.label < 1.0:
                raise ValueError(f"event {i}: label must lie in [0, 1)")
            src = flat_index(ev.source, dim, side)
            if ev.kind in (KIND_BIRTH, KIND_INFECTION):
                tgt = flat_index(ev.target, dim, side)
                sc = as_coords(ev.source, dim, side)
                tc = as_coords(ev.target, dim, side)
                dist = 0
                for a, b in zip(sc, tc):
                    d = abs(a - b)
                    d = min(d, side - d)
                    dist = max(dist, d)
                if dist == 0 or dist > interaction_range:
                    raise ValueError(f"event {i}: target is not a neighbor of the source")
            else:
                tgt = -1
            times[i] = ev.time
            kinds[i] = ev.kind
            srcs[i] = src
            tgts[i] = tgt
            labels[i] = ev.label
        return cls(dim, side, interaction_range, tuple(rates), horizon, seed,
                   times, kinds, srcs, tgts, labels)

    def to_text(self) -> str:
        """One event per line: ``t kind x [y] u`` with comma-separated
        coordinates and 17 significant digits on the floats."""
        out = io.StringIO()
        for i in range(len(self)):
            t = float(self.times[i])
            k = int(self.kinds[i])
            src = as_coords(unflat(int(self.srcs[i]), self.dim, self.side),
                            self.dim, self.side)
            parts = [f"{t:.17g}", KIND_CHARS[k], ",".join(str(c) for c in src)]
            if k in (KIND_BIRTH, KIND_INFECTION):
                tc = as_coords(unflat(int(self.tgts[i]), self.dim, self.side),
                               self.dim, self.side)
                parts.append(",".join(str(c) for c in tc))
            parts.append(f"{float(self.labels[i]):.17g}")
            out.write(" ".join(parts) + "\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str, dim: int, side: int, interaction_range: int,
                  horizon: float, rates=(0.0, 0.0, 0.0, 0.0),
                  seed: Optional[int] = None) -> "EventStream":
        """Parse the event-log text format; ignores ``#`` comment lines."""
        events = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind = KIND_CHARS.index(parts[1])
            src = tuple(int(v) for v in parts[2].split(","))
            src = src[0] if dim == 1 else src
            if kind in (KIND_BIRTH, KIND_INFECTION):
                tgt = tuple(int(v) for v in parts[3].split(","))
                tgt = tgt[0] if dim == 1 else tgt
                lab = float(parts[4])
            else:
                tgt = None
                lab = float(parts[3])
            events.append(Event(float(parts[0]), kind, src, tgt, lab))
        return cls.from_events(events, dim, side, interaction_range, horizon,
                               rates, seed)


def _gen_chunks(rates, dim, side, L, horizon, seed, chunk=_CHUNK_EVENTS):
    """Yield (times, kinds, srcs, tgts, labels, eidx0) buffers in time order."""
    total = (side ** dim) * sum(rates)
    if total <= 0.0 or horizon <= 0.0:
        return
    s = np.uint64(seed & ((1 << 64) - 1))
    t = 0.0
    eidx0 = 0
    t_buf = np.empty(chunk, dtype=np.float64)
    k_buf = np.empty(chunk, dtype=np.uint8)
    x_buf = np.empty(chunk, dtype=np.int64)
    y_buf = np.empty(chunk, dtype=np.int64)
    u_buf = np.empty(chunk, dtype=np.float64)
    while True:
        n, s, t, done = K.gen_events(s, t, horizon, dim, side, L,
                                     rates[0], rates[1], rates[2], rates[3],
                                     t_buf, k_buf, x_buf, y_buf, u_buf)
        if n:
            yield (t_buf[:n], k_buf[:n], x_buf[:n], y_buf[:n], u_buf[:n], eidx0)
            eidx0 += n
        if done:
            return


def generate_stream(params: ParamSet, horizon: float, seed: int) -> EventStream:
    """Materialize the graphical representation of the standard process:
    rates (1, delta, lambda1, lambda2).  Deterministic given the seed."""
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rates = (1.0, params.delta, params.lambda1, params.lambda2)
    return materialize_stream(rates, params.dim, params.side,
                              params.interaction_range, horizon, seed)


def materialize_stream(rates, dim: int, side: int, interaction_range: int,
                       horizon: float, seed: int) -> EventStream:
    """Materialize a stream with explicit (death, recovery, birth, infection)
    per-vertex rates; arrows are divided uniformly over the N neighbors."""
    # chunks reuse their buffers, so copy inside the loop
    chunks = [tuple(a.copy() for a in c[:5])
              for c in _gen_chunks(rates, dim, side, interaction_range, horizon, seed)]
    if chunks:
        times = np.concatenate([c[0] for c in chunks])
        kinds = np.concatenate([c[1] for c in chunks])
        srcs = np.concatenate([c[2] for c in chunks])
        tgts = np.concatenate([c[3] for c in chunks])
        labels = np.concatenate([c[4] for c in chunks])
    else:
        times = np.empty(0, dtype=np.float64)
        kinds = np.empty(0, dtype=np.uint8)
        srcs = np.empty(0, dtype=np.int64)
        tgts = np.empty(0, dtype=np.int64)
        labels = np.empty(0, dtype=np.float64)
    return EventStream(dim, side, interaction_range, tuple(rates), horizon,
                       seed, times, kinds, srcs, tgts, labels)


@dataclass
class Trajectory:
    """Initial configuration plus the applied-event history.

    state_at(t) is right-continuous; every recorded change carries the index
    of the stream event that produced it.
    """

    initial: Configuration
    horizon: float
    times: np.ndarray = field(repr=False)
    vertices: np.ndarray = field(repr=False)
    olds: np.ndarray = field(repr=False)
    news: np.ndarray = field(repr=False)
    event_indices: np.ndarray = field(repr=False)
    params: Optional[ParamSet] = None
    _checkpoints: list = field(default_factory=list, repr=False)

    @property
    def n_changes(self) -> int:
        return self.times.shape[0]

    def changes(self):
        """Iterate (time, vertex, old, new) over all applied changes."""
        dim, side = self.initial.dim, self.initial.side
        for i in range(self.n_changes):
            yield (float(self.times[i]), unflat(int(self.vertices[i]), dim, side),
                   int(self.olds[i]), int(self.news[i]))

    def _ensure_checkpoints(self):
        if self._checkpoints:
            return
        ckpts = [(0, self.initial.states.copy())]
        state = self.initial.states.copy()
        for i in range(self.n_changes):
            state[self.vertices[i]] = self.news[i]
            if (i + 1) % _CHECKPOINT_EVERY == 0:
                ckpts.append((i + 1, state.copy()))
        self._checkpoints = ckpts

    def _states_upto(self, idx: int) -> np.ndarray:
        """State array after applying the first idx changes."""
        self._ensure_checkpoints()
        ci = min(idx // _CHECKPOINT_EVERY, len(self._checkpoints) - 1)
        base_idx, base = self._checkpoints[ci]
        state = base.copy()
        for i in range(base_idx, idx):
            state[self.vertices[i]] = self.news[i]
        return state

    def _index_at(self, t: float, strict: bool = False) -> int:
        side = "left" if strict else "right"
        return int(np.searchsorted(self.times, t, side=side))

    def states_array_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return self._states_upto(self._index_at(t))

    def state_at(self, t: float) -> Configuration:
        return Configuration(self.initial.dim, self.initial.side,
                             self.states_array_at(t))

    def states_array_before(self, t: float) -> np.ndarray:
        """Left limit: state as of t-."""
        return self._states_upto(self._index_at(t, strict=True))

    @property
    def final(self) -> Configuration:
        return Configuration(self.initial.dim, self.initial.side,
                             self._states_upto(self.n_changes))

    def occupied_count_at(self, t: float) -> int:
        return int(np.count_nonzero(self.states_array_at(t)))

    def infected_count_at(self, t: float) -> int:
        return int(np.count_nonzero(self.states_array_at(t) == 2))


def _empty_log(n):
    return (np.empty(n, dtype=np.float64), np.empty(n, dtype=np.int64),
            np.empty(n, dtype=np.uint8), np.empty(n, dtype=np.uint8),
            np.empty(n, dtype=np.int64))


def _replay_chunks(chunks, init: Configuration, rules, L: int,
                   horizon: float, params=None, stop_mode: int = 0):
    """Replay chunked events into a Trajectory (delta log always on)."""
    thr, roles = rules
    state = init.states.copy()
    occ, inf = K.count_states(state)
    logs = []
    stopped = False
    for (t_c, k_c, x_c, y_c, u_c, eidx0) in chunks:
        n = t_c.shape[0]
        lt, lv, lo, ln, le = _empty_log(n)
        nlog, processed, occ, inf = K.replay(
            n, t_c, k_c, x_c, y_c, u_c, state, thr, roles,
            init.dim, init.side, L, occ, inf, stop_mode,
            True, lt, lv, lo, ln, le, eidx0)
        logs.append((lt[:nlog].copy(), lv[:nlog].copy(), lo[:nlog].copy(),
                     ln[:nlog].copy(), le[:nlog].copy()))
        if processed < n:
            stopped = True
            break
    if logs:
        times = np.concatenate([l[0] for l in logs])
        verts = np.concatenate([l[1] for l in logs])
        olds = np.concatenate([l[2] for l in logs])
        news = np.concatenate([l[3] for l in logs])
        eidx = np.concatenate([l[4] for l in logs])
    else:
        times, verts, olds, news, eidx = _empty_log(0)
    traj = Trajectory(init, horizon, times, verts, olds, news, eidx, params)
    return traj, stopped, occ, inf


def simulate(params: ParamSet, init: Configuration, horizon: float,
             seed: int) -> Trajectory:
    """Run the stacked contact process by replaying the graphical
    representation.  Deterministic given (params, init, horizon, seed)."""
    if not (init.dim == params.dim and init.side == params.side):
        raise ValueError("initial configuration geometry does not match params")
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rates = (1.0, params.delta, params.lambda1, params.lambda2)
    chunks = _gen_chunks(rates, params.dim, params.side,
                         params.interaction_range, horizon, seed)
    traj, _, _, _ = _replay_chunks(chunks, init, K.STANDARD_RULES,
                                   params.interaction_range, horizon, params)
    return traj


def simulate_stream(stream: EventStream, init: Configuration,
                    rules=None, params=None) -> Trajectory:
    """Replay a materialized stream from an initial configuration."""
    if not (init.dim == stream.dim and init.side == stream.side):
        raise ValueError("initial configuration geometry does not match stream")
    if rules is None:
        rules = K.STANDARD_RULES
    chunks = [(stream.times, stream.kinds, stream.srcs, stream.tgts,
               stream.labels, 0)]
    traj, _, _, _ = _replay_chunks(chunks, init, rules,
                                   stream.interaction_range, stream.horizon,
                                   params)
    return traj


def simulate_saturated(lambda2: float, delta: float, init: Configuration,
                       interaction_range: int, horizon: float,
                       seed: int) -> Trajectory:
    """Two-state limit dynamics on {1, 2} for a fully occupied lattice:
    1->2 at rate (lambda2+1) f_2 and 2->1 at rate f_1 + delta.

    Built from recovery marks at rate delta, heal arrows at rate 1/N per
    ordered pair and infection arrows at rate (lambda2+1)/N.
    """
    if np.any(init.states == 0):
        raise ValueError("saturated dynamics needs a configuration with no empty sites")
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rates = (0.0, delta, 1.0, lambda2 + 1.0)
    rules = K.make_rules(
        recovery=K.REC_RECOVER,
        birth=(2.0, 2.0, K.ROLE_HEAL, K.ROLE_HEAL, K.ROLE_HEAL),
        infection=(2.0, 2.0, K.ROLE_INFECT, K.ROLE_INFECT, K.ROLE_INFECT),
    )
    chunks = _gen_chunks(rates, init.dim, init.side, interaction_range,
                         horizon, seed)
    traj, _, _, _ = _replay_chunks(chunks, init, rules, interaction_range,
                                   horizon)
    return traj


def apply_event(cfg: Configuration, ev: Event) -> Configuration:
    """Apply a single event with the standard update rules; at most one
    vertex changes.

    Death empties an occupied vertex; recovery turns 2 into 1; a birth arrow
    copies the parent's type onto an empty target; an infection arrow turns
    a healthy target of an infected source into 2.
    """
    dim, side = cfg.dim, cfg.side
    x = cfg.state(ev.source)
    if ev.kind == KIND_DEATH:
        return cfg.with_state(ev.source, 0) if x != 0 else cfg
    if ev.kind == KIND_RECOVERY:
        return cfg.with_state(ev.source, 1) if x == 2 else cfg
    y = cfg.state(ev.target)
    if ev.kind == KIND_BIRTH:
        return cfg.with_state(ev.target, x) if (x != 0 and y == 0) else cfg
    # infection arrow
    return cfg.with_state(ev.target, 2) if (x == 2 and y == 1) else cfg


def project(traj: Trajectory, mode: str) -> Trajectory:
    """Pointwise indicator trajectory of the occupied ({x: state != 0}) or
    infected ({x: state = 2}) set."""
    if mode == "occupied":
        i_old, i_new = traj.olds != 0, traj.news != 0
        init_states = traj.initial.states != 0
    elif mode == "infected":
        i_old, i_new = traj.olds == 2, traj.news == 2
        init_states = traj.initial.states == 2
    else:
        raise ValueError(f"mode must be 'occupied' or 'infected', got {mode!r}")
    init = Configuration(traj.initial.dim, traj.initial.side,
                         init_states.astype(np.uint8))
    keep = i_old != i_new
    return Trajectory(init, traj.horizon, traj.times[keep].copy(),
                      traj.vertices[keep].copy(),
                      i_old[keep].astype(np.uint8), i_new[keep].astype(np.uint8),
                      traj.event_indices[keep].copy(), traj.params)


def replay_contact(stream: EventStream, init: Configuration,
                   birth_arrows: bool = True, infection_arrows: bool = False,
                   recoveries_kill: bool = False,
                   occupied_value: int = 1) -> Trajectory:
    """Drive a two-state contact process from a stream: death marks (and
    optionally recovery marks) kill, the selected arrow kinds breed.

    The occupied state is ``occupied_value`` (1 or 2); this is the replay
    oracle used to check the projection equivalences.
    """
    b_role = K.ROLE_BIRTH if birth_arrows else K.ROLE_NONE
    i_role = K.ROLE_BIRTH if infection_arrows else K.ROLE_NONE
    rules = K.make_rules(
        recovery=K.REC_DEATH if recoveries_kill else K.REC_NONE,
        birth=(2.0, 2.0, b_role, b_role, b_role),
        infection=(2.0, 2.0, i_role, i_role, i_role),
    )
    if not np.all(np.isin(init.states, (0, occupied_value))):
        raise ValueError(f"initial states must be 0 or {occupied_value}")
    return simulate_stream(stream, init, rules)
