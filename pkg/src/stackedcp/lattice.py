"""Torus geometry, neighborhoods, local fractions, transition rates and the
mesoscopic box partition.

States are encoded 0 = empty, 1 = healthy host, 2 = infected host.  Vertices
live on the d-dimensional torus (Z/MZ)^d; in one dimension they are plain
ints, in higher dimensions tuples of ints.  All types here are immutable
value data and every operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

EMPTY, HEALTHY, INFECTED = 0, 1, 2
STATES = (EMPTY, HEALTHY, INFECTED)


@dataclass(frozen=True)
class ParamSet:
    """Model parameters plus torus geometry.

    lambda1: birth rate, lambda2: infection rate, delta: recovery rate,
    interaction_range: sup-norm interaction radius L, dim: spatial dimension,
    side: torus side length M (must satisfy M >= 2L+1).
    """

    lambda1: float
    lambda2: float
    delta: float
    interaction_range: int = 1
    dim: int = 1
    side: int = 3

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if not (isinstance(self.interaction_range, int) and self.interaction_range >= 1):
            raise ValueError(f"interaction_range must be an integer >= 1, got {self.interaction_range}")
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ValueError(f"dim must be an integer >= 1, got {self.dim}")
        if not (isinstance(self.side, int) and self.side >= 2 * self.interaction_range + 1):
            raise ValueError(
                f"side must be an integer >= 2*interaction_range+1 = "
                f"{2 * self.interaction_range + 1}, got {self.side}"
            )

    @property
    def neighborhood_size(self) -> int:
        """Number of neighbors N = (2L+1)^d - 1."""
        return (2 * self.interaction_range + 1) ** self.dim - 1

    @property
    def volume(self) -> int:
        return self.side ** self.dim


def as_coords(x, dim: int, side: int) -> tuple:
    """Normalize a vertex to a tuple of coordinates reduced mod side."""
    if dim == 1 and isinstance(x, int):
        return (x % side,)
    c = tuple(int(v) % side for v in x)
    if len(c) != dim:
        raise ValueError(f"vertex {x!r} has wrong dimension, expected {dim}")
    return c


def from_coords(c: tuple, dim: int):
    """Inverse of as_coords: ints in 1d, tuples otherwise."""
    return c[0] if dim == 1 else tuple(c)


def flat_index(x, dim: int, side: int) -> int:
    """Row-major flat index of a vertex."""
    c = as_coords(x, dim, side)
    idx = 0
    for v in c:
        idx = idx * side + v
    return idx


def unflat(idx: int, dim: int, side: int):
    c = []
    for _ in range(dim):
        c.append(idx % side)
        idx //= side
    c.reverse()
    return from_coords(tuple(c), dim)


def neighbor_offsets(interaction_range: int, dim: int) -> list[tuple]:
    """Nonzero offsets of sup-norm <= L in lexicographic order."""
    L = interaction_range
    offs = [o for o in product(range(-L, L + 1), repeat=dim) if any(v != 0 for v in o)]
    return offs


@dataclass(frozen=True)
class Configuration:
    """Lattice state: a total map vertex -> {0, 1, 2} on the torus."""

    dim: int
    side: int
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.states, dtype=np.uint8).reshape(-1)
        if arr.size != self.side ** self.dim:
            raise ValueError(f"states has size {arr.size}, expected {self.side ** self.dim}")
        if arr.size and arr.max() > 2:
            raise ValueError("states must take values in {0, 1, 2}")
        arr.flags.writeable = False
        object.__setattr__(self, "states", arr)

    @classmethod
    def filled(cls, dim: int, side: int, state: int) -> "Configuration":
        if state not in STATES:
            raise ValueError(f"invalid state {state}")
        return cls(dim, side, np.full(side ** dim, state, dtype=np.uint8))

    @classmethod
    def single(cls, dim: int, side: int, x, state: int = INFECTED,
               background: int = EMPTY) -> "Configuration":
        arr = np.full(side ** dim, background, dtype=np.uint8)
        arr[flat_index(x, dim, side)] = state
        return cls(dim, side, arr)

    @classmethod
    def random(cls, dim: int, side: int, density1: float, density2: float,
               seed: int) -> "Configuration":
        """iid vertices: healthy w.p. density1, infected w.p. density2."""
        if density1 < 0 or density2 < 0 or density1 + density2 > 1:
            raise ValueError("densities must be non-negative and sum to <= 1")
        rng = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
        u = rng.random(side ** dim)
        arr = np.zeros(side ** dim, dtype=np.uint8)
        arr[u < density1 + density2] = HEALTHY
        arr[u < density2] = INFECTED
        return cls(dim, side, arr)

    def state(self, x) -> int:
        return int(self.states[flat_index(x, self.dim, self.side)])

    def with_state(self, x, state: int) -> "Configuration":
        if state not in STATES:
            raise ValueError(f"invalid state {state}")
        arr = self.states.copy()
        arr[flat_index(x, self.dim, self.side)] = state
        return Configuration(self.dim, self.side, arr)

    def vertices(self):
        return (unflat(i, self.dim, self.side) for i in range(self.states.size))

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.states))

    def infected_count(self) -> int:
        return int(np.count_nonzero(self.states == INFECTED))

    def same_geometry(self, other: "Configuration") -> bool:
        return self.dim == other.dim and self.side == other.side

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.states, other.states)

    def __hash__(self):
        return hash((self.dim, self.side, self.states.tobytes()))


def neighborhood(x, params: ParamSet) -> list:
    """All y != x within torus sup-distance L of x, in lexicographic offset
    order.  Cardinality is (2L+1)^d - 1 exactly."""
    c = as_coords(x, params.dim, params.side)
    out = []
    for off in neighbor_offsets(params.interaction_range, params.dim):
        y = tuple((a + b) % params.side for a, b in zip(c, off))
        out.append(from_coords(y, params.dim))
    return out


def local_fraction(cfg: Configuration, x, j: int, params: ParamSet) -> Fraction:
    """Exact fraction of neighbors of x in state j."""
    if j not in STATES:
        raise ValueError(f"invalid state {j}")
    if not (cfg.dim == params.dim and cfg.side == params.side):
        raise ValueError("configuration geometry does not match params")
    count = sum(1 for y in neighborhood(x, params) if cfg.state(y) == j)
    return Fraction(count, params.neighborhood_size)


def flip_rate(cfg: Configuration, x, target: int, params: ParamSet) -> float:
    """Rate of the transition current -> target at x.

    0->1 at lambda1*f1, 0->2 at lambda1*f2, 1->2 at lambda2*f2,
    1->0 and 2->0 at 1, 2->1 at delta.
    """
    if target not in STATES:
        raise ValueError(f"invalid state {target}")
    cur = cfg.state(x)
    if target == cur:
        raise ValueError(f"transition {cur}->{target} is undefined")
    if cur == EMPTY:
        j = HEALTHY if target == HEALTHY else INFECTED
        return params.lambda1 * float(local_fraction(cfg, x, j, params))
    if cur == HEALTHY:
        if target == INFECTED:
            return params.lambda2 * float(local_fraction(cfg, x, INFECTED, params))
        return 1.0
    # cur == INFECTED
    if target == EMPTY:
        return 1.0
    return params.delta


@dataclass(frozen=True)
class BoxPartition:
    """Partition of the torus into boxes 2lz + (-l, l]^d of side 2l."""

    l: int
    epsilon0: float

    def __post_init__(self):
        if not (isinstance(self.l, int) and self.l >= 1):
            raise ValueError(f"box half-side l must be an integer >= 1, got {self.l}")
        if not self.epsilon0 > 0:
            raise ValueError(f"epsilon0 must be positive, got {self.epsilon0}")

    @classmethod
    def from_scale(cls, epsilon0: float, interaction_range: int) -> "BoxPartition":
        """l = floor(epsilon0 * L); rejects degenerate boxes (l = 0)."""
        l = int(math.floor(epsilon0 * interaction_range))
        if l < 1:
            raise ValueError(
                f"epsilon0 * interaction_range = {epsilon0 * interaction_range} "
                "gives a degenerate box (l = 0)"
            )
        return cls(l, epsilon0)

    def check_side(self, side: int):
        if side % (2 * self.l) != 0:
            raise ValueError(
                f"side {side} is not divisible by box side {2 * self.l}; "
                "the partition would not tile the torus"
            )

    def n_boxes_per_axis(self, side: int) -> int:
        self.check_side(side)
        return side // (2 * self.l)


def box_of(x, part: BoxPartition, params: ParamSet):
    """Index of the unique box containing x."""
    nb = part.n_boxes_per_axis(params.side)
    l = part.l
    c = as_coords(x, params.dim, params.side)
    z = tuple(((v + l - 1) // (2 * l)) % nb for v in c)
    return from_coords(z, params.dim)


def box_vertices(z, part: BoxPartition, params: ParamSet) -> list:
    """Vertices of box z: 2lz + (-l, l]^d reduced mod side, in lex order."""
    part.check_side(params.side)
    l = part.l
    zc = as_coords(z, params.dim, part.n_boxes_per_axis(params.side)) \
        if params.dim > 1 or not isinstance(z, int) else (z % part.n_boxes_per_axis(params.side),)
    out = []
    for off in product(range(-l + 1, l + 1), repeat=params.dim):
        y = tuple((2 * l * a + b) % params.side for a, b in zip(zc, off))
        out.append(from_coords(y, params.dim))
    return out


def _circular_delta(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def max_box_pair_distance(z1, z2, part: BoxPartition, params: ParamSet) -> int:
    """Largest torus sup-distance between a vertex of box z1 and one of z2."""
    nb = part.n_boxes_per_axis(params.side)
    l = part.l
    c1 = as_coords(z1, params.dim, nb) if params.dim > 1 or not isinstance(z1, int) else (z1 % nb,)
    c2 = as_coords(z2, params.dim, nb) if params.dim > 1 or not isinstance(z2, int) else (z2 % nb,)
    best = 0
    for a, b in zip(c1, c2):
        d = _circular_delta(a, b, nb)
        md = min(2 * l * d + 2 * l - 1, params.side // 2)
        best = max(best, md)
    return best


def reduced_neighborhood(x, part: BoxPartition, params: ParamSet) -> list:
    """The union-of-boxes neighborhood: y != x such that every vertex of x's
    box is within sup-distance L of every vertex of y's box.

    Satisfies B_inf(x, (1-4*epsilon0)*L) subset N-hat_x subset N_x and is a
    union of complete boxes.
    """
    part.check_side(params.side)
    zx = box_of(x, part, params)
    out = []
    for y in neighborhood(x, params):
        zy = box_of(y, part, params)
        if max_box_pair_distance(zx, zy, part, params) <= params.interaction_range:
            out.append(y)
    return out


def sup_ball(x, radius: float, params: ParamSet) -> list:
    """y != x with torus sup-distance <= radius, lex offset order."""
    r = int(math.floor(radius))
    if r < 0:
        return []
    c = as_coords(x, params.dim, params.side)
    out = []
    for off in product(range(-r, r + 1), repeat=params.dim):
        if all(v == 0 for v in off):
            continue
        y = tuple((a + b) % params.side for a, b in zip(c, off))
        out.append(from_coords(y, params.dim))
    return out
