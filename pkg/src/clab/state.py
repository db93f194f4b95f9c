"""State representations for a fleet of single-queue stations with a shared central server.

Three equivalent views of the same system state, plus the metrics used by
every other module:

* ``QueueVector`` -- raw per-station queue lengths (finite-N microstate).
* ``TailProfile`` -- ``s[i]`` is the fraction of stations holding at least
  ``i`` tasks; ``s[0] == 1`` always.
* ``AggregateProfile`` -- suffix sums ``v[i] = sum(s[j] for j >= i)``; the
  coordinate ``v[1]`` equals the average queue length, and ``v[0] = v[1] + 1``
  by construction.

Vectors are conceptually infinite; they are stored as finite tuples with
implicit zeros beyond the stored length, and every operation treats
out-of-range indices as zero.  All types are immutable values and all
operations are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError, InvalidStateError

# Tolerance for floating-point monotonicity checks.  Finite-N states are exact
# multiples of 1/N and pass these checks with margin.
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class Params:
    """System parameters: per-station arrival rate, centralization, fleet size.

    ``lam`` is the per-station arrival rate (the system is underloaded for
    ``lam < 1``), ``p`` is the fraction of total service capacity pooled into
    the central server, and ``n_stations`` only matters for simulation.
    """

    lam: float
    p: float
    n_stations: int = 1

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise InvalidInputError(f"lam must be in [0, 1), got {self.lam}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidInputError(f"p must be in [0, 1], got {self.p}")
        if not (isinstance(self.n_stations, int) and self.n_stations >= 1):
            raise InvalidInputError(f"n_stations must be a positive integer, got {self.n_stations}")


@dataclass(frozen=True)
class QueueVector:
    """Per-station counts of tasks that have not yet been served."""

    q: tuple[int, ...]

    def __post_init__(self):
        if len(self.q) == 0:
            raise InvalidInputError("queue vector must have at least one station")
        for x in self.q:
            if not (isinstance(x, (int, np.integer)) and x >= 0):
                raise InvalidInputError(f"queue lengths must be non-negative integers, got {x!r}")
        object.__setattr__(self, "q", tuple(int(x) for x in self.q))

    def __len__(self) -> int:
        return len(self.q)


@dataclass(frozen=True)
class TailProfile:
    """Fractions of stations with at least ``i`` tasks, ``s[0] == 1``."""

    s: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.s)
        object.__setattr__(self, "s", s)
        if len(s) == 0 or abs(s[0] - 1.0) > MONOTONE_TOL:
            raise InvalidStateError(f"tail profile must start at 1, got {s[:1]}")
        prev = s[0]
        for i, x in enumerate(s):
            if x < -MONOTONE_TOL or x > 1.0 + MONOTONE_TOL:
                raise InvalidStateError(f"s[{i}]={x} outside [0, 1]")
            if x > prev + MONOTONE_TOL:
                raise InvalidStateError(f"tail profile not nonincreasing at index {i}")
            prev = x

    def as_array(self) -> np.ndarray:
        return np.asarray(self.s, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.s)


@dataclass(frozen=True)
class AggregateProfile:
    """Suffix sums of a tail profile; ``v[1]`` is the average queue length."""

    v: tuple[float, ...]

    def __post_init__(self):
        v = tuple(float(x) for x in self.v)
        if len(v) == 1:
            v = v + (0.0,)
        object.__setattr__(self, "v", v)
        if len(v) < 2 or abs((v[0] - v[1]) - 1.0) > MONOTONE_TOL:
            raise InvalidStateError("aggregate profile must satisfy v[0] - v[1] == 1")
        ext = v + (0.0,)
        prev = None
        for i in range(len(v)):
            if v[i] < -MONOTONE_TOL:
                raise InvalidStateError(f"v[{i}]={v[i]} negative")
            d = ext[i] - ext[i + 1]
            if d < -MONOTONE_TOL or d > 1.0 + MONOTONE_TOL:
                raise InvalidStateError(f"difference v[{i}]-v[{i + 1}]={d} outside [0, 1]")
            if prev is not None and d > prev + MONOTONE_TOL:
                raise InvalidStateError(f"differences not nonincreasing at index {i}")
            prev = d

    @classmethod
    def empty(cls) -> "AggregateProfile":
        """The all-empty system: v = (1, 0)."""
        return cls((1.0, 0.0))

    @property
    def mean_queue_length(self) -> float:
        return self.v[1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.v, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.v)


ProfileLike = Union[TailProfile, AggregateProfile, Sequence[float]]


@dataclass(frozen=True)
class Trajectory:
    """A time-stamped sequence of aggregate profiles (sample path or fluid solution)."""

    times: tuple[float, ...]
    states: tuple[AggregateProfile, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))
        if len(times) == 0 or len(times) != len(self.states):
            raise InvalidInputError("trajectory needs equally many times and states, at least one")
        for a, b in zip(times, times[1:]):
            if b <= a:
                raise InvalidInputError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def final(self) -> AggregateProfile:
        return self.states[-1]


def _values(x: ProfileLike) -> np.ndarray:
    if isinstance(x, TailProfile):
        return x.as_array()
    if isinstance(x, AggregateProfile):
        return x.as_array()
    return np.asarray(x, dtype=np.float64)


def normalized_from_queues(q: QueueVector) -> TailProfile:
    """Tail profile of a queue vector: ``s[i] = #{n: q_n >= i} / N``."""
    arr = np.asarray(q.q, dtype=np.int64)
    n = arr.shape[0]
    if arr.max() == 0:
        return TailProfile((1.0,))
    counts = np.bincount(arr)                      # stations with exactly k tasks
    at_least = counts[::-1].cumsum()[::-1]         # stations with at least k tasks
    return TailProfile(tuple(at_least / n))


def aggregate_from_tail(s: TailProfile) -> AggregateProfile:
    """Suffix sums ``v[i] = sum(s[j] for j >= i)`` over the stored support."""
    arr = s.as_array()
    v = arr[::-1].cumsum()[::-1]
    return AggregateProfile(tuple(v))


def tail_from_aggregate(v: AggregateProfile) -> TailProfile:
    """Adjacent differences ``s[i] = v[i] - v[i+1]``; inverse of aggregate_from_tail."""
    arr = np.append(v.as_array(), 0.0)
    s = arr[:-1] - arr[1:]
    # drop trailing zeros but always keep s[0]
    last = len(s)
    while last > 1 and s[last - 1] == 0.0:
        last -= 1
    return TailProfile(tuple(s[:last]))


def weighted_distance(x: ProfileLike, y: ProfileLike) -> float:
    """Weighted L2 distance ``sqrt(sum |x_i - y_i|^2 / 2^i)`` over the union of supports."""
    return float(np.sqrt(weighted_sq_distance(x, y)))


def weighted_sq_distance(x: ProfileLike, y: ProfileLike) -> float:
    xa, ya = _values(x), _values(y)
    n = max(xa.shape[0], ya.shape[0])
    diff = np.zeros(n)
    diff[: xa.shape[0]] = xa
    diff[: ya.shape[0]] -= ya
    return float(np.sum(diff * diff * _half_powers(n)))


def weighted_inner(x: ProfileLike, y: ProfileLike) -> float:
    """Weighted inner product ``sum x_i * y_i / 2^i``."""
    xa, ya = _values(x), _values(y)
    n = min(xa.shape[0], ya.shape[0])
    return float(np.sum(xa[:n] * ya[:n] * _half_powers(n)))


_POWER_CACHE: dict[int, np.ndarray] = {}


def _half_powers(n: int) -> np.ndarray:
    cached = _POWER_CACHE.get(n)
    if cached is None:
        cached = 0.5 ** np.arange(n, dtype=np.float64)
        _POWER_CACHE[n] = cached
    return cached


def path_distance(a: Trajectory, b: Trajectory) -> float:
    """Sup over a common time grid of the weighted distance between states.

    Trajectories are right-continuous step functions of their stored samples;
    if the grids differ, both are resampled onto the union of grid points in
    the overlapping time range by previous-value interpolation.
    """
    t0 = max(a.times[0], b.times[0])
    t1 = min(a.times[-1], b.times[-1])
    if t1 < t0:
        raise InvalidInputError("trajectories cover disjoint time ranges")
    grid = sorted(set(t for t in a.times + b.times if t0 <= t <= t1))
    best = 0.0
    ia = ib = 0
    for t in grid:
        while ia + 1 < len(a.times) and a.times[ia + 1] <= t:
            ia += 1
        while ib + 1 < len(b.times) and b.times[ib + 1] <= t:
            ib += 1
        d = weighted_sq_distance(a.states[ia], b.states[ib])
        if d > best:
            best = d
    return float(np.sqrt(best))


# -- serialization ------------------------------------------------------------
#
# Profiles travel as JSON arrays (index 0 first) or CSV rows "i,value".

def profile_to_json(x: ProfileLike) -> str:
    return json.dumps([float(v) for v in _values(x)])


def tail_from_json(text: str) -> TailProfile:
    return TailProfile(tuple(_parse_number_list(text)))


def aggregate_from_json(text: str) -> AggregateProfile:
    return AggregateProfile(tuple(_parse_number_list(text)))


def _parse_number_list(text: str) -> list[float]:
    data = json.loads(text)
    if not isinstance(data, list) or not all(isinstance(x, (int, float)) for x in data):
        raise InvalidInputError("expected a JSON array of numbers")
    return [float(x) for x in data]


def profile_to_csv(x: ProfileLike) -> str:
    lines = ["i,value"]
    for i, v in enumerate(_values(x)):
        lines.append(f"{i},{float(v)!r}")
    return "\n".join(lines) + "\n"


def values_from_csv(text: str) -> list[float]:
    rows: list[tuple[int, float]] = []
    for line in text.strip().splitlines():
        line = line.strip()
        if not line or line.lower().startswith("i,"):
            continue
        i_str, v_str = line.split(",", 1)
        rows.append((int(i_str), float(v_str)))
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise InvalidInputError("CSV profile must cover indices 0..k exactly once")
    return [v for _, v in rows]


def queues_from_tail(s: TailProfile, n_stations: int) -> QueueVector:
    """A deterministic queue vector realizing ``s`` exactly, if one exists.

    Requires every ``n_stations * s[i]`` to be an integer (states of a finite
    system are exact multiples of 1/N).  Stations are filled longest-first.
    """
    counts = []
    for i, x in enumerate(s.s):
        c = x * n_stations
        r = round(c)
        if abs(c - r) > 1e-6:
            raise InvalidInputError(f"s[{i}]={x} is not a multiple of 1/{n_stations}")
        counts.append(int(r))
    q = [0] * n_stations
    for i in range(1, len(counts)):
        for station in range(counts[i]):
            q[station] = i
    return QueueVector(tuple(q))
