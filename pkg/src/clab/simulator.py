"""Finite-N stochastic system: the embedded event chain and its estimators.

The continuous-time system is uniformized, so its steady state coincides with
that of the embedded discrete-time chain simulated here.  Each event is one
of three kinds:

* with probability ``lam / (1 + lam)``   -- an arrival at a uniformly random
  station;
* with probability ``(1-p) / (1 + lam)`` -- a local service token at a
  uniformly random station (wasted if that station is empty);
* with probability ``p / (1 + lam)``     -- a central service token serving a
  station with a longest queue, ties broken uniformly (wasted only if the
  whole system is empty).

Two interchangeable engines realize this law:

* ``queue_level``       -- stations are explicit; targets come from a second
  uniform draw per event.
* ``aggregate_coupled`` -- the state is the integer aggregate vector
  ``K[i] = N * v_i`` and a *single* uniform draw per event is mapped through
  a partition of [0, 1] whose sub-interval widths are the current profile
  differences; this is the construction that makes the arrivals/local/central
  decomposition ledger exact by design.

All counters are integers (in units of 1/N), so the conservation identity
``v(t) = v(0) + a - l - c`` holds exactly, not just to float precision.

Randomness: a counter-based Philox generator seeded through
``numpy.random.SeedSequence``.  Substreams are derived as
``SeedSequence(seed, spawn_key=(index,))``; index 0 drives events, index 1
drives the sampling picks, and ``subseed(seed, k)`` exposes the same
derivation for run-to-run splits (policy comparison, sweeps).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import InvalidInputError, InvalidStateError
from .state import (
    AggregateProfile,
    Params,
    QueueVector,
    TailProfile,
    Trajectory,
    normalized_from_queues,
    queues_from_tail,
)

QUEUE_LEVEL = "queue_level"
AGGREGATE_COUPLED = "aggregate_coupled"

_EVENT_CHUNK = 1 << 22          # events drawn per block in the compiled path
_INITIAL_CAP = 1 << 10          # starting size for length-indexed arrays


@dataclass(frozen=True)
class SimConfig:
    """Protocol parameters; the defaults are the full measurement protocol
    (1e6 burn-in steps, 5e5 samples, 20 steps apart)."""

    params: Params
    seed: int
    burn_in_steps: int = 1_000_000
    n_samples: int = 500_000
    sample_spacing: int = 20
    mode: str = QUEUE_LEVEL

    def __post_init__(self):
        if self.burn_in_steps <= 0 or self.n_samples <= 0 or self.sample_spacing <= 0:
            raise InvalidInputError("burn_in_steps, n_samples and sample_spacing must be positive")
        if self.mode not in (QUEUE_LEVEL, AGGREGATE_COUPLED):
            raise InvalidInputError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class DecompositionLedger:
    """Cumulative per-coordinate event counts, in units of 1/N.

    ``a[i]``, ``l[i]``, ``c[i]`` count how many arrivals, local completions
    and central completions changed coordinate ``v_i``; the boundary entry at
    index 0 mirrors index 1.  The defining identity is
    ``N * (v(t) - v(0)) == a - l - c`` coordinatewise, exactly.
    """

    a: tuple[int, ...]
    l: tuple[int, ...]
    c: tuple[int, ...]
    n_stations: int

    def net_counts(self) -> np.ndarray:
        n = max(len(self.a), len(self.l), len(self.c))

        def pad(t):
            out = np.zeros(n, dtype=np.int64)
            out[: len(t)] = t
            return out

        return pad(self.a) - pad(self.l) - pad(self.c)

    def identity_holds(self, v_start: AggregateProfile, v_end: AggregateProfile) -> bool:
        raw = self.net_counts()
        n = max(len(v_start.v), len(v_end.v), raw.shape[0])
        net = np.zeros(n, dtype=np.int64)
        net[: raw.shape[0]] = raw

        def counts(profile):
            out = np.zeros(n, dtype=np.int64)
            vals = profile.as_array() * self.n_stations
            out[: vals.shape[0]] = np.rint(vals).astype(np.int64)
            return out

        delta = counts(v_end) - counts(v_start)
        return bool(np.array_equal(delta[1:], net[1:]))


@dataclass(frozen=True)
class SteadyStateEstimate:
    """Point estimate of the steady-state mean queue length with concentration bounds.

    ``mean`` averages the lengths of uniformly sampled stations; ``ue``/``le``
    are the 2.5%-trimmed upper and lower bounds of the sampled mean queue
    length, capturing how tightly the chain concentrates around its mean.
    """

    mean: float
    ue: float
    le: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if not self.le <= self.mean <= self.ue:
            raise InvalidStateError(
                f"bounds must bracket the mean: le={self.le}, mean={self.mean}, ue={self.ue}"
            )

    def overlaps(self, other: "SteadyStateEstimate") -> bool:
        return not (self.ue < other.le or other.ue < self.le)


def subseed(seed: int, index: int) -> int:
    """Documented substream derivation: child ``index`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _event_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0,))))


def _pick_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(1,))))


# -- single-event transition (reference form) ---------------------------------

def step(q: QueueVector, params: Params, u_type: float, u_target: float) -> QueueVector:
    """Apply one event to a queue vector given its two uniform draws.

    ``u_type`` picks the event kind through the ``lam : (1-p) : p`` partition
    of [0, 1); ``u_target`` picks the station for arrivals and local tokens,
    and indexes uniformly into the longest-queue set for central tokens.
    Tokens aimed at empty targets are wasted (the vector is returned
    unchanged).
    """
    if not (0.0 <= u_type < 1.0 and 0.0 <= u_target < 1.0):
        raise InvalidInputError("uniform draws must lie in [0, 1)")
    if len(q) != params.n_stations:
        raise InvalidInputError(f"queue vector has {len(q)} stations, params say {params.n_stations}")
    lam, p = params.lam, params.p
    n = len(q)
    thr_arr = lam / (1.0 + lam)
    thr_loc = (lam + 1.0 - p) / (1.0 + lam)
    lengths = list(q.q)
    if u_type < thr_arr:
        lengths[int(u_target * n)] += 1
    elif u_type < thr_loc:
        st = int(u_target * n)
        if lengths[st] > 0:
            lengths[st] -= 1
    else:
        longest = max(lengths)
        if longest > 0:
            ties = [i for i, x in enumerate(lengths) if x == longest]
            lengths[ties[int(u_target * len(ties))]] -= 1
    return QueueVector(tuple(lengths))


# -- chain engines (uncompiled twins of the kernels) ---------------------------

class _QueueEngine:
    """Station-level chain state; mirrors ``_kernels.queue_chain_chunk``."""

    def __init__(self, n: int, initial: np.ndarray, cap: int = _INITIAL_CAP):
        self.n = n
        self.cap = max(cap, int(initial.max()) + 64)
        self.q = initial.astype(np.int64).copy()
        self.counts = np.bincount(self.q, minlength=self.cap).astype(np.int64)
        self.maxlen = int(initial.max())
        self.total = int(initial.sum())

    def apply(self, lam: float, p: float, u_type: float, u_target: float) -> tuple[str, int, int]:
        """Apply one event; returns (kind, station, pre-event length at target)."""
        thr_arr = lam / (1.0 + lam)
        thr_loc = (lam + 1.0 - p) / (1.0 + lam)
        if u_type < thr_arr:
            st = int(u_target * self.n)
            k = int(self.q[st])
            if k + 1 >= self.cap:
                raise InvalidStateError("queue length exceeded engine capacity")
            self.q[st] = k + 1
            self.counts[k] -= 1
            self.counts[k + 1] += 1
            self.total += 1
            self.maxlen = max(self.maxlen, k + 1)
            return "arrival", st, k
        if u_type < thr_loc:
            st = int(u_target * self.n)
            k = int(self.q[st])
            if k == 0:
                return "local_wasted", st, 0
            self.q[st] = k - 1
            self.counts[k] -= 1
            self.counts[k - 1] += 1
            self.total -= 1
            if k == self.maxlen and self.counts[k] == 0:
                self.maxlen -= 1
            return "local", st, k
        if self.total == 0:
            return "central_wasted", -1, 0
        k = self.maxlen
        ties = int(self.counts[k])
        j = int(u_target * ties)
        seen = 0
        st = -1
        for cand in range(self.n):
            if self.q[cand] == k:
                if seen == j:
                    st = cand
                    break
                seen += 1
        self.q[st] = k - 1
        self.counts[k] -= 1
        self.counts[k - 1] += 1
        self.total -= 1
        if self.counts[k] == 0:
            self.maxlen -= 1
        return "central", st, k

    def aggregate_counts(self) -> np.ndarray:
        """Integer aggregate vector ``K[i] = N * v_i`` up to the current support."""
        top = self.maxlen
        at_least = np.zeros(top + 2, dtype=np.int64)
        at_least[: top + 1] = self.counts[: top + 1][::-1].cumsum()[::-1]
        K = at_least[::-1].cumsum()[::-1]
        K[0] = K[1] + self.n
        return K

    def sample_station(self, pick: float) -> int:
        return int(self.q[int(pick * self.n)])


class _AggregateEngine:
    """Aggregate-level chain state; mirrors ``_kernels.aggregate_chain_chunk``."""

    def __init__(self, n: int, initial_K: np.ndarray, cap: int = _INITIAL_CAP):
        self.n = n
        self.cap = max(cap, initial_K.shape[0] + 64)
        self.K = np.zeros(self.cap, dtype=np.int64)
        self.K[: initial_K.shape[0]] = initial_K
        self.K[0] = self.K[1] + n
        nz = np.nonzero(self.K[1:])[0]
        self.support = int(nz[-1] + 1) if nz.size else 0

    def apply(self, lam: float, p: float, u: float) -> tuple[str, int, int]:
        thr_arr = lam / (1.0 + lam)
        loc_width = (1.0 - p) / (1.0 + lam)
        K, n = self.K, self.n
        if u < thr_arr:
            xn = (u / thr_arr) * n
            J = 1
            i = 2
            while i < self.cap - 1 and K[i - 1] - K[i] > xn:
                J = i
                i += 1
            if J + 2 >= self.cap:
                raise InvalidStateError("support exceeded engine capacity")
            K[1: J + 1] += 1
            self.support = max(self.support, J)
            K[0] = K[1] + n
            return "arrival", -1, J - 1
        if u < thr_arr + loc_width:
            yn = ((u - thr_arr) / loc_width) * n
            M = 0
            i = 1
            while i < self.cap - 1 and K[i] - K[i + 1] > yn:
                M = i
                i += 1
            if M == 0:
                return "local_wasted", -1, 0
            K[1: M + 1] -= 1
            if K[self.support] == 0:
                self.support -= 1
            K[0] = K[1] + n
            return "local", -1, M
        if self.support == 0:
            return "central_wasted", -1, 0
        top = self.support
        K[1: top + 1] -= 1
        if K[top] == 0:
            self.support -= 1
        K[0] = K[1] + n
        return "central", -1, top

    def aggregate_counts(self) -> np.ndarray:
        top = self.support
        return self.K[: top + 2].copy()

    def sample_station(self, pick: float) -> int:
        t = pick * self.n
        length = 0
        i = 1
        while i < self.cap - 1 and self.K[i] - self.K[i + 1] > t:
            length = i
            i += 1
        return length


def _initial_queues(cfg: SimConfig, initial) -> QueueVector:
    n = cfg.params.n_stations
    if initial is None:
        return QueueVector((0,) * n)
    if isinstance(initial, TailProfile):
        return queues_from_tail(initial, n)
    if isinstance(initial, QueueVector):
        if len(initial) != n:
            raise InvalidInputError(f"initial state has {len(initial)} stations, config says {n}")
        return initial
    raise InvalidInputError("initial state must be a QueueVector or TailProfile")


def _profile_from_counts(K: np.ndarray, n: int) -> AggregateProfile:
    arr = K.astype(np.float64) / n
    last = arr.shape[0]
    while last > 2 and arr[last - 1] == 0.0:
        last -= 1
    return AggregateProfile(tuple(arr[:last]))


def run_chain(cfg: SimConfig, n_steps: int, initial=None,
              record_stride: int = 1) -> tuple[Trajectory, DecompositionLedger]:
    """Advance ``n_steps`` events, recording the aggregate state and the ledger.

    Event times sit on the deterministic grid ``k / (N * (1 + lam))`` (the
    event process jumps at rate ``N * (1 + lam)``, so this grid is its
    law-of-large-numbers clock).  States are recorded every ``record_stride``
    events plus the initial and final ones, and the conservation identity is
    asserted at every recorded point.
    """
    if n_steps < 1:
        raise InvalidInputError("n_steps must be positive")
    params = cfg.params
    n = params.n_stations
    q0 = _initial_queues(cfg, initial)
    rng = _event_rng(cfg.seed)
    queue_mode = cfg.mode == QUEUE_LEVEL

    if queue_mode:
        engine = _QueueEngine(n, np.asarray(q0.q, dtype=np.int64))
    else:
        s0 = normalized_from_queues(q0)
        K0 = np.rint(np.append(s0.as_array(), 0.0)[::-1].cumsum()[::-1] * n).astype(np.int64)
        engine = _AggregateEngine(n, K0)

    cap = engine.cap
    arr_at = np.zeros(cap, dtype=np.int64)
    loc_at = np.zeros(cap, dtype=np.int64)
    cen_at = np.zeros(cap, dtype=np.int64)

    K_start = engine.aggregate_counts()
    dt_event = 1.0 / (n * (1.0 + params.lam))
    times = [0.0]
    states = [_profile_from_counts(K_start, n)]

    # one row of draws per event, so a shorter run is a prefix of a longer one
    if queue_mode:
        draws = rng.random((n_steps, 2))
        u_type, u_target = draws[:, 0], draws[:, 1]
    else:
        u_type = rng.random(n_steps)
        u_target = None

    def check_identity(k_now: np.ndarray):
        delta = np.zeros(cap, dtype=np.int64)
        delta[: k_now.shape[0]] = k_now
        delta[: K_start.shape[0]] -= K_start
        net = _ledger_net(arr_at, loc_at, cen_at, cap)
        if not np.array_equal(delta[1:], net[1:]):
            raise InvalidStateError("conservation ledger identity violated")

    for k in range(n_steps):
        if queue_mode:
            kind, _, level = engine.apply(params.lam, params.p, u_type[k], u_target[k])
        else:
            kind, _, level = engine.apply(params.lam, params.p, u_type[k])
        if kind == "arrival":
            arr_at[level] += 1
        elif kind == "local":
            loc_at[level] += 1
        elif kind == "central":
            cen_at[level] += 1
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            K_now = engine.aggregate_counts()
            check_identity(K_now)
            times.append((k + 1) * dt_event)
            states.append(_profile_from_counts(K_now, n))

    a_full = _suffix_from(arr_at, cap, shift=1)
    l_full = _suffix_from(loc_at, cap, shift=0)
    c_full = _suffix_from(cen_at, cap, shift=0)
    width = 2
    for arr in (a_full, l_full, c_full):
        nz = np.nonzero(arr)[0]
        if nz.size:
            width = max(width, int(nz[-1]) + 1)
    ledger = DecompositionLedger(
        a=tuple(int(x) for x in a_full[:width]),
        l=tuple(int(x) for x in l_full[:width]),
        c=tuple(int(x) for x in c_full[:width]),
        n_stations=n,
    )
    return Trajectory(tuple(times), tuple(states)), ledger


def _suffix_from(level_counts: np.ndarray, width: int, shift: int) -> np.ndarray:
    """Per-coordinate cumulative counts from per-level event counts.

    An event at level ``m`` touches coordinates ``i <= m + shift``, so the
    coordinate-``i`` counter is the suffix sum of levels ``>= i - shift``.
    """
    suffix = level_counts[::-1].cumsum()[::-1]
    out = np.zeros(width, dtype=np.int64)
    src = np.arange(1, width) - shift
    valid = src < suffix.shape[0]
    out[1:][valid] = suffix[src[valid]]
    out[0] = out[1]
    return out


def _ledger_net(arr_at, loc_at, cen_at, width) -> np.ndarray:
    return (
        _suffix_from(arr_at, width, shift=1)
        - _suffix_from(loc_at, width, shift=0)
        - _suffix_from(cen_at, width, shift=0)
    )


# -- steady-state estimation ---------------------------------------------------

def concentration_bounds(samples: np.ndarray) -> tuple[float, float]:
    """2.5%-trimmed lower/upper bounds of a sample set.

    The upper end is the smallest sample value strictly exceeded by at most
    2.5% of the samples; the lower end mirrors it from below.  These are the
    order statistics at ranks ``k`` and ``n-1-k`` with ``k = floor(0.025 n)``.
    """
    s = np.sort(samples)
    k = int(0.025 * s.shape[0])
    return float(s[k]), float(s[s.shape[0] - 1 - k])


def steady_state_estimate(cfg: SimConfig) -> SteadyStateEstimate:
    """Burn in, then sample the chain on the configured schedule.

    Each sampling epoch records the length of one uniformly chosen station
    (these average to the mean estimate) and the instantaneous mean queue
    length (whose trimmed spread gives the ``le``/``ue`` concentration
    bounds).
    """
    samples_q, samples_v1 = _collect_samples(cfg)
    mean = float(samples_q.mean())
    le, ue = concentration_bounds(samples_v1 / cfg.params.n_stations)
    return SteadyStateEstimate(mean=mean, ue=ue, le=le, n_samples=cfg.n_samples, seed=cfg.seed)


def _collect_samples(cfg: SimConfig, cap: int = _INITIAL_CAP) -> tuple[np.ndarray, np.ndarray]:
    params = cfg.params
    n = params.n_stations
    total_steps = cfg.burn_in_steps + cfg.n_samples * cfg.sample_spacing
    picks = _pick_rng(cfg.seed).random(cfg.n_samples)
    samples_q = np.zeros(cfg.n_samples, dtype=np.int64)
    samples_v1 = np.zeros(cfg.n_samples, dtype=np.int64)

    meta = np.zeros(_kernels.META_SIZE, dtype=np.int64)
    meta[_kernels.META_SPACING] = cfg.sample_spacing
    meta[_kernels.META_NEXT] = cfg.burn_in_steps + cfg.sample_spacing

    if cfg.mode == QUEUE_LEVEL:
        q = np.zeros(n, dtype=np.int64)
        counts = np.zeros(cap, dtype=np.int64)
        counts[0] = n
        rng = _event_rng(cfg.seed)
        done = 0
        while done < total_steps:
            chunk = min(_EVENT_CHUNK, total_steps - done)
            u_type = rng.random(chunk)
            u_target = rng.random(chunk)
            status = _kernels.queue_chain_chunk(
                q, counts, meta, params.lam, params.p, u_type, u_target,
                picks, samples_q, samples_v1,
            )
            if status != 0:
                if cap >= (1 << 21):
                    raise InvalidStateError("queue lengths exceeded maximum capacity")
                return _collect_samples(cfg, cap=cap * 4)
            done += chunk
    else:
        K = np.zeros(cap, dtype=np.int64)
        K[0] = n
        rng = _event_rng(cfg.seed)
        done = 0
        while done < total_steps:
            chunk = min(_EVENT_CHUNK, total_steps - done)
            u_event = rng.random(chunk)
            status = _kernels.aggregate_chain_chunk(
                K, meta, params.lam, params.p, n, u_event,
                picks, samples_q, samples_v1,
            )
            if status != 0:
                if cap >= (1 << 21):
                    raise InvalidStateError("support exceeded maximum capacity")
                return _collect_samples(cfg, cap=cap * 4)
            done += chunk

    if int(meta[_kernels.META_CURSOR]) != cfg.n_samples:
        raise InvalidStateError("sampling schedule did not complete")
    return samples_q, samples_v1


def _collect_samples_reference(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Uncompiled twin of :func:`_collect_samples`; consumes identical draws."""
    params = cfg.params
    n = params.n_stations
    total_steps = cfg.burn_in_steps + cfg.n_samples * cfg.sample_spacing
    picks = _pick_rng(cfg.seed).random(cfg.n_samples)
    samples_q = np.zeros(cfg.n_samples, dtype=np.int64)
    samples_v1 = np.zeros(cfg.n_samples, dtype=np.int64)
    rng = _event_rng(cfg.seed)
    queue_mode = cfg.mode == QUEUE_LEVEL
    if queue_mode:
        engine = _QueueEngine(n, np.zeros(n, dtype=np.int64))
    else:
        engine = _AggregateEngine(n, np.array([n, 0], dtype=np.int64))
    cursor = 0
    nxt = cfg.burn_in_steps + cfg.sample_spacing
    done = 0
    while done < total_steps:
        chunk = min(_EVENT_CHUNK, total_steps - done)
        u_type = rng.random(chunk)
        u_target = rng.random(chunk) if queue_mode else None
        for e in range(chunk):
            if queue_mode:
                engine.apply(params.lam, params.p, u_type[e], u_target[e])
            else:
                engine.apply(params.lam, params.p, u_type[e])
            done += 1
            if done == nxt and cursor < cfg.n_samples:
                samples_q[cursor] = engine.sample_station(picks[cursor])
                samples_v1[cursor] = engine.aggregate_counts()[1]
                cursor += 1
                nxt += cfg.sample_spacing
    return samples_q, samples_v1


def compare_policies(cfg: SimConfig) -> tuple[SteadyStateEstimate, SteadyStateEstimate]:
    """Estimate the configured system and its ``p = 0`` baseline side by side.

    The two runs use independent substreams derived from ``cfg.seed``; with
    any centralization the first mean should sit below the second (pure
    random service never beats longest-queue-first central service).
    """
    if cfg.params.p <= 0.0:
        raise InvalidInputError("compare_policies needs p > 0")
    baseline_params = replace(cfg.params, p=0.0)
    est_p = steady_state_estimate(replace(cfg, seed=subseed(cfg.seed, 1)))
    est_0 = steady_state_estimate(
        replace(cfg, params=baseline_params, seed=subseed(cfg.seed, 2))
    )
    return est_p, est_0
