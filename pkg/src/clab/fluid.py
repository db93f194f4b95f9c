"""Deterministic fluid dynamics of the aggregate state.

The aggregate profile evolves by

    dv_i/dt = lam * (v_{i-1} - v_i) - (1 - p) * (v_i - v_{i+1}) - g_i(v)

where the central-server term ``g_i`` equals ``p`` while ``v_i > 0``, throttles
to ``min(lam * v_{i-1}, p)`` when ``v_i`` sits at zero below positive mass, and
vanishes once ``v_{i-1}`` is zero as well.  The switch at ``v_i == 0`` makes the
right-hand side discontinuous, so the integrator is a fixed-step explicit Euler
scheme with a feasibility projection after every step (clip to the nonnegative
orthant, restore nonincreasing differences, re-impose ``v_0 = v_1 + 1``);
adaptive stiff solvers have nothing to offer here since all rates are bounded
by ``lam + 1``.

The same drift in the tail representation (``drift_s``) is provided for the
contraction diagnostics: the aggregate drift is one-sided Lipschitz under the
weighted inner product, while the tail drift is not, and ``osl_gap`` measures
exactly that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    InvalidInputError,
    NonConvergenceError,
    NumericalBlowUpError,
    TruncationError,
)
from .invariant import CASE_P_ZERO, classify_case, critical_index, invariant_profile
from .state import (
    AggregateProfile,
    Params,
    TailProfile,
    Trajectory,
    weighted_sq_distance,
)

DEFAULT_ZERO_TOL = 1e-12
MIN_TRUNC_DIM = 64


@dataclass(frozen=True)
class DriftVector:
    """One drift evaluation; entries beyond the stored length are zero.

    For the aggregate representation the boundary coordinate is tied to the
    first one (``f[0] == f[1]``, mirroring ``v_0 = v_1 + 1``); for the tail
    representation ``f[0] == 0`` since ``s_0`` is pinned at 1.
    """

    f: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(float(x) for x in self.f))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.f, dtype=np.float64)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_array()))) if self.f else 0.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    ``trunc_dim`` is the stored dimension (resolved automatically for p > 0);
    ``zero_tol`` is the threshold under which a coordinate counts as zero in
    the central-server case split -- far below ``dt * (lam + 1)`` so the split
    is stable against projection round-off.
    """

    horizon: float
    dt: float = 1e-3
    trunc_dim: int | None = None
    zero_tol: float = DEFAULT_ZERO_TOL
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if self.horizon <= 0.0:
            raise InvalidInputError(f"horizon must be positive, got {self.horizon}")
        if self.trunc_dim is not None and self.trunc_dim < 2:
            raise InvalidInputError("trunc_dim must be at least 2")
        if not 0.0 < self.zero_tol < self.dt:
            raise InvalidInputError("zero_tol must satisfy 0 < zero_tol < dt")
        if self.record_stride < 1:
            raise InvalidInputError("record_stride must be >= 1")


def _g_central(values: np.ndarray, i: int, lam: float, p: float, zero_tol: float) -> float:
    vi = values[i]
    vim1 = values[i - 1]
    if vi > zero_tol:
        return p
    if vim1 > zero_tol:
        return min(lam * vim1, p)
    return 0.0


def drift_v(v: AggregateProfile, params: Params, zero_tol: float = DEFAULT_ZERO_TOL) -> DriftVector:
    """Aggregate-representation drift, evaluated one coordinate past the stored support."""
    lam, p = params.lam, params.p
    vals = np.append(v.as_array(), [0.0, 0.0])
    n = len(v.v)
    f = np.zeros(n + 1)
    for i in range(1, n + 1):
        g = _g_central(vals, i, lam, p, zero_tol)
        f[i] = lam * (vals[i - 1] - vals[i]) - (1.0 - p) * (vals[i] - vals[i + 1]) - g
    f[0] = f[1]
    return DriftVector(tuple(f[: _stored_len(f)]))


def drift_s(s: TailProfile, params: Params, zero_tol: float = DEFAULT_ZERO_TOL) -> DriftVector:
    """Tail-representation drift; the central term splits on whether ``s_i`` and
    its neighbours carry mass (this is the four-case structure whose jump at
    ``s_{i+1} -> 0`` breaks one-sided Lipschitz continuity)."""
    lam, p = params.lam, params.p
    vals = np.append(s.as_array(), [0.0, 0.0])
    n = len(s.s)
    f = np.zeros(n + 1)
    for i in range(1, n + 1):
        si = vals[i]
        if si > zero_tol:
            g = 0.0 if vals[i + 1] > zero_tol else p - min(lam * si, p)
        else:
            g = min(lam * vals[i - 1], p) if vals[i - 1] > zero_tol else 0.0
        f[i] = lam * (vals[i - 1] - vals[i]) - (1.0 - p) * (vals[i] - vals[i + 1]) - g
    f[0] = 0.0
    return DriftVector(tuple(f[: _stored_len(f)]))


def _stored_len(f: np.ndarray) -> int:
    last = len(f)
    while last > 2 and f[last - 1] == 0.0:
        last -= 1
    return last


def euler_project_step_reference(values: np.ndarray, params: Params, dt: float,
                                 zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
    """Readable single-step definition; the compiled kernel is pinned to this in tests.

    ``values[0]`` is the boundary coordinate (kept at ``values[1] + 1``).
    """
    lam, p = params.lam, params.p
    D = values.shape[0]
    out = values.copy()
    f = np.zeros(D)
    ext = np.append(values, 0.0)
    for i in range(1, D):
        g = _g_central(ext, i, lam, p, zero_tol)
        f[i] = lam * (ext[i - 1] - ext[i]) - (1.0 - p) * (ext[i] - ext[i + 1]) - g
    out[1:] = np.maximum(values[1:] + dt * f[1:], 0.0)
    prev = 0.0
    for i in range(D - 1, 0, -1):
        tail = out[i + 1] if i + 1 < D else 0.0
        d = min(max(out[i] - tail, prev), 1.0)
        out[i] = tail + d
        prev = d
    out[0] = out[1] + 1.0
    return out


def _resolve_dim(v0: AggregateProfile, params: Params, cfg: IntegratorConfig) -> int:
    needed = len(v0.v) + 1
    if cfg.trunc_dim is not None:
        if cfg.trunc_dim < needed:
            raise TruncationError(
                f"trunc_dim={cfg.trunc_dim} cannot hold an initial state of support {len(v0.v)}"
            )
        return cfg.trunc_dim
    if classify_case(params) == CASE_P_ZERO:
        raise InvalidInputError(
            "p=0 needs an explicit trunc_dim; the stored tail mass beyond index D "
            "is bounded by lam**D / (1 - lam)"
        )
    return max(needed, critical_index(params) + 10, MIN_TRUNC_DIM)


def _state_array(v0: AggregateProfile, dim: int) -> np.ndarray:
    arr = np.zeros(dim)
    arr[: len(v0.v)] = v0.as_array()
    return arr


def _profile_from_array(arr: np.ndarray) -> AggregateProfile:
    last = arr.shape[0]
    while last > 2 and arr[last - 1] == 0.0:
        last -= 1
    return AggregateProfile(tuple(arr[:last]))


def integrate(v0: AggregateProfile, params: Params, cfg: IntegratorConfig) -> Trajectory:
    """Integrate the fluid model from ``v0`` over ``cfg.horizon``.

    Every recorded state satisfies the aggregate-profile invariants; states
    are recorded every ``cfg.record_stride`` steps plus the initial and final
    ones.
    """
    dim = _resolve_dim(v0, params, cfg)
    V = _state_array(v0, dim)
    n_steps = max(1, round(cfg.horizon / cfg.dt))
    times = [0.0]
    states = [_profile_from_array(V)]
    done = 0
    while done < n_steps:
        chunk = min(cfg.record_stride, n_steps - done)
        _kernels.fluid_steps(V, params.lam, params.p, cfg.dt, chunk, cfg.zero_tol)
        done += chunk
        if not np.all(np.isfinite(V)):
            raise NumericalBlowUpError(f"non-finite state after {done} steps")
        times.append(done * cfg.dt)
        states.append(_profile_from_array(V))
    return Trajectory(tuple(times), tuple(states))


def settle_to_invariant(v0: AggregateProfile, params: Params, cfg: IntegratorConfig,
                        tol: float) -> tuple[float, AggregateProfile]:
    """Integrate until within ``tol`` (weighted distance) of the invariant state.

    Returns the first grid time at which the tolerance is met and the state
    there; raises :class:`NonConvergenceError` (carrying the final distance)
    if the horizon runs out first.
    """
    dim = _resolve_dim(v0, params, cfg)
    inv = invariant_profile(params)
    target = np.zeros(dim)
    tgt = inv.v_inv.as_array()
    if tgt.shape[0] > dim:
        raise TruncationError(f"trunc_dim={dim} cannot hold the invariant state")
    target[: tgt.shape[0]] = tgt
    V = _state_array(v0, dim)
    max_steps = max(1, round(cfg.horizon / cfg.dt))
    steps = _kernels.fluid_settle(V, params.lam, params.p, cfg.dt, max_steps,
                                  cfg.zero_tol, target, tol * tol)
    if not np.isfinite(V[1]):
        raise NumericalBlowUpError("non-finite state during settle")
    if steps < 0:
        final = math.sqrt(weighted_sq_distance(V, target))
        raise NonConvergenceError(
            f"horizon {cfg.horizon} exhausted at distance {final:.3e} (tol {tol})", final
        )
    return steps * cfg.dt, _profile_from_array(V)


def osl_gap(x, y, params: Params, rep: str = "v_form",
            osl_constant: float | None = None,
            zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """One-sided-Lipschitz gap ``<x - y, D(x) - D(y)>_w - C * ||x - y||_w^2``.

    With the default constant ``C = 6 * (lam + 1 - p)`` the gap is
    non-positive for every valid pair in the aggregate representation; in the
    tail representation witnesses with positive gap exist for *any* constant,
    which is why uniqueness arguments work with aggregates.  ``osl_constant``
    overrides ``C`` to probe such witnesses.
    """
    if rep == "v_form":
        if not (isinstance(x, AggregateProfile) and isinstance(y, AggregateProfile)):
            raise InvalidInputError("v_form expects AggregateProfile arguments")
        dx, dy = drift_v(x, params, zero_tol), drift_v(y, params, zero_tol)
        xa, ya = x.as_array(), y.as_array()
    elif rep == "s_form":
        if not (isinstance(x, TailProfile) and isinstance(y, TailProfile)):
            raise InvalidInputError("s_form expects TailProfile arguments")
        dx, dy = drift_s(x, params, zero_tol), drift_s(y, params, zero_tol)
        xa, ya = x.as_array(), y.as_array()
    else:
        raise InvalidInputError(f"rep must be 'v_form' or 's_form', got {rep!r}")
    c = 6.0 * (params.lam + 1.0 - params.p) if osl_constant is None else float(osl_constant)
    n = max(xa.shape[0], ya.shape[0], len(dx.f), len(dy.f))

    def pad(a):
        out = np.zeros(n)
        out[: len(a)] = a
        return out

    diff = pad(xa) - pad(ya)
    ddiff = pad(dx.as_array()) - pad(dy.as_array())
    weights = 0.5 ** np.arange(n)
    inner = float(np.sum(diff * ddiff * weights))
    norm_sq = float(np.sum(diff * diff * weights))
    return inner - c * norm_sq


def support_index(v: AggregateProfile, eps: float) -> int:
    """Largest index ``i >= 1`` with ``v_i > eps`` (0 if none)."""
    arr = v.as_array()
    idx = np.nonzero(arr[1:] > eps)[0]
    return int(idx[-1] + 1) if idx.size else 0


def validate_drift_bound(d: DriftVector, params: Params, slack: float = 1e-9) -> bool:
    """Every drift coordinate is a difference of rates bounded by ``lam + 1``."""
    bound = params.lam + 1.0 + slack
    return bool(np.all(np.abs(d.as_array()) <= bound))
