"""Closed-form fixed point of the fluid drift and the delay-scaling analytics.

For any ``(p, lam)`` the fluid drift has a unique zero.  Its tail profile
splits into four regimes:

* ``p_zero``       -- no central capacity: geometric tail ``s[i] = lam**i``.
* ``p_geq_lambda`` -- the central server alone absorbs all load: zero profile.
* ``critical``     -- ``lam == 1 - p``: arithmetic decay, support ends at
  ``floor((1 - p) / p)``.
* ``subcritical``  -- ``0 < p < lam``, ``lam != 1 - p``: geometric-minus-
  constant decay that dips to zero at a finite critical index.

The striking consequence: for any ``p > 0`` the tail has *finite* support, so
the mean queue length grows like ``log(1/(1-lam))`` instead of ``1/(1-lam)``
as the load approaches capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfiniteSupportError, UnsupportedCaseError
from .state import AggregateProfile, Params, TailProfile, aggregate_from_tail

CASE_P_ZERO = "p_zero"
CASE_P_GEQ_LAMBDA = "p_geq_lambda"
CASE_CRITICAL = "critical"
CASE_SUBCRITICAL = "subcritical"

# lam == 1 - p detection band; the subcritical formula is singular exactly there.
CRITICAL_BAND = 1e-12

# Default truncation for the p == 0 geometric tail.
P_ZERO_TAIL_EPS = 1e-15

# Absorbs float noise in floor() of analytically exact boundary indices,
# e.g. (1 - 0.2) / 0.2 == 3.9999999999999996.
_FLOOR_GUARD = 1e-9


@dataclass(frozen=True)
class InvariantProfile:
    """The fluid fixed point in both representations, plus its analytics."""

    s_inv: TailProfile
    v_inv: AggregateProfile
    case_id: str
    critical_index: int | None
    mean_queue_length: float


def classify_case(params: Params) -> str:
    if params.p == 0.0:
        return CASE_P_ZERO
    if params.p >= params.lam:
        return CASE_P_GEQ_LAMBDA
    if abs(params.lam - (1.0 - params.p)) <= CRITICAL_BAND:
        return CASE_CRITICAL
    return CASE_SUBCRITICAL


def critical_index(params: Params) -> int:
    """Last coordinate where the invariant tail profile is non-negative.

    Undefined for ``p == 0`` (the geometric tail never reaches zero).
    Returns 0 when ``p >= lam`` (the invariant profile is already empty).
    """
    case = classify_case(params)
    if case == CASE_P_ZERO:
        raise InfiniteSupportError("p=0 invariant profile has infinite support")
    if case == CASE_P_GEQ_LAMBDA:
        return 0
    if case == CASE_CRITICAL:
        return int(math.floor((1.0 - params.p) / params.p + _FLOOR_GUARD))
    ratio = params.lam / (1.0 - params.p)
    value = math.log(params.p / (1.0 - params.lam)) / math.log(ratio)
    return int(math.floor(value + _FLOOR_GUARD))


def invariant_tail(params: Params, trunc_len: int | None = None) -> TailProfile:
    """Invariant tail profile; ``trunc_len`` bounds the stored geometric tail at p=0."""
    case = classify_case(params)
    lam, p = params.lam, params.p
    if case == CASE_P_ZERO:
        if lam == 0.0:
            return TailProfile((1.0,))
        if trunc_len is None:
            trunc_len = max(1, int(math.ceil(math.log(P_ZERO_TAIL_EPS) / math.log(lam))))
        return TailProfile((1.0,) + tuple(lam ** i for i in range(1, trunc_len + 1)))
    if case == CASE_P_GEQ_LAMBDA:
        return TailProfile((1.0,))
    # Critical and subcritical tails both satisfy the one-step recursion
    # s[i] = (lam * s[i-1] - p) / (1 - p) down from s[0] = 1; building them by
    # that recursion makes the drift vanish to machine precision, which the
    # closed forms do not guarantee near the critical boundary.
    k = critical_index(params)
    s = [1.0]
    for _ in range(k):
        s.append(max(0.0, (lam * s[-1] - p) / (1.0 - p)))
    return TailProfile(tuple(s))


def invariant_profile(params: Params, trunc_len: int | None = None) -> InvariantProfile:
    """Invariant state in both representations, with case id, index, and mean."""
    case = classify_case(params)
    s = invariant_tail(params, trunc_len)
    v = aggregate_from_tail(s)
    idx = None if case == CASE_P_ZERO else critical_index(params)
    return InvariantProfile(
        s_inv=s,
        v_inv=v,
        case_id=case,
        critical_index=idx,
        mean_queue_length=mean_queue_length(params),
    )


def mean_queue_length(params: Params) -> float:
    """Average queue length at the invariant state (``v_inv[1]``).

    Computed by direct summation of the invariant tail; the p=0 geometric
    case sums analytically to ``lam / (1 - lam)``.
    """
    case = classify_case(params)
    if case == CASE_P_ZERO:
        return params.lam / (1.0 - params.lam)
    if case == CASE_P_GEQ_LAMBDA:
        return 0.0
    s = invariant_tail(params)
    return float(sum(s.s[1:]))


def closed_form_mean_queue_length(params: Params) -> float:
    """A closed-form expression for the subcritical mean, kept for cross-checks.

    Its leading coefficient is ``(1-p)(1-lam) / (1-p-lam)^2``, whereas summing
    the invariant tail's geometric series analytically gives
    ``lam(1-lam) / (1-p-lam)^2``, so the two disagree (e.g. p=0.2, lam=0.9
    gives 3.584 here versus 2.782 by summation).  Direct summation matches
    the defining recursion and the fixed-point check, so it is the value the
    rest of the package treats as ground truth.
    """
    if classify_case(params) != CASE_SUBCRITICAL:
        raise UnsupportedCaseError("closed-form mean is defined only for 0 < p < lam, lam != 1-p")
    lam, p = params.lam, params.p
    k = critical_index(params)
    ratio = lam / (1.0 - p)
    lead = (1.0 - p) * (1.0 - lam) / (1.0 - p - lam) ** 2
    return lead * (1.0 - ratio ** k) - p / (1.0 - p - lam) * k


def scaling_target(params: Params) -> float:
    """Asymptotic delay-scaling predictor ``log(1/(1-lam)) / log(1/(1-p))``.

    The mean queue length approaches this (slowly) as ``lam -> 1`` at fixed
    ``p > 0``; contrast with the ``lam/(1-lam)`` growth at ``p == 0``.
    """
    if params.p <= 0.0 or params.p >= 1.0 or params.lam <= 0.0:
        raise UnsupportedCaseError("scaling target needs 0 < p < 1 and 0 < lam < 1")
    return math.log(1.0 / (1.0 - params.lam)) / math.log(1.0 / (1.0 - params.p))
