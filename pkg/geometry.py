"""
📐 STATE-SPACE GEOMETRY
======================
The relaxed state z = (rho, v, m) in R^5, the constraint sets K and K_M,
the hull inequalities, the concave gauge D = 1 - rho^2, the wave cone
|rho| = |v| and the extraction of admissible wave-cone segments.

Convention: K = {m = rho v / 2, |rho| = 1}; K_M adds |v| <= M.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from lab_config import get_logger

logger = get_logger(__name__)

HULL_TOL = 1e-12
DEGENERACY_THRESHOLD = 1e-10
BISECTION_RTOL = 1e-10
BISECTION_MAX_ITER = 100


class DegenerateState(ValueError):
    """1 - rho^2 is too small to extract a segment."""


class EmptyTheta(ValueError):
    """The admissible set of horizontal directions came out empty."""


@dataclass(frozen=True)
class StateZ:
    rho: float
    v: Tuple[float, float] = (0.0, 0.0)
    m: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "v", (float(self.v[0]), float(self.v[1])))
        object.__setattr__(self, "m", (float(self.m[0]), float(self.m[1])))
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError(f"StateZ components must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.v[0], self.v[1], self.m[0], self.m[1]])

    @classmethod
    def from_array(cls, arr) -> "StateZ":
        a = np.asarray(arr, dtype=float).reshape(5)
        return cls(a[0], (a[1], a[2]), (a[3], a[4]))

    @classmethod
    def zero(cls) -> "StateZ":
        return cls(0.0)

    @property
    def u(self) -> Tuple[float, float]:
        """Velocity u = (v - (0, rho)) / 2."""
        return (0.5 * self.v[0], 0.5 * (self.v[1] - self.rho))

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def __add__(self, other: "StateZ") -> "StateZ":
        return StateZ.from_array(self.as_array() + other.as_array())

    def __sub__(self, other: "StateZ") -> "StateZ":
        return StateZ.from_array(self.as_array() - other.as_array())

    def __neg__(self) -> "StateZ":
        return StateZ.from_array(-self.as_array())

    def __mul__(self, scalar: float) -> "StateZ":
        return StateZ.from_array(float(scalar) * self.as_array())

    __rmul__ = __mul__


@dataclass(frozen=True)
class HullParams:
    M: float = 5.0
    margin_delta: float = 0.05

    def __post_init__(self):
        if self.M <= 1.0:
            raise ValueError(f"M={self.M} must exceed 1")
        if not 0.0 <= self.margin_delta < 1.0:
            raise ValueError(f"margin_delta={self.margin_delta} must lie in [0,1)")


class HullStatus(Enum):
    INSIDE_STRICT = "inside_strict"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class HullCheck:
    status: HullStatus
    min_slack: float
    slacks: Tuple[float, ...]
    lhs: Tuple[float, ...]
    rhs: Tuple[float, ...]
    binding: int  # 1-based index of the tightest inequality

    @property
    def inside(self) -> bool:
        return self.status is not HullStatus.OUTSIDE


class CaseTag(Enum):
    OMEGA_DOMINANT = "omega_dominant"
    OMEGA_PLUS_DOMINANT = "omega_plus_dominant"
    OMEGA_MINUS_DOMINANT = "omega_minus_dominant"
    SMALL_V = "small_v"


_BRANCH_TAGS = (CaseTag.OMEGA_DOMINANT, CaseTag.OMEGA_PLUS_DOMINANT, CaseTag.OMEGA_MINUS_DOMINANT)


@dataclass(frozen=True)
class SegmentResult:
    direction: StateZ
    lambda_max: float
    margin: float
    case_tag: CaseTag
    mbar_branch: CaseTag
    omega: Tuple[float, float]

    @property
    def zbar(self) -> StateZ:
        return self.direction * self.lambda_max


# --------------------------------------------------------------------------
# Hull inequalities
# --------------------------------------------------------------------------

def hull_terms(Z: np.ndarray, M: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left sides, right sides and normalized slacks of the five hull inequalities.

    ``Z`` has shape (..., 5). Slacks: 1-|rho|, the raw Khull:2 gap,
    the Khull:3 gap over M^2, and the Khull:4/5 gaps over M/2.
    """
    Z = np.asarray(Z, dtype=float)
    rho = Z[..., 0]
    v = Z[..., 1:3]
    m = Z[..., 3:5]
    D = 1.0 - rho * rho

    lhs = np.stack([
        np.abs(rho),
        np.linalg.norm(m - 0.5 * rho[..., None] * v, axis=-1),
        np.sum(v * v, axis=-1),
        np.linalg.norm(m - 0.5 * v, axis=-1),
        np.linalg.norm(m + 0.5 * v, axis=-1),
    ], axis=-1)
    rhs = np.stack([
        np.ones_like(rho),
        0.5 * D,
        M * M - D,
        0.5 * M * (1.0 - rho),
        0.5 * M * (1.0 + rho),
    ], axis=-1)
    scale = np.array([1.0, 1.0, M * M, 0.5 * M, 0.5 * M])
    slacks = (rhs - lhs) / scale
    return lhs, rhs, slacks


def hull_min_slack(Z: np.ndarray, M: float) -> np.ndarray:
    return hull_terms(Z, M)[2].min(axis=-1)


def classify_slack(min_slack: float) -> HullStatus:
    if min_slack > HULL_TOL:
        return HullStatus.INSIDE_STRICT
    if min_slack >= -HULL_TOL:
        return HullStatus.BOUNDARY
    return HullStatus.OUTSIDE


def hull_contains(z: StateZ, params: HullParams) -> HullCheck:
    lhs, rhs, slacks = hull_terms(z.as_array(), params.M)
    binding = int(np.argmin(slacks))
    min_slack = float(slacks[binding])
    return HullCheck(
        status=classify_slack(min_slack),
        min_slack=min_slack,
        slacks=tuple(float(s) for s in slacks),
        lhs=tuple(float(x) for x in lhs),
        rhs=tuple(float(x) for x in rhs),
        binding=binding + 1,
    )


def in_constraint_set(z: StateZ, params: HullParams, tol: float = 1e-12) -> bool:
    rho = z.rho
    v = np.array(z.v)
    m = np.array(z.m)
    return bool(
        abs(abs(rho) - 1.0) <= tol
        and np.linalg.norm(m - 0.5 * rho * v) <= tol
        and np.linalg.norm(v) <= params.M + tol
    )


# --------------------------------------------------------------------------
# Gauge and wave cone
# --------------------------------------------------------------------------

GAUGE_DEGREE = 2


def gauge_D(z: StateZ) -> float:
    return max(0.0, 1.0 - z.rho * z.rho)


def gauge_D_array(rho: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.asarray(rho) ** 2)


def gauge_G(z: StateZ) -> np.ndarray:
    return np.array([-2.0 * z.rho, 0.0, 0.0, 0.0, 0.0])


def gauge_H(w: StateZ) -> float:
    return w.rho * w.rho


def in_wave_cone(zbar: StateZ, tol: float = 1e-12) -> bool:
    gap = abs(abs(zbar.rho) - float(np.hypot(*zbar.v)))
    return gap <= tol * (1.0 + zbar.norm())


# --------------------------------------------------------------------------
# Segments
# --------------------------------------------------------------------------

def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


def _segment_directions(Z: np.ndarray, M: float):
    """Horizontal direction e and flux part m-bar for each state."""
    rho = Z[:, 0]
    v = Z[:, 1:3]
    m = Z[:, 3:5]
    D = 1.0 - rho * rho

    omega = 2.0 * (m - 0.5 * rho[:, None] * v) / D[:, None]
    omega_plus = 2.0 * (m + 0.5 * v) / (M * (1.0 + rho))[:, None]
    omega_minus = 2.0 * (m - 0.5 * v) / (M * (1.0 - rho))[:, None]

    n_omega = np.linalg.norm(omega, axis=1)
    theta_omega = np.where(n_omega > 0.0, np.arctan2(omega[:, 1], omega[:, 0]), 0.0)

    speed = np.linalg.norm(v, axis=1)
    small_v = speed < np.abs(rho)
    restricted = ~small_v & (speed > 0.0)

    theta_e = theta_omega.copy()
    if np.any(restricted):
        r = restricted
        R = M * M - speed[r] ** 2 - D[r]
        A = rho[r] - R / (2.0 * (1.0 + rho[r]))
        B = rho[r] + R / (2.0 * (1.0 - rho[r]))
        cos_lo = np.maximum(-1.0, A / speed[r])
        cos_hi = np.minimum(1.0, B / speed[r])
        if np.any(cos_lo > cos_hi):
            bad = int(np.count_nonzero(cos_lo > cos_hi))
            logger.error("empty direction set for admissible states", count=bad)
            raise EmptyTheta(f"{bad} state(s) produced an empty direction set")
        alpha_lo = np.arccos(cos_hi)
        alpha_hi = np.arccos(cos_lo)
        phi_v = np.arctan2(v[r, 1], v[r, 0])
        alpha = _wrap_angle(theta_omega[r] - phi_v)
        sign = np.where(alpha >= 0.0, 1.0, -1.0)
        theta_e[r] = phi_v + sign * np.clip(np.abs(alpha), alpha_lo, alpha_hi)

    e = np.stack([np.cos(theta_e), np.sin(theta_e)], axis=1)

    n_plus = np.linalg.norm(omega_plus, axis=1)
    n_minus = np.linalg.norm(omega_minus, axis=1)
    use_zero = n_omega >= np.maximum(n_plus, n_minus)
    use_plus = ~use_zero & (n_plus >= n_minus)
    use_minus = ~use_zero & ~use_plus

    mbar = np.empty_like(m)
    mbar[use_zero] = (0.5 * (v[use_zero] + rho[use_zero][:, None] * e[use_zero])
                      - rho[use_zero][:, None] * omega[use_zero])
    mbar[use_plus] = -0.5 * e[use_plus] + 0.5 * M * omega_plus[use_plus]
    mbar[use_minus] = 0.5 * e[use_minus] - 0.5 * M * omega_minus[use_minus]

    branch = np.where(use_zero, 0, np.where(use_plus, 1, 2))
    return e, mbar, branch, small_v, omega


def _feasible(W: np.ndarray, M: float, delta: float) -> np.ndarray:
    s = hull_min_slack(W, M)
    return (s > HULL_TOL) & (s >= delta)


def lambda_segments(Z: np.ndarray, params: HullParams):
    """Batched segment extraction.

    Returns ``(directions (N,5), lambda_max (N,), margin (N,), branch (N,), small_v (N,))``.
    ``branch`` codes 0/1/2 for the omega, omega+ and omega- flux choices.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    D = 1.0 - Z[:, 0] ** 2
    if np.any(D < DEGENERACY_THRESHOLD):
        raise DegenerateState(
            f"{int(np.count_nonzero(D < DEGENERACY_THRESHOLD))} state(s) with 1-rho^2 < {DEGENERACY_THRESHOLD}")

    M, delta = params.M, params.margin_delta
    e, mbar, branch, small_v, _ = _segment_directions(Z, M)
    directions = np.column_stack([np.ones(len(Z)), e, mbar])

    lo = np.zeros(len(Z))
    hi = 1.0 - np.abs(Z[:, 0])
    for _ in range(BISECTION_MAX_ITER):
        active = (hi - lo) > BISECTION_RTOL * hi
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        step = mid[:, None] * directions
        ok = _feasible(Z + step, M, delta) & _feasible(Z - step, M, delta)
        ok &= active
        lo = np.where(ok, mid, lo)
        hi = np.where(active & ~ok, mid, hi)

    step = lo[:, None] * directions
    margin = np.minimum(hull_min_slack(Z + step, M), hull_min_slack(Z - step, M))
    return directions, lo, margin, branch, small_v


def lambda_segment(z: StateZ, params: HullParams) -> SegmentResult:
    """Largest wave-cone segment [z - lambda d, z + lambda d] inside the hull with margin."""
    if 1.0 - z.rho * z.rho < DEGENERACY_THRESHOLD:
        raise DegenerateState(f"1-rho^2 = {1.0 - z.rho * z.rho:.3e} below {DEGENERACY_THRESHOLD}")

    Z = z.as_array()[None, :]
    directions, lam, margin, branch, small_v = lambda_segments(Z, params)
    _, _, _, _, omega = _segment_directions(Z, params.M)

    mbar_branch = _BRANCH_TAGS[int(branch[0])]
    return SegmentResult(
        direction=StateZ.from_array(directions[0]),
        lambda_max=float(lam[0]),
        margin=float(margin[0]),
        case_tag=CaseTag.SMALL_V if bool(small_v[0]) else mbar_branch,
        mbar_branch=mbar_branch,
        omega=(float(omega[0, 0]), float(omega[0, 1])),
    )
