"""
🌀 MIXING-ZONE SUBSOLUTION
=========================
The coarse-grained state (rho, v, m) around a mixing interface. Units are
normalized so that the density jump and the mobility are one; the mixing
zone at time t is the strip |x2 - f(x1, t)| < c t, parametrized by

    x(s, lam, t) = (s, f(s, t) + c lam t),   Jacobian c t.

The flat interface has a closed form. Sampled interfaces get their velocity
from a spectral Biot-Savart solve and their flux from a column-wise
integration of the conservation law.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from geometry import HullParams, StateZ, hull_min_slack
from lab_config import get_logger

logger = get_logger(__name__)

GAMMA_CLAMP_FLOOR = 0.99
NEUTRALITY_TOL = 1e-10


class InvalidTime(ValueError):
    """Time must be positive."""


class InvalidSpeed(ValueError):
    """Mixing speed outside (0, 2)."""


class OutsideMixingZone(ValueError):
    """Point or query outside the closed mixing zone."""


class NonNeutralData(ValueError):
    """Vorticity source with nonzero horizontal mean."""


class InterfaceFormatError(ValueError):
    """Malformed interface sample table."""


def check_speed(c: float):
    if not 0.0 < c < 2.0:
        raise InvalidSpeed(f"speed c={c} outside the admissible range (0,2)")


def check_time(t):
    if np.any(np.asarray(t) <= 0.0):
        raise InvalidTime("time must be positive")


# --------------------------------------------------------------------------
# Interfaces and geometry
# --------------------------------------------------------------------------

class FlatInterface:
    def f(self, s, t):
        return np.zeros(np.broadcast(np.asarray(s), np.asarray(t)).shape)

    def f_s(self, s, t):
        return self.f(s, t)

    def f_t(self, s, t):
        return self.f(s, t)

    @property
    def is_flat(self) -> bool:
        return True


class SampledInterface:
    """Interface samples f(s_j, t_i): cubic in s, linear in t."""

    def __init__(self, s_grid, t_grid, f_values):
        self.s_grid = np.asarray(s_grid, dtype=float)
        self.t_grid = np.asarray(t_grid, dtype=float)
        self.f_values = np.asarray(f_values, dtype=float)

        if self.f_values.shape != (len(self.t_grid), len(self.s_grid)):
            raise InterfaceFormatError(
                f"f has shape {self.f_values.shape}, expected ({len(self.t_grid)}, {len(self.s_grid)})")
        if len(self.s_grid) < 4 or len(self.t_grid) < 1:
            raise InterfaceFormatError("need at least 4 s-samples and 1 t-sample")
        if np.any(np.diff(self.s_grid) <= 0) or np.any(np.diff(self.t_grid) <= 0):
            raise InterfaceFormatError("s and t grids must be strictly increasing")
        if not np.all(np.isfinite(self.f_values)):
            raise InterfaceFormatError("interface samples must be finite")

        self._spline = CubicSpline(self.s_grid, self.f_values, axis=1)
        self._dspline = self._spline.derivative()

    @property
    def is_flat(self) -> bool:
        return False

    def _time_weights(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.t_grid[0], self.t_grid[-1])
        if len(self.t_grid) == 1:
            zeros = np.zeros(t.shape, dtype=int)
            return zeros, zeros, np.zeros(t.shape), 0.0 * t
        i = np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, len(self.t_grid) - 2)
        dt = self.t_grid[i + 1] - self.t_grid[i]
        w = (t - self.t_grid[i]) / dt
        return i, i + 1, w, dt

    def _blend(self, spline, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        rows = spline(s.ravel())  # (nt, N)
        i0, i1, w, _ = self._time_weights(t.ravel())
        cols = np.arange(s.size)
        out = (1.0 - w) * rows[i0, cols] + w * rows[i1, cols]
        return out.reshape(s.shape)

    def f(self, s, t):
        return self._blend(self._spline, s, t)

    def f_s(self, s, t):
        return self._blend(self._dspline, s, t)

    def f_t(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        if len(self.t_grid) == 1:
            return np.zeros(s.shape)
        rows = self._spline(s.ravel())
        i0, i1, _, dt = self._time_weights(t.ravel())
        cols = np.arange(s.size)
        return ((rows[i1, cols] - rows[i0, cols]) / dt).reshape(s.shape)


Interface = Union[FlatInterface, SampledInterface]


@dataclass
class MixingGeometry:
    c: float
    T_end: float = 1.0
    interface: Interface = field(default_factory=FlatInterface)

    def __post_init__(self):
        check_speed(self.c)
        if self.T_end <= 0.0:
            raise InvalidTime("T_end must be positive")

    def lam(self, x1, x2, t):
        """Unclamped mixing coordinate lam = (x2 - f) / (c t)."""
        check_time(t)
        return (np.asarray(x2) - self.interface.f(x1, t)) / (self.c * np.asarray(t))

    def jacobian(self, t) -> float:
        return self.c * t


def xmap(geometry: MixingGeometry, s, lam, t):
    check_time(t)
    s = np.asarray(s, dtype=float)
    x2 = geometry.interface.f(s, t) + geometry.c * np.asarray(lam) * t
    if s.ndim == 0:
        return np.array([float(s), float(x2)])
    return np.stack(np.broadcast_arrays(s, x2), axis=-1)


def xmap_inverse(geometry: MixingGeometry, x, t, tol: float = 1e-12):
    x = np.asarray(x, dtype=float)
    lam = geometry.lam(x[..., 0], x[..., 1], t)
    if np.any(np.abs(lam) > 1.0 + tol):
        raise OutsideMixingZone(f"point(s) outside the mixing zone at t={t}")
    lam = np.clip(lam, -1.0, 1.0)
    if x.ndim == 1:
        return float(x[0]), float(lam)
    return np.stack([x[..., 0], lam], axis=-1)


# --------------------------------------------------------------------------
# Flat closed form
# --------------------------------------------------------------------------

def flat_fields(c: float, x1, x2, t) -> np.ndarray:
    """Closed-form flat subsolution at arrays of points, shape (N, 5)."""
    check_speed(c)
    check_time(t)
    x2 = np.asarray(x2, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x2.shape)
    lam = np.clip(x2 / (c * t), -1.0, 1.0)
    out = np.zeros(x2.shape + (5,))
    out[..., 0] = lam
    out[..., 2] = lam
    out[..., 4] = 0.5 * (c * lam * lam + 1.0 - c)
    return out


def flat_subsolution(c: float, point: Tuple[Tuple[float, float], float]) -> StateZ:
    x, t = point
    if t <= 0.0:
        raise InvalidTime(f"t={t} must be positive")
    return StateZ.from_array(flat_fields(c, x[0], x[1], t))


def flat_gamma(c: float) -> Tuple[float, float]:
    """gamma with m - rho v / 2 = (1 - rho^2) gamma / 2 on the flat zone."""
    return (0.0, 1.0 - c)


def gamma_clamp(c: float) -> float:
    """Bound on |gamma| for sampled fields, halfway from the flat value |1-c| to the hull edge.

    Always above |1-c| and never below GAMMA_CLAMP_FLOOR.
    """
    return max(GAMMA_CLAMP_FLOOR, 0.5 * (1.0 + abs(1.0 - c)))


# --------------------------------------------------------------------------
# Biot-Savart
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BiotSavartBox:
    """Cell-centred grid: periodic in x1 over ``period``, walls at x2_lo/x2_hi."""
    x1_lo: float
    period: float
    x2_lo: float
    x2_hi: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.period <= 0.0 or self.x2_hi <= self.x2_lo:
            raise ValueError("empty Biot-Savart box")
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError("Biot-Savart grid needs at least 4 cells per side")

    @property
    def dx1(self) -> float:
        return self.period / self.n1

    @property
    def dx2(self) -> float:
        return (self.x2_hi - self.x2_lo) / self.n2

    @property
    def x1(self) -> np.ndarray:
        return self.x1_lo + (np.arange(self.n1) + 0.5) * self.dx1

    @property
    def x2(self) -> np.ndarray:
        return self.x2_lo + (np.arange(self.n2) + 0.5) * self.dx2

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Arrays of shape (n2, n1)."""
        X1, X2 = np.meshgrid(self.x1, self.x2)
        return X1, X2

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Wavenumbers on the doubled (odd/even extended) domain, shape (2 n2, n1)."""
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.n1, d=self.dx1)
        k2 = 2.0 * np.pi * np.fft.fftfreq(2 * self.n2, d=self.dx2)
        K2, K1 = np.meshgrid(k2, k1, indexing="ij")
        return K1, K2


def _nyquist_free(k: np.ndarray, n: int) -> np.ndarray:
    k = k.copy()
    if n % 2 == 0:
        k[np.isclose(np.abs(k), np.max(np.abs(k)))] = 0.0
    return k


def _extend(a: np.ndarray, odd: bool) -> np.ndarray:
    mirrored = a[::-1, :]
    return np.concatenate([a, -mirrored if odd else mirrored], axis=0)


def spectral_dx1(a: np.ndarray, box: BiotSavartBox) -> np.ndarray:
    k1 = _nyquist_free(2.0 * np.pi * np.fft.fftfreq(box.n1, d=box.dx1), box.n1)
    return np.real(np.fft.ifft(1j * k1[None, :] * np.fft.fft(a, axis=1), axis=1))


def biot_savart_velocity(rho_grid: np.ndarray, box: BiotSavartBox,
                         vorticity: Optional[np.ndarray] = None) -> np.ndarray:
    """Velocity with curl u = -d1 rho and div u = 0, shape (2, n2, n1).

    The stream function vanishes on both walls (odd extension in x2).
    A precomputed ``vorticity`` is used instead of -d1 rho when given.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    if rho_grid.shape != (box.n2, box.n1):
        raise ValueError(f"rho grid shape {rho_grid.shape} does not match box ({box.n2}, {box.n1})")

    if vorticity is None:
        omega = -spectral_dx1(rho_grid, box)
    else:
        omega = np.asarray(vorticity, dtype=float)
        line_means = omega.mean(axis=1)
        if np.max(np.abs(line_means)) > NEUTRALITY_TOL * max(1.0, float(np.max(np.abs(omega)))):
            raise NonNeutralData(
                f"vorticity has horizontal mean {np.max(np.abs(line_means)):.3e} on some line")

    K1, K2 = box.wavenumbers()
    k_sq = K1 ** 2 + K2 ** 2
    k_sq[0, 0] = 1.0

    omega_hat = np.fft.fft2(_extend(omega, odd=True))
    psi_hat = -omega_hat / k_sq
    psi_hat[0, 0] = 0.0

    K1d = _nyquist_free(K1, box.n1)
    K2d = _nyquist_free(K2, 2 * box.n2)
    u1 = np.real(np.fft.ifft2(-1j * K2d * psi_hat))[:box.n2]
    u2 = np.real(np.fft.ifft2(1j * K1d * psi_hat))[:box.n2]
    return np.stack([u1, u2])


def spectral_divergence(u: np.ndarray, box: BiotSavartBox) -> np.ndarray:
    """d1 u1 + d2 u2 with u1 extended evenly and u2 oddly across the walls."""
    K1, K2 = box.wavenumbers()
    K1d = _nyquist_free(K1, box.n1)
    K2d = _nyquist_free(K2, 2 * box.n2)
    u1_hat = np.fft.fft2(_extend(u[0], odd=False))
    u2_hat = np.fft.fft2(_extend(u[1], odd=True))
    div = np.real(np.fft.ifft2(1j * K1d * u1_hat + 1j * K2d * u2_hat))
    return div[:box.n2]


# --------------------------------------------------------------------------
# Subsolution fields
# --------------------------------------------------------------------------

@dataclass
class HullViolation:
    point: Tuple[float, float, float]
    slack: float


@dataclass
class SubsolutionReport:
    worst_slack: float
    worst_point: Tuple[float, float, float]
    conservation_residual: float
    gamma_clamped: int
    gamma_limit: float = 1.0
    violations: List[HullViolation] = field(default_factory=list)

    @property
    def has_violation(self) -> bool:
        return bool(self.violations)

    def to_dict(self) -> dict:
        return {
            "worst_slack": self.worst_slack,
            "worst_point": list(self.worst_point),
            "conservation_residual": self.conservation_residual,
            "gamma_clamped": self.gamma_clamped,
            "gamma_limit": self.gamma_limit,
            "violations": [{"point": list(v.point), "slack": v.slack} for v in self.violations],
        }


class SubsolutionField:
    """Pure map (x1, x2, t) -> (rho, v, m) built for one mixing geometry."""

    def __init__(self, geometry: MixingGeometry, evaluator: Callable[[np.ndarray], np.ndarray],
                 report: Optional[SubsolutionReport] = None, label: str = "flat"):
        self.geometry = geometry
        self._evaluator = evaluator
        self.report = report
        self.label = label

    def evaluate(self, X) -> np.ndarray:
        """Field at points X of shape (N, 3) as (N, 5)."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, 3)
        return self._evaluator(X)

    def __call__(self, x: Tuple[float, float], t: float) -> StateZ:
        return StateZ.from_array(self.evaluate([x[0], x[1], t])[0])

    def velocity(self, X) -> np.ndarray:
        Z = self.evaluate(X)
        return np.stack([0.5 * Z[:, 1], 0.5 * (Z[:, 2] - Z[:, 0])], axis=1)


def flat_field(geometry: MixingGeometry) -> SubsolutionField:
    c = geometry.c

    def evaluator(X):
        check_time(X[:, 2])
        return flat_fields(c, X[:, 0], X[:, 1], X[:, 2])

    return SubsolutionField(geometry, evaluator, label="flat")


class _SampledEvaluator:
    def __init__(self, geometry: MixingGeometry, box: BiotSavartBox, t_nodes: np.ndarray,
                 u_grids: np.ndarray, lam_nodes: np.ndarray, gamma: np.ndarray):
        self.geometry = geometry
        self.box = box
        self.t_nodes = t_nodes
        self.warned_times = False

        # pad one column on each side so wrapped x1 stays inside the table
        x1_pad = np.concatenate([[box.x1[0] - box.dx1], box.x1, [box.x1[-1] + box.dx1]])
        u_pad = np.concatenate([u_grids[..., -1:], u_grids, u_grids[..., :1]], axis=-1)
        g_pad = np.concatenate([gamma[:, -1:, :], gamma, gamma[:, :1, :]], axis=1)

        axes_u = (t_nodes, box.x2, x1_pad)
        self._u1 = RegularGridInterpolator(axes_u, u_pad[:, 0], bounds_error=False, fill_value=None)
        self._u2 = RegularGridInterpolator(axes_u, u_pad[:, 1], bounds_error=False, fill_value=None)
        self._gamma = RegularGridInterpolator((t_nodes, x1_pad, lam_nodes), g_pad,
                                              bounds_error=False, fill_value=None)

    def _times(self, t: np.ndarray) -> np.ndarray:
        """Clamp to the sampled time range; the first clamp of an evaluator is logged."""
        t_lo, t_hi = self.t_nodes[0], self.t_nodes[-1]
        outside = (t < t_lo) | (t > t_hi)
        if not self.warned_times and np.any(outside):
            self.warned_times = True
            logger.warning("times outside the sampled range are clamped",
                           points=int(np.count_nonzero(outside)), t_range=(float(t_lo), float(t_hi)),
                           t_min=float(np.min(t)), t_max=float(np.max(t)))
        return np.clip(t, t_lo, t_hi)

    def _wrap(self, x1):
        return self.box.x1_lo + np.mod(x1 - self.box.x1_lo, self.box.period)

    def velocity(self, X) -> np.ndarray:
        t = self._times(X[:, 2])
        pts = np.column_stack([t, X[:, 1], self._wrap(X[:, 0])])
        return np.stack([self._u1(pts), self._u2(pts)], axis=1)

    def __call__(self, X) -> np.ndarray:
        check_time(X[:, 2])
        geo = self.geometry
        lam = geo.lam(X[:, 0], X[:, 1], X[:, 2])
        rho = np.clip(lam, -1.0, 1.0)
        u = self.velocity(X)

        out = np.empty((len(X), 5))
        out[:, 0] = rho
        out[:, 1] = 2.0 * u[:, 0]
        out[:, 2] = 2.0 * u[:, 1] + rho
        out[:, 3:5] = 0.5 * rho[:, None] * out[:, 1:3]

        inside = np.abs(lam) < 1.0
        if np.any(inside):
            t = self._times(X[inside, 2])
            pts = np.column_stack([t, self._wrap(X[inside, 0]), lam[inside]])
            gamma2 = self._gamma(pts)
            out[inside, 4] += 0.5 * (1.0 - rho[inside] ** 2) * gamma2
        return out


def _density_on_box(geometry: MixingGeometry, box: BiotSavartBox, t: float) -> np.ndarray:
    X1, X2 = box.mesh()
    return np.clip(geometry.lam(X1, X2, t), -1.0, 1.0)


def sampled_subsolution(geometry: MixingGeometry, params: HullParams,
                        box: Optional[BiotSavartBox] = None,
                        t_nodes: Optional[np.ndarray] = None,
                        n_lam: int = 129) -> SubsolutionField:
    """Subsolution for a sampled interface; the hull is reported, not guaranteed."""
    interface = geometry.interface
    if box is None:
        reach = geometry.c * geometry.T_end + 2.0
        if isinstance(interface, SampledInterface):
            f_lo, f_hi = float(interface.f_values.min()), float(interface.f_values.max())
            x1_lo, period = interface.s_grid[0], interface.s_grid[-1] - interface.s_grid[0]
        else:
            f_lo = f_hi = 0.0
            x1_lo, period = -4.0, 8.0
        box = BiotSavartBox(x1_lo, period, f_lo - reach, f_hi + reach, 128, 256)
    if t_nodes is None:
        t_nodes = np.linspace(geometry.T_end / 8.0, geometry.T_end, 8)
    t_nodes = np.asarray(t_nodes, dtype=float)
    check_time(t_nodes)

    c = geometry.c
    limit = gamma_clamp(c)
    lam_nodes = np.linspace(-1.0, 1.0, n_lam)
    x1 = box.x1
    u_grids = np.empty((len(t_nodes), 2, box.n2, box.n1))
    gamma = np.empty((len(t_nodes), box.n1, n_lam))
    clamped = 0

    for n, t in enumerate(t_nodes):
        rho_grid = _density_on_box(geometry, box, t)
        u = biot_savart_velocity(rho_grid, box)
        u_grids[n] = u
        du1 = spectral_dx1(u[0], box)

        interp = lambda a: RegularGridInterpolator((box.x2, x1), a, bounds_error=False, fill_value=None)
        u1_i, u2_i, du1_i = interp(u[0]), interp(u[1]), interp(du1)

        S, L = np.meshgrid(x1, lam_nodes, indexing="ij")
        f = interface.f(S, t)
        X2 = f + c * L * t
        pts = np.column_stack([X2.ravel(), S.ravel()])
        u1 = u1_i(pts).reshape(S.shape)
        u2 = u2_i(pts).reshape(S.shape)
        du1dx1 = du1_i(pts).reshape(S.shape)

        rho = L
        drho_dt = -interface.f_t(S, t) / (c * t) - L / t
        drho_dx1 = -interface.f_s(S, t) / (c * t)
        integrand = -drho_dt - drho_dx1 * u1 - rho * du1dx1

        # dx2 = c t dlam along a column
        m2 = (0.5 - u2[:, :1]) + c * t * cumulative_trapezoid(integrand, lam_nodes, axis=1, initial=0.0)
        v2 = 2.0 * u2 + rho
        denom = 0.5 * (1.0 - rho ** 2)
        g = np.empty_like(m2)
        g[:, 1:-1] = (m2[:, 1:-1] - 0.5 * rho[:, 1:-1] * v2[:, 1:-1]) / denom[:, 1:-1]
        g[:, 0] = 2.0 * g[:, 1] - g[:, 2]
        g[:, -1] = 2.0 * g[:, -2] - g[:, -3]

        over = np.abs(g) > limit
        clamped += int(np.count_nonzero(over))
        gamma[n] = np.clip(g, -limit, limit)

    evaluator = _SampledEvaluator(geometry, box, t_nodes, u_grids, lam_nodes, gamma)
    subsolution = SubsolutionField(geometry, evaluator, label="sampled")
    subsolution.report = _subsolution_report(
        subsolution, params, (box.x1_lo, box.x1_lo + box.period), t_nodes, clamped, gamma_limit=limit)
    if clamped:
        logger.warning("gamma clamped on sampled subsolution", points=clamped, limit=limit)
    return subsolution


def _subsolution_report(field: SubsolutionField, params: HullParams, s_range: Tuple[float, float],
                        t_nodes: np.ndarray, clamped: int, n_s: int = 16, n_lam: int = 15,
                        spacing: float = 1e-4, gamma_limit: float = 1.0) -> SubsolutionReport:
    geo = field.geometry
    s = np.linspace(s_range[0], s_range[1], n_s, endpoint=False)
    lam = np.linspace(-0.9, 0.9, n_lam)
    t_check = t_nodes[1:-1] if len(t_nodes) > 2 else t_nodes
    S, L, T = np.meshgrid(s, lam, t_check, indexing="ij")
    X2 = geo.interface.f(S, T) + geo.c * L * T
    P = np.column_stack([S.ravel(), X2.ravel(), T.ravel()])

    Z = field.evaluate(P)
    slack = hull_min_slack(Z, params.M)
    worst = int(np.argmin(slack))

    # conservation row by centered differences
    d = []
    for j in range(3):
        step = np.zeros(3)
        step[j] = spacing
        d.append((field.evaluate(P + step) - field.evaluate(P - step)) / (2.0 * spacing))
    residual = np.abs(d[2][:, 0] + d[0][:, 3] + d[1][:, 4])

    bad = np.flatnonzero(slack <= 0.0)
    bad = bad[np.argsort(slack[bad])][:10]
    violations = [HullViolation(tuple(float(p) for p in P[i]), float(slack[i])) for i in bad]
    for v in violations:
        logger.warning("hull violation on sampled subsolution", point=v.point, slack=f"{v.slack:.3e}")

    return SubsolutionReport(
        worst_slack=float(slack[worst]),
        worst_point=tuple(float(p) for p in P[worst]),
        conservation_residual=float(np.max(residual)),
        gamma_clamped=clamped,
        gamma_limit=gamma_limit,
        violations=violations,
    )


def flat_report(field: SubsolutionField, params: HullParams, window: Tuple[float, ...]) -> SubsolutionReport:
    """Hull and conservation report for the flat field on a window."""
    x1_lo, x1_hi, _, _, t_lo, t_hi = window
    geo = field.geometry
    t_nodes = np.linspace(t_lo, t_hi, 5)
    report = _subsolution_report(field, params, (x1_lo, x1_hi), t_nodes, clamped=0)
    logger.debug("flat subsolution report", c=geo.c, worst_slack=report.worst_slack)
    return report


# --------------------------------------------------------------------------
# Interface ingestion
# --------------------------------------------------------------------------

def load_interface_csv(path: Union[str, Path]) -> SampledInterface:
    """Read a ``s,t,f`` table, row-major in t then s, with a complete grid."""
    path = Path(path)
    try:
        with path.open() as fh:
            header = fh.readline().strip().replace(" ", "")
    except OSError as e:
        raise InterfaceFormatError(f"cannot read interface file {path}: {e}") from e
    if header != "s,t,f":
        raise InterfaceFormatError(f"expected header 's,t,f', got {header!r}")

    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise InterfaceFormatError(f"non-numeric interface data: {e}") from e
    if data.shape[1] != 3:
        raise InterfaceFormatError("each row needs exactly three values")

    t_grid = np.unique(data[:, 1])
    s_grid = np.unique(data[:, 0])
    if len(data) != len(t_grid) * len(s_grid):
        raise InterfaceFormatError("interface grid is incomplete")
    S = data[:, 0].reshape(len(t_grid), len(s_grid))
    T = data[:, 1].reshape(len(t_grid), len(s_grid))
    if not (np.all(S == s_grid[None, :]) and np.all(T == t_grid[:, None])):
        raise InterfaceFormatError("rows must be ordered by t, then by s")
    return SampledInterface(s_grid, t_grid, data[:, 2].reshape(len(t_grid), len(s_grid)))


def write_interface_csv(interface: SampledInterface, path: Union[str, Path]) -> Path:
    path = Path(path)
    S, T = np.meshgrid(interface.s_grid, interface.t_grid)
    rows = np.column_stack([S.ravel(), T.ravel(), interface.f_values.ravel()])
    np.savetxt(path, rows, delimiter=",", header="s,t,f", comments="", fmt="%.17g")
    return path
