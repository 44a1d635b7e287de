"""
📏 DIAGNOSTICS
=============
Rectangle averages in mixing coordinates, the degraded bound

    |avg rho - <L>| <= E(<L>, t) q_alpha(|x(Q, t)|),

mixing in space, volume proportions, linear residual convergence,
contour strips, power-balance convergence and velocity recovery.

Every check is read-only over a field; ``field`` is anything with
``evaluate(X) -> (N, 5)`` and a ``geometry`` (a subsolution or a FieldModel).
"""

from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from geometry import HullParams, hull_min_slack, lambda_segment
from lab_config import get_logger
from quadrature import gauss_box, panels_for
from scheme import FieldModel
from subsolution import (BiotSavartBox, InvalidTime, OutsideMixingZone, SubsolutionField,
                         biot_savart_velocity)
from waves import CubeSpec, WaveAtom, linear_rows, solve_direction

logger = get_logger(__name__)

MIXING_THRESHOLD = 1e-6
HULL_SLACK_TOL = 1e-12
HULL_OUTSIDE_FRACTION = 0.05
EXACT_RESIDUAL = 1e-12
Envelope = Callable[[np.ndarray], np.ndarray]


# --------------------------------------------------------------------------
# Error envelopes
# --------------------------------------------------------------------------

def constant_envelope(x):
    return np.ones_like(np.asarray(x, dtype=float))


def exponential_time_envelope(eps: float) -> Envelope:
    """T(t) = eps exp(-(1/t + t)/eps), zero at t = 0."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    def T(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0.0
        out[pos] = eps * np.exp(-(1.0 / t[pos] + t[pos]) / eps)
        return out
    return T


def exponential_space_envelope(eps: float) -> Envelope:
    """S(s) = eps exp(-1/(eps s)), zero at s = 0."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    def S(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0.0
        out[pos] = eps * np.exp(-1.0 / (eps * s[pos]))
        return out
    return S


@dataclass
class DegradedBoundSpec:
    """Envelopes of the degraded bound E(lam, t) q_alpha(area).

    E(lam, t) = S(1 - |lam|) T(t) and q_alpha(A) = min(1, A^alpha) / A. The
    envelopes must map [0, 1] into [0, 1] monotonically; alpha = 1 is excluded.
    """
    alpha: float = 0.0
    S_func: Envelope = constant_envelope
    T_func: Envelope = constant_envelope
    name: str = "constant"

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha={self.alpha} must lie in [0,1)")
        lattice = np.linspace(0.0, 1.0, 65)
        for label, func in (("S", self.S_func), ("T", self.T_func)):
            values = np.asarray(func(lattice), dtype=float)
            if np.any(values < 0.0) or np.any(values > 1.0):
                raise ValueError(f"{label} envelope leaves [0,1]")
            if np.any(np.diff(values) < -1e-15):
                raise ValueError(f"{label} envelope is not monotone")

    @classmethod
    def constant(cls, alpha: float = 0.0) -> "DegradedBoundSpec":
        return cls(alpha, constant_envelope, constant_envelope, "constant")

    @classmethod
    def exponential(cls, eps_space: float, eps_time: float, alpha: float = 0.0) -> "DegradedBoundSpec":
        return cls(alpha, exponential_space_envelope(eps_space), exponential_time_envelope(eps_time),
                   f"exponential({eps_space},{eps_time})")

    def E(self, lam, t):
        """Envelope product S(1 - |lam|) T(t); accepts arrays."""
        return np.asarray(self.S_func(1.0 - np.abs(lam))) * np.asarray(self.T_func(t))

    def q(self, area):
        area = np.abs(np.asarray(area, dtype=float))
        return np.minimum(1.0, area ** self.alpha) / area

    def bound(self, query: "RectangleQuery", geometry) -> float:
        """Right side of the degraded bound for one rectangle."""
        return float(self.E(query.mid_L, query.t) * self.q(query.area(geometry)))


# --------------------------------------------------------------------------
# Rectangle averages
# --------------------------------------------------------------------------

class Observable(Enum):
    DENSITY = "density"
    VELOCITY = "velocity"
    POWER_BALANCE = "power_balance"


@dataclass(frozen=True)
class RectangleQuery:
    """Rectangle S x L in mixing coordinates (s, lam) at time t; L must lie in [-1, 1]."""
    S_interval: Tuple[float, float]
    L_interval: Tuple[float, float]
    t: float

    def __post_init__(self):
        s0, s1 = self.S_interval
        l0, l1 = self.L_interval
        if not (s0 < s1 and l0 < l1):
            raise ValueError(f"empty rectangle {self.S_interval} x {self.L_interval}")
        if l0 < -1.0 or l1 > 1.0:
            raise OutsideMixingZone(f"L={self.L_interval} leaves (-1,1)")
        if self.t <= 0.0:
            raise InvalidTime(f"t={self.t} must be positive")

    @property
    def mid_L(self) -> float:
        return 0.5 * (self.L_interval[0] + self.L_interval[1])

    def area(self, geometry) -> float:
        (s0, s1), (l0, l1) = self.S_interval, self.L_interval
        return geometry.jacobian(self.t) * (s1 - s0) * (l1 - l0)

    def as_tuple(self) -> Tuple[float, ...]:
        return (*self.S_interval, *self.L_interval, self.t)


def split_velocity(Z: np.ndarray) -> np.ndarray:
    """u = (v - (0, rho)) / 2."""
    return 0.5 * np.stack([Z[:, 1], Z[:, 2] - Z[:, 0]], axis=1)


def observable_values(Z: np.ndarray, observable: Observable) -> np.ndarray:
    """Pointwise density, velocity (N, 2) or power balance |u|^2 + rho u2."""
    if observable is Observable.DENSITY:
        return Z[:, 0]
    u = split_velocity(Z)
    if observable is Observable.VELOCITY:
        return u
    return np.sum(u * u, axis=1) + Z[:, 0] * u[:, 1]


def _finest_wavelength(field) -> float:
    finest = getattr(field, "finest_wavelength", None)
    return finest() if finest is not None else np.inf


def _mixing_points(field, query: RectangleQuery, min_panels: int = 8):
    geo = field.geometry
    (s0, s1), (l0, l1) = query.S_interval, query.L_interval
    ct = geo.jacobian(query.t)
    wavelength = _finest_wavelength(field)
    panels = (panels_for(s1 - s0, wavelength, min_panels),
              panels_for(ct * (l1 - l0), wavelength, min_panels))
    S, L, W = gauss_box((s0, l0), (s1, l1), panels)
    X2 = geo.interface.f(S, query.t) + ct * L
    X = np.column_stack([S, X2, np.full(S.shape, query.t)])
    return X, W / ((s1 - s0) * (l1 - l0))


def rectangle_average(field, observable: Union[Observable, str], query: RectangleQuery,
                      min_panels: int = 8):
    """Average of an observable over x(Q, t); a float, or a 2-vector for velocity."""
    observable = Observable(observable)
    X, W = _mixing_points(field, query, min_panels)
    values = observable_values(field.evaluate(X), observable)
    if values.ndim == 2:
        return W @ values
    return float(W @ values)


def dyadic_intervals(lo: float, hi: float, levels: int = 3) -> List[Tuple[float, float]]:
    """All dyadic subintervals of [lo, hi] down to 2^levels pieces, coarsest first."""
    out = []
    for level in range(levels + 1):
        edges = np.linspace(lo, hi, 2 ** level + 1)
        out.extend((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    return out


def rectangle_family(S_range: Tuple[float, float], t: float, levels: int = 3,
                     L_range: Tuple[float, float] = (-1.0, 1.0)) -> List[RectangleQuery]:
    """Dyadic S x L rectangles; levels=3 gives 15 x 15 = 225 queries."""
    return [RectangleQuery(S, L, t)
            for S in dyadic_intervals(*S_range, levels)
            for L in dyadic_intervals(*L_range, levels)]


@dataclass
class DegradedCheckReport:
    spec_name: str
    alpha: float
    max_ratio: float
    worst_query: Optional[Tuple[float, ...]]
    queries: int
    ratios: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0

    def to_dict(self) -> dict:
        return {"spec": self.spec_name, "alpha": self.alpha, "max_ratio": self.max_ratio,
                "worst_query": list(self.worst_query) if self.worst_query else None,
                "queries": self.queries, "passed": self.passed}


def _bound_ratio(spec: DegradedBoundSpec, query: RectangleQuery, average: float, geometry) -> float:
    gap = abs(average - query.mid_L)
    bound = spec.bound(query, geometry)
    if bound > 0.0:
        return gap / bound
    return 0.0 if gap == 0.0 else np.inf


def _ratio_report(spec: DegradedBoundSpec, queries: Sequence[RectangleQuery],
                  averages: Sequence[float], geometry) -> DegradedCheckReport:
    ratios = [_bound_ratio(spec, q, a, geometry) for q, a in zip(queries, averages)]
    if not ratios:
        return DegradedCheckReport(spec.name, spec.alpha, 0.0, None, 0)
    worst = int(np.argmax(ratios))
    report = DegradedCheckReport(spec.name, spec.alpha, float(ratios[worst]),
                                 queries[worst].as_tuple(), len(queries), ratios)
    logger.info("degraded bound check", spec=spec.name, queries=len(queries),
                max_ratio=f"{report.max_ratio:.3e}")
    return report


def degraded_bound_check(field, spec: DegradedBoundSpec,
                         queries: Sequence[RectangleQuery]) -> DegradedCheckReport:
    """Ratio |avg rho - <L>| / bound for every query; the report keeps the worst one."""
    averages = [rectangle_average(field, Observable.DENSITY, q) for q in queries]
    return _ratio_report(spec, queries, averages, field.geometry)


def dyadic_family_averages(field, S_range: Tuple[float, float], t: float, levels: int = 3,
                           L_range: Tuple[float, float] = (-1.0, 1.0),
                           observable: Observable = Observable.DENSITY
                           ) -> List[Tuple[RectangleQuery, float]]:
    """Averages over the dyadic family, aggregated from the finest cells.

    Every rectangle of the family is a union of equal finest cells, so its
    average is the mean of theirs and the field is sampled once.
    """
    n = 2 ** levels
    s_edges = np.linspace(*S_range, n + 1)
    l_edges = np.linspace(*L_range, n + 1)
    cells = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            cell = RectangleQuery((s_edges[a], s_edges[a + 1]), (l_edges[b], l_edges[b + 1]), t)
            cells[a, b] = rectangle_average(field, observable, cell)

    out = []
    for level_s in range(levels + 1):
        ws = n >> level_s
        for level_l in range(levels + 1):
            wl = n >> level_l
            for i in range(0, n, ws):
                for j in range(0, n, wl):
                    query = RectangleQuery((float(s_edges[i]), float(s_edges[i + ws])),
                                           (float(l_edges[j]), float(l_edges[j + wl])), t)
                    out.append((query, float(cells[i:i + ws, j:j + wl].mean())))
    return out


def degraded_family_check(field, spec: DegradedBoundSpec, S_range: Tuple[float, float], t: float,
                          levels: int = 3, L_range: Tuple[float, float] = (-1.0, 1.0)
                          ) -> DegradedCheckReport:
    """degraded_bound_check over the dyadic rectangle family at one time slice."""
    pairs = dyadic_family_averages(field, S_range, t, levels, L_range)
    return _ratio_report(spec, [q for q, _ in pairs], [a for _, a in pairs], field.geometry)


# --------------------------------------------------------------------------
# Mixing and volume proportions
# --------------------------------------------------------------------------

Box = Tuple[float, float, float, float]


def mixing_box_family(geometry, S_range: Tuple[float, float], t: float, levels: int = 3,
                      samples: int = 33) -> List[Box]:
    """Spatial boxes x1 in a dyadic S interval, x2 inside the mixing zone over that interval."""
    ct = geometry.jacobian(t)
    boxes = []
    for s0, s1 in dyadic_intervals(*S_range, levels):
        f = geometry.interface.f(np.linspace(s0, s1, samples), t)
        for l0, l1 in dyadic_intervals(-1.0, 1.0, levels):
            x2_lo = float(np.max(f)) + ct * l0
            x2_hi = float(np.min(f)) + ct * l1
            if x2_lo < x2_hi:
                boxes.append((s0, s1, x2_lo, x2_hi))
    return boxes


@dataclass
class MixingReport:
    """Boxes where one of the two fluid integrals fell under the threshold."""
    t: float
    boxes: int
    failures: List[Tuple[Box, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"t": self.t, "boxes": self.boxes, "passed": self.passed,
                "failures": [{"box": list(b), "integral": which} for b, which in self.failures]}


def mixing_check(field, t: float, boxes: Sequence[Box], amplitude: float = 1.0,
                 panels: int = 16) -> MixingReport:
    """Both integrals of 1 - rho and 1 + rho must exceed the threshold on every box.

    The rule is not refined to the atom wavelength: the integrals are only
    compared against a threshold far above the quadrature error.
    """
    report = MixingReport(t, len(boxes))
    for box in boxes:
        x1_lo, x1_hi, x2_lo, x2_hi = box
        area = (x1_hi - x1_lo) * (x2_hi - x2_lo)
        X1, X2, W = gauss_box((x1_lo, x2_lo), (x1_hi, x2_hi), (panels, panels))
        rho = field.evaluate(np.column_stack([X1, X2, np.full(X1.shape, t)]))[:, 0]
        threshold = MIXING_THRESHOLD * area * amplitude
        if W @ (1.0 - rho) <= threshold:
            report.failures.append((box, "1-rho"))
        if W @ (1.0 + rho) <= threshold:
            report.failures.append((box, "1+rho"))
    if report.failures:
        logger.warning("mixing check failed", t=t, failures=len(report.failures), boxes=len(boxes))
    return report


@dataclass
class VolumeProportion:
    plus: float
    minus: float
    band_plus: float
    band_minus: float

    def to_dict(self) -> dict:
        return asdict(self)


def volume_proportion(field, query: RectangleQuery, band: float = 0.05) -> VolumeProportion:
    """(1 +- avg rho)/2, plus the measure fractions of points within ``band`` of +-1."""
    X, W = _mixing_points(field, query)
    rho = field.evaluate(X)[:, 0]
    avg = float(W @ rho)
    return VolumeProportion(
        plus=0.5 * (1.0 + avg),
        minus=0.5 * (1.0 - avg),
        band_plus=float(W @ (rho >= 1.0 - band)),
        band_minus=float(W @ (rho <= -1.0 + band)),
    )


# --------------------------------------------------------------------------
# Linear residual convergence
# --------------------------------------------------------------------------

@dataclass
class ResidualTable:
    """Residual norms, one row per spacing and one column per linear row."""
    spacings: List[float]
    norms: List[List[float]]
    orders: List[float]
    points: int = 0

    def converged(self, min_order: float = 1.8) -> bool:
        return all(o >= min_order for o in self.orders)

    def to_dict(self) -> dict:
        return {"spacings": self.spacings, "norms": self.norms, "points": self.points,
                "orders": [o if np.isfinite(o) else "inf" for o in self.orders],
                "converged": self.converged()}


def window_lattice(window: Sequence[float], n: int = 5, times: int = 3) -> np.ndarray:
    """n x n x times points inside (x1_lo, x1_hi, x2_lo, x2_hi, t_lo, t_hi)."""
    x1_lo, x1_hi, x2_lo, x2_hi, t_lo, t_hi = window
    u = (np.arange(n) + 0.5) / n
    w = (np.arange(times) + 1.0) / (times + 1.0)
    G = np.stack(np.meshgrid(x1_lo + u * (x1_hi - x1_lo), x2_lo + u * (x2_hi - x2_lo),
                             t_lo + w * (t_hi - t_lo), indexing="ij"), axis=-1)
    return G.reshape(-1, 3)


def convergence_orders(spacings: Sequence[float], norms: np.ndarray) -> List[float]:
    """Least-squares log-log slope per row; rows at round-off level are exact (inf)."""
    logs = np.log(np.asarray(spacings))
    orders = []
    for row in np.asarray(norms).T:
        if np.all(row < EXACT_RESIDUAL):
            orders.append(np.inf)
        else:
            orders.append(float(np.polyfit(logs, np.log(np.maximum(row, 1e-300)), 1)[0]))
    return orders


def residual_spacings(field, coarsest: float = 1e-2, per_length: float = 0.04) -> Tuple[float, float, float]:
    """Three halving spacings that resolve the field's finest oscillation.

    The coarsest spacing is ``per_length`` of the shortest atom oscillation
    length (space or time), capped at ``coarsest``.
    """
    finest = getattr(field, "finest_oscillation_length", None)
    length = finest() if finest is not None else np.inf
    h = min(coarsest, per_length * length)
    return (h, 0.5 * h, 0.25 * h)


def linear_residual_suite(field, windows: Sequence[Sequence[float]],
                          spacings: Sequence[float], lattice_points: int = 5,
                          time_points: int = 3) -> ResidualTable:
    """Max-norm residual of the three linear rows per spacing, with fitted orders.

    Fields built from atoms only use lattice points whose stencils stay two
    widths away from the cutoff junctions, where the atoms lose smoothness.

    Raises:
        ValueError: fewer than three spacings, or no usable lattice point.
    """
    if len(spacings) < 3:
        raise ValueError("need at least three spacings for an order fit")
    P = np.concatenate([window_lattice(w, lattice_points, time_points) for w in windows])
    clear = getattr(field, "junction_clear", None)
    if clear is not None:
        P = P[clear(P, 2.0 * max(spacings))]
    if not len(P):
        raise ValueError("no residual lattice point clear of the cutoff junctions")
    norms = []
    for h in spacings:
        rows = linear_rows(field.evaluate, P, h)
        norms.append([float(np.max(np.abs(rows[:, i]))) for i in range(3)])
    return ResidualTable(list(map(float, spacings)), norms, convergence_orders(spacings, norms), len(P))


# --------------------------------------------------------------------------
# Hull confinement
# --------------------------------------------------------------------------

@dataclass
class HullConfinement:
    t_range: Tuple[float, float]
    points: int
    outside: int
    worst_slack: float
    tolerance: float

    @property
    def fraction_outside(self) -> float:
        return self.outside / self.points if self.points else 0.0

    @property
    def passed(self) -> bool:
        return self.fraction_outside <= self.tolerance

    def to_dict(self) -> dict:
        return {"t_range": list(self.t_range), "points": self.points, "outside": self.outside,
                "fraction_outside": self.fraction_outside, "worst_slack": self.worst_slack,
                "tolerance": self.tolerance, "passed": self.passed}


def hull_confinement(field, window: Sequence[float], M: float, points: int = 10_000,
                     tolerance: float = HULL_OUTSIDE_FRACTION) -> HullConfinement:
    """Share of window sample points whose normalized hull slack is below -HULL_SLACK_TOL.

    Points follow an unscrambled Halton sequence over (x1, x2, t), so the
    check is reproducible. Boundary values at cutoff fringes count as inside.
    """
    x1_lo, x1_hi, x2_lo, x2_hi, t_lo, t_hi = window
    sample = qmc.Halton(d=3, scramble=False).random(points)
    X = qmc.scale(sample, [x1_lo, x2_lo, t_lo], [x1_hi, x2_hi, t_hi])
    slack = hull_min_slack(field.evaluate(X), M)
    report = HullConfinement((float(t_lo), float(t_hi)), points,
                             int(np.count_nonzero(slack < -HULL_SLACK_TOL)), float(np.min(slack)), tolerance)
    if not report.passed:
        logger.warning("field leaves the hull", fraction=report.fraction_outside,
                       worst_slack=report.worst_slack)
    return report


# --------------------------------------------------------------------------
# Contour strips, power balance, velocity recovery
# --------------------------------------------------------------------------

def contour_strip_family(R_values: Sequence[float], delta: float, lam: float,
                         t: float) -> List[RectangleQuery]:
    """(-R, R) x (lam - R^-delta, lam + R^-delta); strips leaving (-1,1) are dropped."""
    strips = []
    for R in R_values:
        half = R ** (-delta)
        if lam - half < -1.0 or lam + half > 1.0:
            logger.debug("contour strip leaves the mixing zone", R=R, lam=lam)
            continue
        strips.append(RectangleQuery((-R, R), (lam - half, lam + half), t))
    return strips


@dataclass
class ContourStripRow:
    R: float
    average: float
    gap: float
    bound: float


def contour_strip_check(field, spec: DegradedBoundSpec, R_values: Sequence[float],
                        delta: float, lam: float, t: float) -> List[ContourStripRow]:
    """Density average and its gap to lam on each contour strip, with the bound for comparison."""
    rows = []
    for query in contour_strip_family(R_values, delta, lam, t):
        avg = rectangle_average(field, Observable.DENSITY, query)
        rows.append(ContourStripRow(query.S_interval[1], avg, abs(avg - lam),
                                    spec.bound(query, field.geometry)))
    return rows


@dataclass
class PowerBalanceReport:
    """Power-balance averages of base + one atom along doubling k.

    ``base_average`` is the same average without the atom, which is the
    weak limit. ``tolerance`` is 0.1 of the larger of the mean |average|
    and |u_bar|^2, the power scale of the atom itself: for a wave-cone
    amplitude |u|^2 + rho u2 cancels pointwise, so the averages can tend
    to zero and a purely relative tolerance would be meaningless.
    """
    k_values: List[int]
    averages: List[float]
    differences: List[float]
    tolerance: float
    base_average: float = 0.0

    @property
    def converged(self) -> bool:
        return all(d <= self.tolerance for d in self.differences)

    @property
    def limit_gap(self) -> float:
        return abs(self.averages[-1] - self.base_average) if self.averages else 0.0

    def to_dict(self) -> dict:
        return {"k_values": self.k_values, "averages": self.averages, "differences": self.differences,
                "tolerance": self.tolerance, "base_average": self.base_average,
                "converged": self.converged}


def power_balance_convergence(base: SubsolutionField, params: HullParams,
                              center: Tuple[float, float, float], side: float,
                              k_values: Sequence[int], query: RectangleQuery) -> PowerBalanceReport:
    """Power-balance average of base + one atom as k doubles.

    The atom sits on the cube (center, side) with the Lambda-segment
    amplitude of the base value at the center.
    """
    seg = lambda_segment(base((center[0], center[1]), center[2]), params)
    zbar = seg.zbar
    freq = solve_direction(zbar, tol=1e-9)
    averages = []
    for k in k_values:
        atom = WaveAtom(CubeSpec(center, side, 0), zbar, freq, int(k))
        model = FieldModel(base, params, [atom])
        averages.append(rectangle_average(model, Observable.POWER_BALANCE, query))
    diffs = [abs(b - a) for a, b in zip(averages[:-1], averages[1:])]
    u_bar = split_velocity(zbar.as_array()[None, :])[0]
    scale = max(float(np.mean(np.abs(averages))), float(u_bar @ u_bar), 1e-12)
    base_average = rectangle_average(base, Observable.POWER_BALANCE, query)
    return PowerBalanceReport(list(map(int, k_values)), averages, diffs, 0.1 * scale, base_average)


def velocity_recovery_check(field: SubsolutionField, box: BiotSavartBox, t: float) -> float:
    """Largest gap between (v - (0, rho))/2 and the Biot-Savart velocity on the box grid."""
    X1, X2 = box.mesh()
    X = np.column_stack([X1.ravel(), X2.ravel(), np.full(X1.size, t)])
    Z = field.evaluate(X)
    u = split_velocity(Z)
    reference = biot_savart_velocity(Z[:, 0].reshape(X1.shape), box)
    gap = max(float(np.max(np.abs(u[:, 0] - reference[0].ravel()))),
              float(np.max(np.abs(u[:, 1] - reference[1].ravel()))))
    logger.debug("velocity recovery", t=t, gap=f"{gap:.3e}")
    return gap


# --------------------------------------------------------------------------
# Bundle
# --------------------------------------------------------------------------

@dataclass
class DiagnosticsBundle:
    """Everything ``verify`` writes to diagnostics.json.

    Passing needs every degraded ratio at most 1, every mixing box mixed and
    the hull confinement check met. Residual tables are reported with their
    fitted orders but do not gate the result.
    """
    config_hash: str
    pass_reports: List[dict] = field(default_factory=list)
    residual_tables: List[dict] = field(default_factory=list)
    degraded_checks: List[dict] = field(default_factory=list)
    mixing_checks: List[dict] = field(default_factory=list)
    volume_proportions: List[dict] = field(default_factory=list)
    hull_checks: List[dict] = field(default_factory=list)
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def worst_ratio(self) -> float:
        return max((d["max_ratio"] for d in self.degraded_checks), default=0.0)

    @property
    def passed(self) -> bool:
        return (self.worst_ratio <= 1.0 and all(m["passed"] for m in self.mixing_checks)
                and all(h["passed"] for h in self.hull_checks))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_ratio": self.worst_ratio,
            "pass_reports": self.pass_reports,
            "residual_tables": self.residual_tables,
            "degraded_checks": self.degraded_checks,
            "mixing_checks": self.mixing_checks,
            "volume_proportions": self.volume_proportions,
            "hull_checks": self.hull_checks,
            **self.extra,
            "provenance": {"config_hash": self.config_hash,
                           "created": datetime.now().isoformat(timespec="seconds")},
        }
