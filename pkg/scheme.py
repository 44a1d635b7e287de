"""
🧱 PERTURBATION SCHEME
=====================
Shifted space-time grid, discretization on inner cubes, one perturbation
pass per grid, frequency selection and the relaxation-error functional

    J(z) = sup_t  integral over the window of (1 - rho^2).

A pass adds one *layer* of atoms. Cubes of one layer have pairwise
disjoint interiors, so every point is covered by at most one atom per layer.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry import (DegenerateState, EmptyTheta, HullParams, StateZ, gauge_D_array,
                      hull_min_slack, lambda_segment)
from lab_config import LabConfig, LabLogger, get_logger
from quadrature import gauss_box, panels_for
from subsolution import (BiotSavartBox, MixingGeometry, SampledInterface, SubsolutionField,
                         flat_field, load_interface_csv, sampled_subsolution)
from waves import (DEFAULT_PROFILE, AtomTable, CubeSpec, WaveAtom, atom_fields,
                   solve_direction)

logger = get_logger(__name__)

INNER_FRACTION = 0.75
GOLDEN = (0.6180339887498949, 0.3819660112501051, 0.2360679774997897)
EVAL_CHUNK = 1 << 18


class EmptyGrid(ValueError):
    """No cube of the requested side fits the window."""


class SegmentFailure(ValueError):
    """No admissible perturbation for a cube."""


# --------------------------------------------------------------------------
# Windows and grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    x1_lo: float
    x1_hi: float
    x2_lo: float
    x2_hi: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not (self.x1_lo < self.x1_hi and self.x2_lo < self.x2_hi and 0.0 < self.t_lo <= self.t_hi):
            raise ValueError(f"malformed window {self}")

    @classmethod
    def from_tuple(cls, values: Sequence[float]) -> "Window":
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.x1_lo, self.x1_hi, self.x2_lo, self.x2_hi, self.t_lo, self.t_hi)

    @property
    def area(self) -> float:
        return (self.x1_hi - self.x1_lo) * (self.x2_hi - self.x2_lo)


@dataclass(frozen=True)
class Cube:
    zeta: Tuple[int, int]
    i: int
    parity: int
    center: Tuple[float, float, float]
    side: float

    @property
    def key(self) -> Tuple[int, int, int, int]:
        return (self.zeta[0], self.zeta[1], self.i, self.parity)

    @property
    def inner_side(self) -> float:
        return INNER_FRACTION * self.side

    def spec(self) -> CubeSpec:
        return CubeSpec(self.center, self.side, self.parity)

    def corners(self) -> np.ndarray:
        h = 0.5 * self.side
        signs = np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], dtype=float)
        return np.array(self.center) + h * signs


@dataclass
class ShiftedGrid:
    s: float
    window: Window
    origin: Tuple[float, float, float]
    time_interval: Tuple[float, float]
    cubes: List[Cube]

    def __len__(self) -> int:
        return len(self.cubes)

    def by_parity(self, parity: int) -> List[Cube]:
        return [c for c in self.cubes if c.parity == parity]


def golden_origin(pass_index: int, s: float) -> Tuple[float, float, float]:
    """Lattice offset for pass ``pass_index``; pass 0 sits on the plain lattice."""
    return tuple(float(s * np.mod(pass_index * g, 1.0)) for g in GOLDEN)


def _integer_range(lo: float, hi: float) -> range:
    eps = 1e-9
    return range(int(np.ceil(lo - eps)), int(np.floor(hi + eps)) + 1)


def build_grid(window: Window, s: float, field: "FieldModel",
               origin: Tuple[float, float, float] = (0.0, 0.0, 0.0),
               corner_check: bool = True) -> ShiftedGrid:
    """Both parity classes of cubes of side s inside window x I_s.

    Centers are origin + (s zeta1, s zeta2, s (i + b/2)) with b = (zeta1 + zeta2) mod 2
    and I_s = [max(t_lo - s, 0), t_hi + s]. Cubes whose center (and, with
    ``corner_check``, any corner) is not strictly inside the hull are dropped.
    """
    if s <= 0.0:
        raise ValueError("cube side must be positive")
    o1, o2, o3 = origin
    t_lo = max(window.t_lo - s, 0.0)
    t_hi = window.t_hi + s

    candidates: List[Cube] = []
    for z1 in _integer_range((window.x1_lo - o1) / s + 0.5, (window.x1_hi - o1) / s - 0.5):
        for z2 in _integer_range((window.x2_lo - o2) / s + 0.5, (window.x2_hi - o2) / s - 0.5):
            b = (z1 + z2) % 2
            for i in _integer_range((t_lo - o3) / s + 0.5 - b / 2, (t_hi - o3) / s - 0.5 - b / 2):
                center = (o1 + s * z1, o2 + s * z2, o3 + s * (i + b / 2))
                if center[2] - 0.5 * s <= 0.0:
                    continue
                candidates.append(Cube((z1, z2), i, b, center, s))

    if candidates:
        centers = np.array([c.center for c in candidates])
        ok = hull_min_slack(field.evaluate(centers), field.params.M) > 0.0
        if corner_check:
            corners = np.concatenate([c.corners() for c in candidates])
            corner_slack = hull_min_slack(field.evaluate(corners), field.params.M).reshape(-1, 8)
            ok &= np.all(corner_slack > 0.0, axis=1)
        dropped = len(candidates) - int(np.count_nonzero(ok))
        candidates = [c for c, keep in zip(candidates, ok) if keep]
        logger.debug("grid built", s=s, cubes=len(candidates), dropped=dropped)

    if not candidates:
        raise EmptyGrid(f"no cube of side {s} fits window {window.as_tuple()}")

    candidates.sort(key=lambda c: c.key)
    return ShiftedGrid(s, window, tuple(origin), (t_lo, t_hi), candidates)


# --------------------------------------------------------------------------
# Field model
# --------------------------------------------------------------------------

class _Layer:
    """Atoms of one lattice: same side, centers on a common parity-shifted lattice."""

    def __init__(self, side: float, anchor: np.ndarray):
        self.side = side
        self.anchor = np.asarray(anchor, dtype=float)
        self.atoms: List[WaveAtom] = []
        self.keys: Dict[Tuple[int, int, int], int] = {}
        self._table: Optional[AtomTable] = None
        self._dense: Optional[np.ndarray] = None
        self._lo: Optional[np.ndarray] = None

    def key_of(self, center) -> Optional[Tuple[int, int, int]]:
        """Lattice key (z1, z2, i) of a cube center, or None when it is off this layer's lattice."""
        rel = (np.asarray(center) - self.anchor) / self.side
        z1, z2 = int(np.rint(rel[0])), int(np.rint(rel[1]))
        parity = (z1 + z2) % 2
        i = int(np.rint(rel[2] - parity / 2))
        if max(abs(rel[0] - z1), abs(rel[1] - z2), abs(rel[2] - parity / 2 - i)) > 1e-6:
            return None
        return (z1, z2, i)

    def accepts(self, atom: WaveAtom) -> bool:
        if abs(atom.cube.side - self.side) > 1e-12 * self.side:
            return False
        key = self.key_of(atom.cube.center)
        return key is not None and key not in self.keys

    def add(self, atom: WaveAtom):
        key = self.key_of(atom.cube.center)
        self.keys[key] = len(self.atoms)
        self.atoms.append(atom)
        self._table = None

    def _freeze(self):
        self._table = AtomTable(self.atoms, DEFAULT_PROFILE)
        keys = np.array(list(self.keys.keys()), dtype=int).reshape(-1, 3)
        self._lo = keys.min(axis=0)
        shape = keys.max(axis=0) - self._lo + 1
        self._dense = -np.ones(shape, dtype=int)
        for key, idx in self.keys.items():
            self._dense[tuple(np.array(key) - self._lo)] = idx

    def junction_clear(self, X: np.ndarray, margin: float) -> np.ndarray:
        """True where every coordinate sits ``margin`` or more from a cutoff junction of the point's cell.

        Empty cells are checked too, since their faces border atom cubes.
        """
        rel = (X - self.anchor) / self.side
        z1 = np.floor(rel[:, 0] + 0.5)
        z2 = np.floor(rel[:, 1] + 0.5)
        parity = np.mod(z1 + z2, 2)
        i = np.floor(rel[:, 2] - parity / 2 + 0.5)
        u = np.stack([rel[:, 0] - z1, rel[:, 1] - z2, rel[:, 2] - parity / 2 - i], axis=1) + 0.5
        junctions = np.asarray(self.atoms[0].cutoff.junctions, dtype=float)
        dist = np.min(np.abs(u[:, :, None] - junctions), axis=2) * self.side
        return np.all(dist >= margin, axis=1)

    def contribution(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(mask, values) of the layer's atoms at points X."""
        if self._table is None:
            self._freeze()
        rel = (X - self.anchor) / self.side
        z1 = np.floor(rel[:, 0] + 0.5).astype(int)
        z2 = np.floor(rel[:, 1] + 0.5).astype(int)
        parity = np.mod(z1 + z2, 2)
        i = np.floor(rel[:, 2] - parity / 2 + 0.5).astype(int)
        K = np.stack([z1, z2, i], axis=1) - self._lo
        inside = np.all((K >= 0) & (K < np.array(self._dense.shape)), axis=1)
        idx = -np.ones(len(X), dtype=int)
        idx[inside] = self._dense[K[inside, 0], K[inside, 1], K[inside, 2]]
        mask = idx >= 0
        if not np.any(mask):
            return mask, np.zeros((0, 5))
        return mask, self._table.evaluate(idx[mask], X[mask])


class FieldModel:
    """Subsolution plus an ordered list of wave atoms."""

    def __init__(self, base: SubsolutionField, params: HullParams,
                 atoms: Sequence[WaveAtom] = ()):
        self.base = base
        self.params = params
        self.atoms: List[WaveAtom] = []
        self.layers: List[_Layer] = []
        self._extend(atoms)

    def _extend(self, atoms: Sequence[WaveAtom]):
        """Group atoms into layers; a side change, an off-lattice center or a repeated key opens a new one."""
        layer = None
        for atom in atoms:
            if layer is None or not layer.accepts(atom):
                layer = _Layer(atom.cube.side, atom.cube.center)
                self.layers.append(layer)
            layer.add(atom)
            self.atoms.append(atom)

    def with_layer(self, atoms: Sequence[WaveAtom]) -> "FieldModel":
        """A new model with ``atoms`` appended; this one is left untouched."""
        model = FieldModel(self.base, self.params)
        model.atoms = list(self.atoms)
        model.layers = list(self.layers)
        model._extend(atoms)
        return model

    def evaluate(self, X) -> np.ndarray:
        """Field values z = base + sum of atoms at (N, 3) points (x1, x2, t), shape (N, 5).

        Each layer contributes at most one atom per point, found by lattice
        lookup; large batches are evaluated in chunks of ``EVAL_CHUNK``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, 3)
        if len(X) > EVAL_CHUNK:
            return np.concatenate([self.evaluate(X[j:j + EVAL_CHUNK])
                                   for j in range(0, len(X), EVAL_CHUNK)])
        out = self.base.evaluate(X)
        for layer in self.layers:
            mask, values = layer.contribution(X)
            if values.size:
                out[mask] += values
        return out

    def __call__(self, x: Tuple[float, float], t: float) -> StateZ:
        return StateZ.from_array(self.evaluate([x[0], x[1], t])[0])

    @property
    def geometry(self) -> MixingGeometry:
        return self.base.geometry

    def junction_clear(self, X, margin: float) -> np.ndarray:
        """Points whose finite-difference stencils of half-width ``margin`` avoid every layer's junctions."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, 3)
        mask = np.ones(len(X), dtype=bool)
        for layer in self.layers:
            mask &= layer.junction_clear(X, margin)
        return mask

    def finest_oscillation_length(self) -> float:
        """Shortest oscillation length in space or time over the atoms, side / (k max(1, |xi0|))."""
        live = [a.wavelength / max(1.0, abs(a.freq.xi0)) for a in self.atoms if not a.is_null]
        return min(live) if live else np.inf

    def finest_wavelength(self) -> float:
        live = [a.wavelength for a in self.atoms if not a.is_null]
        return min(live) if live else np.inf


# --------------------------------------------------------------------------
# Relaxation error
# --------------------------------------------------------------------------

def relaxation_error_profile(field: FieldModel, window: Window, resolution: int = 256,
                             time_slices: int = 32, order: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial integrals of 1 - rho^2 on a uniform time lattice (endpoints included)."""
    if resolution < 16:
        raise ValueError("resolution must be at least 16 points per side")
    times = np.linspace(window.t_lo, window.t_hi, max(32, int(time_slices)))
    base_panels = max(4, resolution // order)
    wavelength = field.finest_wavelength()
    panels = (panels_for(window.x1_hi - window.x1_lo, wavelength, base_panels),
              panels_for(window.x2_hi - window.x2_lo, wavelength, base_panels))
    X1, X2, W = gauss_box((window.x1_lo, window.x2_lo), (window.x1_hi, window.x2_hi), panels, order)

    values = np.empty(len(times))
    for n, t in enumerate(times):
        X = np.column_stack([X1, X2, np.full(X1.shape, t)])
        rho = field.evaluate(X)[:, 0]
        values[n] = float(np.sum(W * gauge_D_array(rho)))
    return times, values


def relaxation_error_J(field: FieldModel, window: Window, resolution: int = 256,
                       time_slices: int = 32) -> Tuple[float, float]:
    """(J, argmax time)."""
    times, values = relaxation_error_profile(field, window, resolution, time_slices)
    n = int(np.argmax(values))
    return float(values[n]), float(times[n])


# --------------------------------------------------------------------------
# Discretization
# --------------------------------------------------------------------------

@dataclass
class SimpleFunction:
    """Piecewise constant on the inner cubes of a grid, zero elsewhere."""
    cubes: List[Cube]
    values: np.ndarray

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, 3)
        out = np.zeros(len(X))
        for cube, value in zip(self.cubes, self.values):
            half = 0.5 * cube.inner_side
            inside = np.all(np.abs(X - np.array(cube.center)) < half, axis=1)
            out[inside] = value
        return out

    def integral(self, t: float, parity: Optional[int] = None) -> float:
        """Spatial integral at time t, optionally over one parity class."""
        total = 0.0
        for cube, value in zip(self.cubes, self.values):
            if parity is not None and cube.parity != parity:
                continue
            if abs(t - cube.center[2]) < 0.5 * cube.inner_side:
                total += value * cube.inner_side ** 2
        return total


def discretize(field: FieldModel, grid: ShiftedGrid, f: Callable[[StateZ], float]) -> SimpleFunction:
    """f evaluated at each cube center, held constant on the inner cube."""
    centers = np.array([c.center for c in grid.cubes])
    Z = field.evaluate(centers)
    values = np.array([f(StateZ.from_array(z)) for z in Z])
    return SimpleFunction(list(grid.cubes), values)


def discretization_error(simple: SimpleFunction, field: FieldModel,
                         f: Callable[[StateZ], float], X) -> float:
    """Sup over the points X of |simple - f(z)|."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    exact = np.array([f(StateZ.from_array(z)) for z in field.evaluate(X)])
    return float(np.max(np.abs(simple(X) - exact)))


# --------------------------------------------------------------------------
# Frequency selection and the perturbation pass
# --------------------------------------------------------------------------

@dataclass
class KPolicy:
    """Frequency search settings.

    ``lattice`` gives the per-axis fractions of the 5x5x5 membership lattice
    checked against the hull; ``gain_slices`` are the time offsets (in cube
    sides) of the gain measurement.
    """
    k0: int = 8
    k_cap: int = 1024
    gain_fraction: float = 0.5
    lattice: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    gain_slices: Tuple[float, ...] = (-0.3, 0.0, 0.3)
    backoff: float = 0.7
    max_backoffs: int = 4
    min_gain_points: int = 16

    @classmethod
    def from_config(cls, config: LabConfig) -> "KPolicy":
        return cls(k0=config.k0, k_cap=config.k_cap, gain_fraction=config.gain_fraction,
                   backoff=config.backoff, max_backoffs=config.max_backoffs)

    def k_values(self) -> List[int]:
        ks, k = [], self.k0
        while k <= self.k_cap:
            ks.append(k)
            k *= 2
        return ks


@dataclass
class AtomChoice:
    """The atom picked for a cube with its gain figures."""
    atom: WaveAtom
    measured_gain: float
    predicted_gain: float
    amplitude: float
    gain_met: bool

    @property
    def gain_ratio(self) -> float:
        return self.measured_gain / self.predicted_gain if self.predicted_gain > 0 else np.nan


def predicted_gain(zbar: StateZ, cube: Cube, profile=DEFAULT_PROFILE) -> float:
    """C_gamma H(zbar) |inner square| with C_gamma the mean of h^2."""
    return profile.l2_norm_sq * zbar.rho ** 2 * cube.inner_side ** 2


def measured_gain(field: FieldModel, atom: WaveAtom, cube: Cube, policy: KPolicy) -> float:
    """Smallest, over time slices, integral of D(z) - D(z + atom) on the inner square."""
    n = max(policy.min_gain_points, 4 * atom.k)
    half = 0.5 * cube.inner_side
    c1, c2, c3 = cube.center
    X1, X2, W = gauss_box((c1 - half, c2 - half), (c1 + half, c2 + half), (n // 4, n // 4))
    gains = []
    for frac in policy.gain_slices:
        X = np.column_stack([X1, X2, np.full(X1.shape, c3 + frac * cube.side)])
        Z = field.evaluate(X)
        dZ = atom_fields(atom, X)
        gains.append(float(np.sum(W * (gauge_D_array(Z[:, 0]) - gauge_D_array(Z[:, 0] + dZ[:, 0])))))
    return min(gains)


def select_atom(field: FieldModel, cube: Cube, zbar: StateZ, policy: KPolicy,
                log: Optional[LabLogger] = None) -> AtomChoice:
    """Pick the frequency and amplitude of the atom for one cube.

    k doubles from ``k0`` until the atom passes the hull check on the
    membership lattice (slack at least margin_delta/2) and its measured gain
    reaches ``gain_fraction`` of the prediction. If no k passes the hull
    check the amplitude is multiplied by ``backoff`` and the sweep restarts.
    When only the gain check fails up to ``k_cap``, the first hull-admissible
    choice is returned with ``gain_met`` False.

    Raises:
        SegmentFailure: no admissible atom after ``max_backoffs`` backoffs.
    """
    log = log or logger
    params = field.params
    threshold = 0.5 * params.margin_delta
    u = np.array(policy.lattice) - 0.5
    offsets = np.stack(np.meshgrid(u, u, u, indexing="ij"), axis=-1).reshape(-1, 3) * cube.side
    P = np.array(cube.center) + offsets
    Z = field.evaluate(P)

    amplitude = 1.0
    for _ in range(policy.max_backoffs + 1):
        zb = zbar * amplitude
        freq = solve_direction(zb, tol=1e-9)
        best: Optional[AtomChoice] = None
        for k in policy.k_values():
            atom = WaveAtom(cube.spec(), zb, freq, k)
            slack = hull_min_slack(Z + atom_fields(atom, P), params.M)
            if np.min(slack) < threshold or np.min(slack) <= 0.0:
                continue
            predicted = predicted_gain(zb, cube)
            gain = measured_gain(field, atom, cube, policy)
            choice = AtomChoice(atom, gain, predicted, amplitude, gain >= policy.gain_fraction * predicted)
            if choice.gain_met:
                return choice
            best = best or choice
        if best is not None:
            log.bind(k=best.atom.k).warning("gain below target at the frequency cap",
                                            ratio=f"{best.gain_ratio:.3f}")
            return best
        amplitude *= policy.backoff
        log.debug("hull check failed up to k_cap, backing off", amplitude=amplitude)

    raise SegmentFailure(f"cube {cube.key}: no admissible atom after {policy.max_backoffs} backoffs")


@dataclass
class PassReport:
    """What one perturbation pass did.

    ``rolled_back`` counts atoms dropped because J rose with the full layer;
    a ``rejected`` pass left the field unchanged and reports J_after = J_before.
    """
    J_before: float
    J_after: float
    t_before: float
    t_after: float
    predicted_gain: float
    measured_gain: float
    cubes_total: int
    cubes_perturbed: int
    k_values: Dict[int, int]
    skipped: Dict[str, int]
    gain_ratios: List[float]
    s: float
    origin: Tuple[float, float, float]
    rolled_back: int = 0
    rejected: bool = False

    def gain_band_fraction(self, lo: float = 0.3, hi: float = 1.5) -> float:
        """Share of perturbed cubes whose measured/predicted gain lies in [lo, hi]."""
        if not self.gain_ratios:
            return 0.0
        r = np.array(self.gain_ratios)
        return float(np.mean((r >= lo) & (r <= hi)))

    def to_dict(self) -> dict:
        return {
            "J_before": self.J_before, "J_after": self.J_after,
            "t_before": self.t_before, "t_after": self.t_after,
            "predicted_gain": self.predicted_gain, "measured_gain": self.measured_gain,
            "cubes_total": self.cubes_total, "cubes_perturbed": self.cubes_perturbed,
            "k_values": {str(k): v for k, v in sorted(self.k_values.items())},
            "skipped": dict(self.skipped),
            "gain_band_fraction": self.gain_band_fraction(),
            "s": self.s, "origin": list(self.origin),
            "rolled_back": self.rolled_back, "rejected": self.rejected,
        }


def settle_layer(field: FieldModel, choices: Sequence[AtomChoice], window: Window,
                 J_before: Tuple[float, float], resolution: int = 256, time_slices: int = 32
                 ) -> Tuple[FieldModel, Tuple[float, float], List[AtomChoice], bool]:
    """Add a layer only if it lowers J.

    When the full layer raises J, atoms whose own measured gain is not
    positive are dropped and J is measured again. If that still does not
    lower J the layer is rejected and the field is returned unchanged.
    Returns (field, J, kept choices, rejected).
    """
    if not choices:
        return field, J_before, [], False

    kept = list(choices)
    candidate = field.with_layer([c.atom for c in kept])
    J_after = relaxation_error_J(candidate, window, resolution, time_slices)
    if J_after[0] < J_before[0]:
        return candidate, J_after, kept, False

    kept = [c for c in choices if c.measured_gain > 0.0]
    logger.warning("J rose with the full layer, rolling back atoms without gain",
                   J_before=J_before[0], J_after=J_after[0], dropped=len(choices) - len(kept))
    if kept and len(kept) < len(choices):
        candidate = field.with_layer([c.atom for c in kept])
        J_after = relaxation_error_J(candidate, window, resolution, time_slices)
        if J_after[0] < J_before[0]:
            return candidate, J_after, kept, False

    logger.warning("layer rejected, J did not decrease", J_before=J_before[0], J_after=J_after[0])
    return field, J_before, [], True


def perturbation_pass(field: FieldModel, grid: ShiftedGrid, k_policy: KPolicy,
                      resolution: int = 256, time_slices: int = 32,
                      J_before: Optional[Tuple[float, float]] = None,
                      log: Optional[LabLogger] = None) -> Tuple[FieldModel, PassReport]:
    """One layer of atoms, one per qualifying cube of the grid.

    Cubes are visited in key order. Per cube: the Lambda-segment at the
    center value, the direction solve, then ``select_atom``. Cubes that
    fail are counted in ``skipped`` by reason. The layer is kept only if it
    lowers J (see ``settle_layer``).
    """
    if not grid.cubes:
        raise EmptyGrid("perturbation pass needs a nonempty grid")
    log = log or logger
    if J_before is None:
        J_before = relaxation_error_J(field, grid.window, resolution, time_slices)

    centers = np.array([c.center for c in grid.cubes])
    Zc = field.evaluate(centers)
    choices: List[AtomChoice] = []
    skipped: Counter = Counter()

    for cube, zc in zip(grid.cubes, Zc):
        cube_log = log.bind(cube=cube.key)
        try:
            seg = lambda_segment(StateZ.from_array(zc), field.params)
            if seg.lambda_max <= 0.0:
                raise SegmentFailure(f"cube {cube.key}: zero-length segment")
            zbar = seg.zbar
            if solve_direction(zbar, tol=1e-9).null:
                skipped["null_direction"] += 1
                continue
            choice = select_atom(field, cube, zbar, k_policy, cube_log)
        except DegenerateState:
            skipped["degenerate"] += 1
            continue
        except EmptyTheta:
            skipped["empty_theta"] += 1
            continue
        except SegmentFailure as e:
            skipped["segment_failure"] += 1
            cube_log.debug("cube skipped", reason=str(e))
            continue
        choices.append(choice)

    new_field, J_after, kept, rejected = settle_layer(field, choices, grid.window, J_before,
                                                      resolution, time_slices)
    report = PassReport(
        J_before=J_before[0], J_after=J_after[0], t_before=J_before[1], t_after=J_after[1],
        predicted_gain=sum(c.predicted_gain for c in kept),
        measured_gain=sum(c.measured_gain for c in kept),
        cubes_total=len(grid.cubes), cubes_perturbed=len(kept),
        k_values=dict(Counter(c.atom.k for c in kept)), skipped=dict(skipped),
        gain_ratios=[c.gain_ratio for c in kept],
        s=grid.s, origin=grid.origin,
        rolled_back=len(choices) - len(kept), rejected=rejected,
    )
    log.info("pass finished", s=grid.s, cubes=len(grid.cubes), perturbed=len(kept),
             J_before=f"{report.J_before:.6f}", J_after=f"{report.J_after:.6f}",
             skipped=dict(skipped))
    return new_field, report


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------

@dataclass
class RunReport:
    """Summary of a run; ``stop_reason`` is passes_max, s_min or J_target."""
    config_hash: str
    J_initial: float
    J_final: float
    pass_reports: List[PassReport] = field(default_factory=list)
    s_schedule: List[float] = field(default_factory=list)
    atoms: int = 0
    rejected_passes: List[int] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def reduction_factor(self) -> float:
        return self.J_initial / self.J_final if self.J_final > 0 else np.inf

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "J_initial": self.J_initial,
            "J_final": self.J_final,
            "reduction_factor": self.reduction_factor,
            "s_schedule": list(self.s_schedule),
            "atoms": self.atoms,
            "rejected_passes": list(self.rejected_passes),
            "stop_reason": self.stop_reason,
            "pass_reports": [p.to_dict() for p in self.pass_reports],
        }


def biot_savart_box(config: LabConfig, interface=None) -> BiotSavartBox:
    """Periodic strip for the velocity solve; sampled interfaces fix their own period."""
    reach = config.speed_c * config.T_end + 2.0
    if isinstance(interface, SampledInterface):
        x1_lo = float(interface.s_grid[0])
        period = float(interface.s_grid[-1] - interface.s_grid[0])
        f_lo, f_hi = float(interface.f_values.min()), float(interface.f_values.max())
    else:
        x1_lo, period = -0.5 * config.bs_period, config.bs_period
        f_lo = f_hi = 0.0
    return BiotSavartBox(x1_lo, period, f_lo - reach, f_hi + reach,
                         config.bs_resolution, 2 * config.bs_resolution)


def build_base(config: LabConfig, params: HullParams) -> SubsolutionField:
    """Flat subsolution, or the sampled one for an interface CSV."""
    if config.interface == "flat":
        return flat_field(MixingGeometry(config.speed_c, config.T_end))
    interface = load_interface_csv(config.interface)
    geometry = MixingGeometry(config.speed_c, config.T_end, interface)
    return sampled_subsolution(geometry, params, biot_savart_box(config, interface))


def hull_params(config: LabConfig) -> HullParams:
    return HullParams(config.M, config.margin_delta)


def run(config: LabConfig, base: Optional[SubsolutionField] = None) -> Tuple[FieldModel, RunReport]:
    """Iterate perturbation passes on golden-shifted lattices.

    s halves on an empty grid, a stalled J or a rejected layer. The loop
    stops at ``passes_max`` passes, when s drops below ``s_min``, or once
    J_initial / J reaches ``J_target_factor`` (0 disables the target).
    """
    params = hull_params(config)
    base = base or build_base(config, params)
    field = FieldModel(base, params)
    window = Window.from_tuple(config.window)
    policy = KPolicy.from_config(config)

    J = relaxation_error_J(field, window, config.quadrature, config.time_slices)
    report = RunReport(config.config_hash_hex(), J[0], J[0])
    logger.info("run started", J=f"{J[0]:.6f}", passes_max=config.passes_max, s=config.s_initial,
                J_target_factor=config.J_target_factor)

    s = config.s_initial
    pass_index = 0
    report.stop_reason = "passes_max"
    while len(report.pass_reports) < config.passes_max:
        if s < config.s_min:
            report.stop_reason = "s_min"
            break
        pass_log = logger.bind(pass_index=pass_index)
        try:
            grid = build_grid(window, s, field, golden_origin(pass_index, s), config.corner_check)
        except EmptyGrid as e:
            pass_log.info("empty grid, halving s", s=s, reason=str(e))
            s *= 0.5
            continue

        field, pass_report = perturbation_pass(field, grid, policy, config.quadrature,
                                               config.time_slices, J_before=J, log=pass_log)
        report.pass_reports.append(pass_report)
        report.s_schedule.append(s)
        J = (pass_report.J_after, pass_report.t_after)

        drop = pass_report.J_before - pass_report.J_after
        if pass_report.rejected:
            report.rejected_passes.append(pass_index)
            pass_log.warning("layer rejected, halving s", s=s)
            s *= 0.5
        elif pass_report.cubes_perturbed == 0 or drop < config.stall_tolerance * pass_report.J_before:
            pass_log.info("J stalled, halving s", s=s, drop=f"{drop:.3e}")
            s *= 0.5
        pass_index += 1

        if config.J_target_factor > 0.0 and report.J_initial >= config.J_target_factor * J[0]:
            report.stop_reason = "J_target"
            pass_log.info("J target reached", factor=report.J_initial / J[0])
            break

    report.J_final = J[0]
    report.atoms = len(field.atoms)
    logger.info("run finished", passes=len(report.pass_reports), J_initial=f"{report.J_initial:.6f}",
                J_final=f"{report.J_final:.6f}", atoms=report.atoms, stop=report.stop_reason)
    return field, report
