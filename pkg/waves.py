"""
🌊 LOCALIZED PLANE WAVES
=======================
Perturbations generated from a third-order potential pair (phi, varphi):

    rho = Lap phi,  v1 = 2 d12 phi,  v2 = (d22 - d11) phi,
    m1 = -dt d1 phi - d2 varphi,  m2 = -dt d2 phi + d1 varphi

so every atom solves the three linear rows exactly. The potentials are

    phi = psi * (a / kappa^2) H(kappa xi.y),   varphi = psi * (b / kappa) H'(kappa xi.y)

with kappa = k / side, y measured from the cube center and psi a C^2
tensor-product cutoff equal to one on the middle 3/4 of every side.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from geometry import StateZ, in_wave_cone
from lab_config import get_logger
from quadrature import gauss_box, gauss_panels, panels_for

logger = get_logger(__name__)

TWO_PI = 2.0 * np.pi


class NotInCone(ValueError):
    """Direction is not a wave-cone vector."""


# --------------------------------------------------------------------------
# Profile and cutoff
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Periodic profile h on the unit torus with second antiderivative H."""
    name: str = "cosine"

    def h(self, tau):
        return np.cos(TWO_PI * np.asarray(tau))

    def dh(self, tau):
        return -TWO_PI * np.sin(TWO_PI * np.asarray(tau))

    def H1(self, tau):
        return np.sin(TWO_PI * np.asarray(tau)) / TWO_PI

    def H2(self, tau):
        return -np.cos(TWO_PI * np.asarray(tau)) / TWO_PI ** 2

    def derivative(self, order: int, tau):
        """Derivatives of H2: order 0 is H2 itself, 2 is h."""
        table = {0: self.H2, 1: self.H1, 2: self.h, 3: self.dh}
        if order not in table:
            raise ValueError(f"order {order} not available")
        return table[order](tau)

    def torus_mean(self, A: Callable = lambda w: w, panels: int = 64) -> float:
        nodes, weights = gauss_panels(0.0, 1.0, panels, order=6)
        return float(np.sum(weights * A(self.h(nodes))))

    @property
    def l2_norm_sq(self) -> float:
        return 0.5


DEFAULT_PROFILE = Profile()


def smoothstep(w):
    """Quintic smoothstep and its first two derivatives on [0,1]."""
    w = np.asarray(w, dtype=float)
    S = w ** 3 * (10.0 - 15.0 * w + 6.0 * w * w)
    dS = 30.0 * w * w * (1.0 - w) ** 2
    ddS = 60.0 * w * (1.0 - w) * (1.0 - 2.0 * w)
    return S, dS, ddS


@dataclass(frozen=True)
class CutoffSpec:
    ramp: float = 0.125

    def __post_init__(self):
        if not 0.0 < self.ramp < 0.5:
            raise ValueError(f"ramp={self.ramp} must lie in (0, 1/2)")

    @property
    def inner_fraction(self) -> float:
        return 1.0 - 2.0 * self.ramp

    @property
    def junctions(self) -> Tuple[float, ...]:
        return (0.0, self.ramp, 1.0 - self.ramp, 1.0)

    def chi(self, u):
        """chi, chi', chi'' in the fraction coordinate u in [0,1]."""
        u = np.asarray(u, dtype=float)
        r = self.ramp
        chi = np.where((u > 0.0) & (u < 1.0), 1.0, 0.0)
        d1 = np.zeros_like(u)
        d2 = np.zeros_like(u)

        left = (u > 0.0) & (u < r)
        if np.any(left):
            S, dS, ddS = smoothstep(u[left] / r)
            chi[left], d1[left], d2[left] = S, dS / r, ddS / r ** 2

        right = (u > 1.0 - r) & (u < 1.0)
        if np.any(right):
            S, dS, ddS = smoothstep((1.0 - u[right]) / r)
            chi[right], d1[right], d2[right] = S, -dS / r, ddS / r ** 2
        return chi, d1, d2


DEFAULT_CUTOFF = CutoffSpec()


# --------------------------------------------------------------------------
# Frequencies and atoms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveFrequency:
    zeta: Tuple[float, float]
    xi0: float
    b_coeff: float
    null: bool = False

    def __post_init__(self):
        object.__setattr__(self, "zeta", (float(self.zeta[0]), float(self.zeta[1])))
        if abs(np.hypot(*self.zeta) - 1.0) > 1e-12:
            raise ValueError(f"zeta={self.zeta} is not a unit vector")

    @property
    def xi(self) -> np.ndarray:
        return np.array([self.zeta[0], self.zeta[1], self.xi0])

    def as_record(self) -> np.ndarray:
        return np.array([self.zeta[0], self.zeta[1], self.xi0, self.b_coeff])

    @classmethod
    def from_record(cls, rec) -> "WaveFrequency":
        rec = np.asarray(rec, dtype=float)
        return cls((rec[0], rec[1]), float(rec[2]), float(rec[3]))


NULL_FREQUENCY = WaveFrequency((1.0, 0.0), 0.0, 0.0, null=True)


@dataclass(frozen=True)
class CubeSpec:
    center: Tuple[float, float, float]
    side: float
    parity: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.side <= 0.0:
            raise ValueError("cube side must be positive")
        if self.parity not in (0, 1):
            raise ValueError("parity must be 0 or 1")

    def contains(self, X: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(X) - np.array(self.center)
        return np.all(np.abs(Y) <= 0.5 * self.side, axis=1)


@dataclass(frozen=True)
class WaveAtom:
    cube: CubeSpec
    direction: StateZ
    freq: WaveFrequency
    k: int
    cutoff: CutoffSpec = field(default=DEFAULT_CUTOFF)

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError("oscillation count k must be >= 1")
        if not in_wave_cone(self.direction, tol=1e-9):
            raise NotInCone(f"atom direction {self.direction} is not in the wave cone")

    @property
    def kappa(self) -> float:
        return self.k / self.cube.side

    @property
    def is_null(self) -> bool:
        return self.freq.null or not np.any(self.direction.as_array())

    @property
    def wavelength(self) -> float:
        return self.cube.side / self.k


def solve_direction(zbar: StateZ, tol: float = 1e-12) -> WaveFrequency:
    """Spatial direction zeta, temporal frequency xi0 and secondary coefficient b."""
    if not in_wave_cone(zbar, tol):
        raise NotInCone(f"|rho|={abs(zbar.rho)} differs from |v|={np.hypot(*zbar.v)}")

    a = zbar.rho
    mbar = np.array(zbar.m)
    if abs(a) <= 1e-14 * (1.0 + zbar.norm()):
        b = float(np.linalg.norm(mbar))
        if b == 0.0:
            return NULL_FREQUENCY
        # b zeta_perp = mbar with zeta_perp = (-zeta2, zeta1)
        return WaveFrequency((mbar[1] / b, -mbar[0] / b), 0.0, b)

    eta = np.array(zbar.v) / a
    eta /= np.linalg.norm(eta)
    zeta2 = np.sqrt(max(0.0, 0.5 * (1.0 + eta[1])))
    zeta1 = (1.0 if eta[0] >= 0.0 else -1.0) * np.sqrt(max(0.0, 0.5 * (1.0 - eta[1])))
    system = np.array([[-a * zeta1, -zeta2],
                       [-a * zeta2, zeta1]])
    xi0, b = np.linalg.solve(system, mbar)
    return WaveFrequency((zeta1, zeta2), float(xi0), float(b))


def symbol_matrix(freq: WaveFrequency) -> np.ndarray:
    """The three linear rows at frequency xi, acting on (rho, v1, v2, m1, m2)."""
    z1, z2 = freq.zeta
    return np.array([
        [-z2, z1, z2, 0.0, 0.0],
        [z1, -z2, z1, 0.0, 0.0],
        [freq.xi0, 0.0, 0.0, z1, z2],
    ])


# --------------------------------------------------------------------------
# Evaluation kernel (struct-of-arrays over points)
# --------------------------------------------------------------------------

def _potential_jets(Y, side, xi, a, b, kappa, cutoff: CutoffSpec, profile: Profile):
    """Potentials with the Hessian of phi and the gradient of varphi.

    All arguments are per-point arrays: Y (N,3) offsets from the cube
    center, side/a/b/kappa (N,), xi (N,3).
    """
    U = Y / side[:, None] + 0.5
    chi = np.empty_like(U)
    d1 = np.empty_like(U)
    d2 = np.empty_like(U)
    for j in range(3):
        chi[:, j], d1[:, j], d2[:, j] = cutoff.chi(U[:, j])
    d1 /= side[:, None]
    d2 /= side[:, None] ** 2

    psi = chi[:, 0] * chi[:, 1] * chi[:, 2]
    dpsi = np.stack([d1[:, 0] * chi[:, 1] * chi[:, 2],
                     chi[:, 0] * d1[:, 1] * chi[:, 2],
                     chi[:, 0] * chi[:, 1] * d1[:, 2]], axis=1)
    ddpsi = np.empty((len(Y), 3, 3))
    for i in range(3):
        for j in range(3):
            if i == j:
                prod = d2[:, i].copy()
            else:
                prod = d1[:, i] * d1[:, j]
            for l in range(3):
                if l != i and l != j:
                    prod = prod * chi[:, l]
            ddpsi[:, i, j] = prod

    tau = kappa * np.sum(xi * Y, axis=1)
    H2 = profile.H2(tau)
    H1 = profile.H1(tau)
    h = profile.h(tau)

    g = a / kappa ** 2 * H2
    dg = (a / kappa * H1)[:, None] * xi
    ddg = (a * h)[:, None, None] * xi[:, :, None] * xi[:, None, :]

    q = b / kappa * H1
    dq = (b * h)[:, None] * xi

    phi = psi * g
    hess = (ddpsi * g[:, None, None]
            + dpsi[:, :, None] * dg[:, None, :]
            + dg[:, :, None] * dpsi[:, None, :]
            + psi[:, None, None] * ddg)
    varphi = psi * q
    grad = dpsi * q[:, None] + psi[:, None] * dq
    return phi, hess, varphi, grad


def fields_from_jets(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    out = np.empty((len(hess), 5))
    out[:, 0] = hess[:, 0, 0] + hess[:, 1, 1]
    out[:, 1] = 2.0 * hess[:, 0, 1]
    out[:, 2] = hess[:, 1, 1] - hess[:, 0, 0]
    out[:, 3] = -hess[:, 2, 0] - grad[:, 1]
    out[:, 4] = -hess[:, 2, 1] + grad[:, 0]
    return out


class AtomTable:
    """Struct-of-arrays view of an atom list for vectorized evaluation."""

    def __init__(self, atoms: Sequence[WaveAtom], profile: Profile = DEFAULT_PROFILE):
        self.atoms = list(atoms)
        self.profile = profile
        n = len(self.atoms)
        self.center = np.array([a.cube.center for a in self.atoms]).reshape(n, 3)
        self.side = np.array([a.cube.side for a in self.atoms], dtype=float)
        self.xi = np.array([a.freq.xi for a in self.atoms]).reshape(n, 3)
        self.a = np.array([a.direction.rho for a in self.atoms], dtype=float)
        self.b = np.array([a.freq.b_coeff for a in self.atoms], dtype=float)
        self.kappa = np.array([a.kappa for a in self.atoms], dtype=float)
        self.null = np.array([a.is_null for a in self.atoms], dtype=bool)
        ramps = {a.cutoff.ramp for a in self.atoms}
        if len(ramps) > 1:
            raise ValueError("atoms in one table must share a cutoff")
        self.cutoff = CutoffSpec(ramps.pop()) if ramps else DEFAULT_CUTOFF

    def __len__(self) -> int:
        return len(self.atoms)

    def jets(self, idx: np.ndarray, X: np.ndarray):
        Y = X - self.center[idx]
        return _potential_jets(Y, self.side[idx], self.xi[idx], self.a[idx], self.b[idx],
                               self.kappa[idx], self.cutoff, self.profile)

    def evaluate(self, idx: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Field contributions at points X (N,3), atom ``idx[n]`` at point n."""
        out = np.zeros((len(X), 5))
        live = ~self.null[idx]
        if np.any(live):
            _, hess, _, grad = self.jets(idx[live], X[live])
            out[live] = fields_from_jets(hess, grad)
        return out


def _as_points(X) -> np.ndarray:
    return np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, 3)


def atom_fields(atom: WaveAtom, X, profile: Profile = DEFAULT_PROFILE) -> np.ndarray:
    X = _as_points(X)
    if atom.is_null:
        return np.zeros((len(X), 5))
    table = AtomTable([atom], profile)
    return table.evaluate(np.zeros(len(X), dtype=int), X)


def atom_eval(atom: WaveAtom, x: Sequence[float], t: float,
              profile: Profile = DEFAULT_PROFILE) -> StateZ:
    return StateZ.from_array(atom_fields(atom, [x[0], x[1], t], profile)[0])


def atom_potentials(atom: WaveAtom, X, profile: Profile = DEFAULT_PROFILE) -> Tuple[np.ndarray, np.ndarray]:
    X = _as_points(X)
    table = AtomTable([atom], profile)
    phi, _, varphi, _ = table.jets(np.zeros(len(X), dtype=int), X)
    return phi, varphi


def atom_leading_part(atom: WaveAtom, X, profile: Profile = DEFAULT_PROFILE) -> np.ndarray:
    """zbar * h(kappa xi.y) * psi, the atom without its O(1/k) corrections."""
    X = _as_points(X)
    Y = X - np.array(atom.cube.center)
    U = Y / atom.cube.side + 0.5
    psi = np.ones(len(X))
    for j in range(3):
        psi *= atom.cutoff.chi(U[:, j])[0]
    h = profile.h(atom.kappa * (Y @ atom.freq.xi))
    return (psi * h)[:, None] * atom.direction.as_array()[None, :]


# --------------------------------------------------------------------------
# Linear residuals
# --------------------------------------------------------------------------

RESIDUAL_FRACTIONS = (1.0 / 16.0, 0.25, 0.5, 0.75, 15.0 / 16.0)


def residual_lattice(atom: WaveAtom, spacing: float) -> np.ndarray:
    """Sample points inside the cube at least two stencil widths from the cutoff junctions."""
    side = atom.cube.side
    keep = [f for f in RESIDUAL_FRACTIONS
            if min(abs(f - j) for j in atom.cutoff.junctions) * side >= 2.0 * spacing]
    if not keep:
        keep = [0.5]
    offsets = (np.array(keep) - 0.5) * side
    G = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), axis=-1).reshape(-1, 3)
    return G + np.array(atom.cube.center)


def centered_differences(evaluate: Callable[[np.ndarray], np.ndarray], P: np.ndarray,
                         spacing: float) -> List[np.ndarray]:
    """Second-order centered derivative of ``evaluate`` along x1, x2 and t."""
    out = []
    for j in range(3):
        step = np.zeros(3)
        step[j] = spacing
        out.append((evaluate(P + step) - evaluate(P - step)) / (2.0 * spacing))
    return out


def linear_rows(evaluate: Callable[[np.ndarray], np.ndarray], P: np.ndarray,
                spacing: float) -> np.ndarray:
    """Rows d1 v1 + d2 (v2 - rho), d1 (v2 + rho) - d2 v1, dt rho + div m at each point."""
    d0, d1, d2 = centered_differences(evaluate, P, spacing)
    r1 = d0[:, 1] + d1[:, 2] - d1[:, 0]
    r2 = d0[:, 2] + d0[:, 0] - d1[:, 1]
    r3 = d2[:, 0] + d0[:, 3] + d1[:, 4]
    return np.stack([r1, r2, r3], axis=1)


def atom_linear_residual(atom: WaveAtom, grid_spacing: float, path: str = "fields",
                         profile: Profile = DEFAULT_PROFILE) -> Tuple[float, float, float]:
    """Max-norm finite-difference residuals of the three linear rows.

    ``path="potentials"`` differentiates the potential jets directly and
    groups the terms as they cancel.
    """
    if grid_spacing <= 0.0:
        raise ValueError("grid_spacing must be positive")
    if atom.is_null:
        return (0.0, 0.0, 0.0)

    P = residual_lattice(atom, grid_spacing)
    if path == "fields":
        rows = linear_rows(lambda X: atom_fields(atom, X, profile), P, grid_spacing)
        return tuple(float(np.max(np.abs(rows[:, i]))) for i in range(3))

    if path != "potentials":
        raise ValueError(f"unknown residual path {path!r}")

    table = AtomTable([atom], profile)
    idx = np.zeros(len(P), dtype=int)

    def jets(X):
        _, hess, _, grad = table.jets(idx, X)
        return np.concatenate([hess.reshape(-1, 9), grad], axis=1)

    d0, d1, d2 = centered_differences(jets, P, grid_spacing)
    H = lambda d, i, j: d[:, 3 * i + j]
    Q = lambda d, i: d[:, 9 + i]
    r1 = 2.0 * (H(d0, 0, 1) - H(d1, 0, 0))
    r2 = 2.0 * (H(d0, 1, 1) - H(d1, 0, 1))
    r3 = ((H(d2, 0, 0) - H(d0, 2, 0)) + (H(d2, 1, 1) - H(d1, 2, 1))
          + (Q(d1, 0) - Q(d0, 1)))
    return tuple(float(np.max(np.abs(r))) for r in (r1, r2, r3))


# --------------------------------------------------------------------------
# Oscillation averaging
# --------------------------------------------------------------------------

Box = Tuple[Tuple[float, float], Tuple[float, float]]


def oscillation_average(profile: Profile, A: Callable, g: Callable, zeta_xi0: WaveFrequency,
                        k: int, t: float, box: Box = ((0.0, 1.0), (0.0, 1.0)),
                        panels: Optional[Tuple[int, int]] = None) -> float:
    """Quadrature of the integral of g(x) A(h(k xi.(x,t))) over the box."""
    if k < 1:
        raise ValueError("k must be >= 1")
    (x1_lo, x1_hi), (x2_lo, x2_hi) = box
    if panels is None:
        z1, z2 = np.abs(zeta_xi0.zeta)
        panels = (
            panels_for(x1_hi - x1_lo, 1.0 / (k * z1) if z1 > 0 else np.inf, 8, per_wavelength=4),
            panels_for(x2_hi - x2_lo, 1.0 / (k * z2) if z2 > 0 else np.inf, 8, per_wavelength=4),
        )
    X1, X2, W = gauss_box((x1_lo, x2_lo), (x1_hi, x2_hi), panels)
    theta = zeta_xi0.zeta[0] * X1 + zeta_xi0.zeta[1] * X2 + zeta_xi0.xi0 * t
    return float(np.sum(W * g(X1, X2) * A(profile.h(k * theta))))


def oscillation_limit(profile: Profile, A: Callable, g: Callable,
                      box: Box = ((0.0, 1.0), (0.0, 1.0)), panels: int = 32) -> float:
    """Predicted large-k limit: the integral of g times the torus mean of A(h)."""
    (x1_lo, x1_hi), (x2_lo, x2_hi) = box
    X1, X2, W = gauss_box((x1_lo, x2_lo), (x1_hi, x2_hi), (panels, panels))
    return float(np.sum(W * g(X1, X2))) * profile.torus_mean(A)
