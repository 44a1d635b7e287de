"""Composite Gauss-Legendre rules on intervals and boxes."""

from functools import lru_cache
from typing import Tuple

import numpy as np


@lru_cache(maxsize=32)
def _reference_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def gauss_panels(lo: float, hi: float, panels: int, order: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of ``panels`` equal Gauss-Legendre panels on [lo, hi]."""
    panels = max(1, int(panels))
    ref_nodes, ref_weights = _reference_rule(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return nodes, weights


def gauss_box(lo: Tuple[float, float], hi: Tuple[float, float], panels: Tuple[int, int],
              order: int = 4) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor rule on a rectangle; returns flattened x1, x2 and weights."""
    n1, w1 = gauss_panels(lo[0], hi[0], panels[0], order)
    n2, w2 = gauss_panels(lo[1], hi[1], panels[1], order)
    X1, X2 = np.meshgrid(n1, n2, indexing="ij")
    W = np.outer(w1, w2)
    return X1.ravel(), X2.ravel(), W.ravel()


def panels_for(extent: float, wavelength: float, minimum: int, per_wavelength: float = 2.0) -> int:
    """Panel count keeping ``per_wavelength`` panels per oscillation."""
    if not np.isfinite(wavelength) or wavelength <= 0.0:
        return int(minimum)
    return int(max(minimum, np.ceil(per_wavelength * extent / wavelength)))
