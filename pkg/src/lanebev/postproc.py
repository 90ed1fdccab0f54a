"""Grid decoding: confidence gating, online embedding clustering, curve fits.

The decode scan order is fixed: outer loop over grid columns, inner over
rows.  Each confident cell is assigned to the nearest existing cluster
center by Euclidean embedding distance when that distance is below d_gap
(strictly), updating the center by running mean; otherwise it opens a new
center.  Points are never reassigned once clustered, so results depend on
the documented scan order and are bit-reproducible.  Retained cells are
converted to road-frame coordinates using the lateral offset and the
height channel, small clusters are dropped, and each lane is fitted with
least-squares polynomials y(x), z(x) on abscissae rescaled to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAbscissae, ShapeMismatch
from .lane_grid import GridSpec, GridTensors


@dataclass(frozen=True)
class DecodeParams:
    s_threshold: float = 0.5
    d_gap: float = 1.5
    min_points: int = 4
    fit_degree: int = 3

    def __post_init__(self):
        if not 0.0 < self.s_threshold < 1.0:
            raise ValueError(f"s_threshold must be in (0, 1), got {self.s_threshold}")
        if self.d_gap <= 0:
            raise ValueError(f"d_gap must be positive, got {self.d_gap}")
        if self.min_points < 2:
            raise ValueError(f"min_points must be >= 2, got {self.min_points}")
        if self.fit_degree < 1:
            raise ValueError(f"fit_degree must be >= 1, got {self.fit_degree}")


@dataclass
class LaneInstance:
    """One decoded lane: cluster id and road-frame (x, y, z) points."""

    cluster_id: int
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError("a lane instance needs at least one point")


@dataclass
class FittedLane:
    """Polynomials for y(x) and z(x) on the rescaled abscissa t in [-1, 1].

    Coefficients are in increasing-power order of t = (2x - (a + b)) / (b - a)
    where (a, b) = x_range, so x_range fully records the affine map.
    """

    y_coeffs: np.ndarray
    z_coeffs: np.ndarray
    x_range: tuple[float, float]

    def _t(self, x):
        a, b = self.x_range
        return (2.0 * np.asarray(x, dtype=float) - (a + b)) / (b - a)

    def y(self, x):
        return np.polynomial.polynomial.polyval(self._t(x), self.y_coeffs)

    def z(self, x):
        return np.polynomial.polynomial.polyval(self._t(x), self.z_coeffs)


def _cluster_scan(vals, d_gap, assign, centers, counts):
    """Online nearest-center clustering, exactly the published scan.

    For each value: nearest existing center wins if strictly closer than
    d_gap (running-min with sentinel d_gap + 1, ties keep the earlier
    center); winners update their center by running mean, losers open a
    new center.  Returns the number of centers.
    """
    n, dim = vals.shape
    k = 0
    for i in range(n):
        min_gap = d_gap + 1.0
        min_cid = -1
        for ci in range(k):
            s = 0.0
            for t in range(dim):
                dt = centers[ci, t] - vals[i, t]
                s += dt * dt
            diff = np.sqrt(s)
            if diff < min_gap:
                min_gap = diff
                min_cid = ci
        if min_gap < d_gap:
            num = counts[min_cid]
            for t in range(dim):
                centers[min_cid, t] = (centers[min_cid, t] * num + vals[i, t]) / (num + 1)
            counts[min_cid] = num + 1
            assign[i] = min_cid
        else:
            for t in range(dim):
                centers[k, t] = vals[i, t]
            counts[k] = 1
            assign[i] = k
            k += 1
    return k


try:  # pragma: no cover - exercised implicitly wherever numba is installed
    from numba import njit

    _cluster_scan = njit(cache=True)(_cluster_scan)
except ImportError:  # pragma: no cover
    pass


def decode_grid(
    pred: GridTensors,
    spec: GridSpec = GridSpec(),
    params: DecodeParams = DecodeParams(),
) -> list[LaneInstance]:
    """Turn prediction-side grid tensors into instance-level 3D lanes.

    `pred` must carry confidence in [0, 1], an (s1, s2, D) embedding, the
    lateral offset in cell units and the height channel.  Cluster ids are
    center-creation order; clusters smaller than min_points are dropped
    (ids are not renumbered).
    """
    if pred.embedding is None:
        raise ShapeMismatch("decode_grid needs prediction tensors with an embedding")
    s1, s2 = spec.shape
    if pred.shape != (s1, s2):
        raise ShapeMismatch(f"prediction shape {pred.shape} != grid {spec.shape}")

    # scan order: outer columns, inner rows
    keep = np.argwhere(pred.confidence.T >= params.s_threshold)
    if len(keep) == 0:
        return []
    cols = keep[:, 0]
    rows = keep[:, 1]
    vals = np.ascontiguousarray(pred.embedding[rows, cols], dtype=float)

    n = len(vals)
    assign = np.empty(n, dtype=np.int64)
    centers = np.empty((n, vals.shape[1]), dtype=float)
    counts = np.zeros(n, dtype=np.int64)
    n_centers = _cluster_scan(vals, float(params.d_gap), assign, centers, counts)

    off = np.clip(pred.offset[rows, cols], -0.5, 0.5)
    xs = spec.x_min + (rows + 0.5) * spec.cell
    ys = spec.y_min + (cols + 0.5 + off) * spec.cell
    zs = pred.height[rows, cols]

    instances = []
    for cid in range(n_centers):
        member = assign == cid
        if counts[cid] < params.min_points:
            continue
        pts = np.column_stack([xs[member], ys[member], zs[member]])
        instances.append(LaneInstance(cluster_id=cid, points=pts))
    return instances


def fit_polynomial(x: np.ndarray, y: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares polynomial coefficients (increasing powers) of y over x."""
    v = np.polynomial.polynomial.polyvander(x, degree)
    coeffs, _, _, _ = np.linalg.lstsq(v, y, rcond=None)
    return coeffs


def fit_lanes(instances: list[LaneInstance], params: DecodeParams = DecodeParams()) -> list[FittedLane]:
    """Fit y(x) and z(x) per instance, degree capped at n_points - 1.

    The abscissa is affinely mapped to [-1, 1] for conditioning; see
    FittedLane for the recorded transform.
    """
    fits = []
    for inst in instances:
        x = inst.points[:, 0]
        lo, hi = float(x.min()), float(x.max())
        if hi - lo < 1e-12:
            raise DegenerateAbscissae(f"cluster {inst.cluster_id} has all x equal to {lo}")
        t = (2.0 * x - (lo + hi)) / (hi - lo)
        degree = min(params.fit_degree, len(x) - 1)
        fits.append(
            FittedLane(
                y_coeffs=fit_polynomial(t, inst.points[:, 1], degree),
                z_coeffs=fit_polynomial(t, inst.points[:, 2], degree),
                x_range=(lo, hi),
            )
        )
    return fits
