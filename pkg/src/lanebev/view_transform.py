"""Front-view to BEV transformation as explicit linear operators.

A view relation map is a single matrix applied per channel to row-major
flattened front-view features, producing flattened BEV features: the
function class of a bias-free single linear layer over flattened pixels.
Two constructions are provided: an analytic one that samples front-view
features at the camera projection of each BEV cell center (inverse
perspective mapping), and a least-squares fit from (front-view, BEV)
feature pairs.  A pyramid concatenates per-scale results along channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera_geometry import CameraRig
from .errors import InsufficientRank, ShapeMismatch
from .lane_grid import GridSpec

_MIN_DEPTH = 1e-9


@dataclass
class FeatureTensor:
    """(H, W, C) feature map tagged with its downsample factor."""

    data: np.ndarray
    scale: int = 32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"feature data must be (H, W, C) with positive dims, got {self.data.shape}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def hw(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class ViewRelationMap:
    """Dense (HW_bev, HW_fv) operator between flattened feature planes."""

    matrix: np.ndarray
    fv_shape: tuple[int, int]
    bev_shape: tuple[int, int]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.fv_shape = tuple(int(v) for v in self.fv_shape)
        self.bev_shape = tuple(int(v) for v in self.bev_shape)
        expect = (self.bev_shape[0] * self.bev_shape[1], self.fv_shape[0] * self.fv_shape[1])
        if self.matrix.shape != expect:
            raise ShapeMismatch(f"matrix shape {self.matrix.shape} != {expect} from declared shapes")


@dataclass(frozen=True)
class PyramidSpec:
    """Which scales feed the transform and the shared BEV output shape."""

    scales: tuple[int, ...] = (32, 64)
    bev_shape: tuple[int, int] = (50, 10)

    def __post_init__(self):
        if len(self.scales) == 0 or len(set(self.scales)) != len(self.scales):
            raise ValueError(f"scales must be non-empty and distinct, got {self.scales}")


def build_ipm_sampling_map(
    virtual_rig: CameraRig,
    fv_shape: tuple[int, int],
    scale: int,
    bev_spec: GridSpec = GridSpec(),
    bev_shape: tuple[int, int] = (50, 10),
) -> ViewRelationMap:
    """Analytic ground-plane sampling operator.

    Each BEV cell's ground center is projected through the rig; the pixel
    coordinate is divided by `scale` and bilinear weights are deposited on
    the surrounding front-view feature pixels.  Cells that project behind
    the camera or outside the feature plane get an all-zero row, so every
    row sums to exactly 1 or 0.
    """
    fv_h, fv_w = fv_shape
    s1, s2 = bev_shape
    cell_x = (bev_spec.x_max - bev_spec.x_min) / s1
    cell_y = (bev_spec.y_max - bev_spec.y_min) / s2

    rr, cc = np.meshgrid(np.arange(s1), np.arange(s2), indexing="ij")
    gx = bev_spec.x_min + (rr.reshape(-1) + 0.5) * cell_x
    gy = bev_spec.y_min + (cc.reshape(-1) + 0.5) * cell_y

    rig_r = virtual_rig.extrinsics.rotation
    rig_t = virtual_rig.extrinsics.translation
    p_cam = np.column_stack([gx, gy, np.zeros_like(gx)]) @ rig_r.T + rig_t
    depth = p_cam[:, 2]
    front = depth > _MIN_DEPTH
    uvw = p_cam @ virtual_rig.intrinsics.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uf = uvw[:, 0] / uvw[:, 2] / scale
        vf = uvw[:, 1] / uvw[:, 2] / scale

    matrix = np.zeros((s1 * s2, fv_h * fv_w))
    usable = front & (uf >= 0) & (uf <= fv_w - 1) & (vf >= 0) & (vf <= fv_h - 1)
    for row in np.nonzero(usable)[0]:
        x0 = int(np.floor(uf[row]))
        y0 = int(np.floor(vf[row]))
        ax = uf[row] - x0
        ay = vf[row] - y0
        for dx, dy, wgt in ((0, 0, (1 - ax) * (1 - ay)), (1, 0, ax * (1 - ay)), (0, 1, (1 - ax) * ay), (1, 1, ax * ay)):
            if wgt == 0.0:
                continue
            matrix[row, (y0 + dy) * fv_w + (x0 + dx)] = wgt
    return ViewRelationMap(matrix=matrix, fv_shape=(fv_h, fv_w), bev_shape=(s1, s2))


def apply_vrm(vrm: ViewRelationMap, fv: FeatureTensor) -> FeatureTensor:
    """Apply the operator channel-by-channel: flatten, multiply, reshape."""
    if fv.hw != vrm.fv_shape:
        raise ShapeMismatch(f"feature shape {fv.hw} != map fv_shape {vrm.fv_shape}")
    flat = fv.data.reshape(-1, fv.channels)  # (HW_fv, C), row-major
    bev = vrm.matrix @ flat
    return FeatureTensor(data=bev.reshape(vrm.bev_shape + (fv.channels,)), scale=fv.scale)


def apply_pyramid(
    maps: dict[int, ViewRelationMap],
    features: dict[int, FeatureTensor],
    spec: PyramidSpec = PyramidSpec(),
) -> FeatureTensor:
    """Per-scale apply_vrm, concatenated along channels in spec order."""
    outs = []
    for scale in spec.scales:
        if scale not in maps or scale not in features:
            raise ShapeMismatch(f"missing map or features for scale {scale}")
        if maps[scale].bev_shape != spec.bev_shape:
            raise ShapeMismatch(
                f"map for scale {scale} outputs {maps[scale].bev_shape}, spec wants {spec.bev_shape}"
            )
        outs.append(apply_vrm(maps[scale], features[scale]).data)
    return FeatureTensor(data=np.concatenate(outs, axis=2), scale=min(spec.scales))


def fit_vrm_least_squares(
    samples: list[tuple[FeatureTensor, FeatureTensor]],
    ridge: float = 0.0,
) -> ViewRelationMap:
    """Recover the linear operator from (front-view, BEV) feature pairs.

    Every channel of every sample is one (input, output) pair.  Solves
    min_M sum ||M x - y||^2 + ridge ||M||_F^2.  With ridge = 0 the system
    must be determined: InsufficientRank is raised instead of silently
    regularizing when there are fewer pairs than front-view pixels (or the
    design matrix is rank-deficient).  For ill-posed fits a ridge around
    1e-6 times the mean diagonal of X^T X is a reasonable starting point;
    the value given here is used as-is, never rescaled.
    """
    if not samples:
        raise InsufficientRank("no samples given")
    fv_shape = samples[0][0].hw
    bev_shape = samples[0][1].hw
    xs = []
    ys = []
    for fv, bev in samples:
        if fv.hw != fv_shape or bev.hw != bev_shape:
            raise ShapeMismatch("all samples must share front-view and BEV shapes")
        if fv.channels != bev.channels:
            raise ShapeMismatch("paired tensors must have equal channel counts")
        xs.append(fv.data.reshape(-1, fv.channels).T)
        ys.append(bev.data.reshape(-1, bev.channels).T)
    x = np.concatenate(xs, axis=0)  # (pairs, HW_fv)
    y = np.concatenate(ys, axis=0)  # (pairs, HW_bev)

    n_unknown = x.shape[1]
    if ridge == 0.0:
        if x.shape[0] < n_unknown:
            raise InsufficientRank(f"{x.shape[0]} pairs cannot determine {n_unknown} columns without ridge")
        mt, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        if rank < n_unknown:
            raise InsufficientRank(f"design matrix rank {rank} < {n_unknown}")
    else:
        gram = x.T @ x + ridge * np.eye(n_unknown)
        mt = np.linalg.solve(gram, x.T @ y)
    return ViewRelationMap(matrix=mt.T, fv_shape=fv_shape, bev_shape=bev_shape)
