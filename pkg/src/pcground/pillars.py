"""Pillar encoding, the three-stage BEV backbone, and the FPN merge.

BEV maps index rows by x (forward) and columns by y (lateral): cell
``(r, c)`` covers ``x in [x0 + r*cell, x0 + (r+1)*cell)`` and the analogous
interval in y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, gelu
from . import functional as F
from .layers import Conv2d, GroupNorm, Linear, Module

LIDAR_FIELDS = 4  # x, y, z, intensity
RADAR_FIELDS = 5  # x, y, z, rcs, radial velocity
MAX_POINTS = {"lidar": 32, "radar": 10}
SENSOR_FIELDS = {"lidar": LIDAR_FIELDS, "radar": RADAR_FIELDS}


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple[float, float] = (0.0, 51.2)
    y_range: tuple[float, float] = (-25.6, 25.6)
    z_range: tuple[float, float] = (-3.0, 5.0)
    cell: float = 0.32
    stage_channels: tuple[int, int, int] = (64, 128, 256)
    max_points: dict = field(default_factory=lambda: dict(MAX_POINTS))

    def __post_init__(self):
        h, w = self.raw_shape
        if h % 8 or w % 8:
            raise ValueError("raw grid extents must be divisible by 8")

    @property
    def raw_shape(self) -> tuple[int, int]:
        h = round((self.x_range[1] - self.x_range[0]) / self.cell)
        w = round((self.y_range[1] - self.y_range[0]) / self.cell)
        return h, w

    @property
    def stage_shapes(self) -> list[tuple[int, int, int]]:
        h, w = self.raw_shape
        return [(c, h // 2 ** (i + 1), w // 2 ** (i + 1)) for i, c in enumerate(self.stage_channels)]

    @property
    def head_cell(self) -> float:
        """Cell size of the stage-3 (head) resolution."""
        return 2.0 * self.cell

    @property
    def head_shape(self) -> tuple[int, int]:
        return self.stage_shapes[0][1:]

    @classmethod
    def reduced(cls) -> "GridSpec":
        """40x40 stage-3 grid with C3 = 16."""
        return cls(cell=0.64, stage_channels=(16, 32, 64))


@dataclass
class PillarSet:
    """Augmented points grouped into non-empty cells.

    ``features`` rows are raw fields followed by xyz offsets from the pillar
    centroid; ``point_pillar[i]`` is the pillar of row ``i``; ``cells`` holds
    (row, col) per pillar, unique.
    """

    sensor: str
    features: np.ndarray
    point_pillar: np.ndarray
    cells: np.ndarray

    @property
    def n_pillars(self) -> int:
        return len(self.cells)

    def counts(self) -> np.ndarray:
        return np.bincount(self.point_pillar, minlength=self.n_pillars)


def pillarize(points: np.ndarray, grid: GridSpec, sensor: str, seed: int = 0) -> PillarSet:
    """Group a point cloud into BEV pillars.

    Points are sorted canonically (lexicographic over all fields) before the
    seeded subsample of over-full pillars, so the result does not depend on
    input order.
    """
    if sensor not in SENSOR_FIELDS:
        raise ValueError(f"unknown sensor {sensor!r}")
    nf = SENSOR_FIELDS[sensor]
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        points = points.reshape(0, nf)
    if points.ndim != 2 or points.shape[1] != nf:
        raise ValueError(f"{sensor} points need {nf} fields, got shape {points.shape}")
    empty = PillarSet(sensor, np.zeros((0, nf + 3)), np.zeros(0, np.int64), np.zeros((0, 2), np.int64))
    if len(points) == 0:
        return empty

    h, w = grid.raw_shape
    r = np.floor((points[:, 0] - grid.x_range[0]) / grid.cell).astype(np.int64)
    c = np.floor((points[:, 1] - grid.y_range[0]) / grid.cell).astype(np.int64)
    keep = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    keep &= (points[:, 2] >= grid.z_range[0]) & (points[:, 2] < grid.z_range[1])
    points, r, c = points[keep], r[keep], c[keep]
    if len(points) == 0:
        return empty

    order = np.lexsort(points.T[::-1])
    points, flat = points[order], (r * w + c)[order]
    order = np.argsort(flat, kind="stable")
    points, flat = points[order], flat[order]
    cells, start, count = np.unique(flat, return_index=True, return_counts=True)

    cap = grid.max_points[sensor]
    rng = np.random.default_rng(seed)
    rows = []
    for s, n in zip(start, count):
        if n > cap:
            rows.append(s + np.sort(rng.choice(n, cap, replace=False)))
        else:
            rows.append(np.arange(s, s + n))
    sizes = np.array([len(x) for x in rows])
    sel = np.concatenate(rows)
    pts = points[sel]
    point_pillar = np.repeat(np.arange(len(cells)), sizes)
    sums = np.zeros((len(cells), 3))
    np.add.at(sums, point_pillar, pts[:, :3])
    centroid = sums / sizes[:, None]
    feats = np.hstack([pts, pts[:, :3] - centroid[point_pillar]])
    cell_rc = np.column_stack(np.divmod(cells, w))
    return PillarSet(sensor, feats, point_pillar, cell_rc)


def scatter_bev(pillar_vectors: Tensor, cells: np.ndarray, grid_hw: tuple[int, int],
                batch_index: np.ndarray | None = None, batch_size: int = 1) -> Tensor:
    """Dense ``(N, C, H, W)`` map with each pillar vector at its cell, zeros elsewhere."""
    h, w = grid_hw
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    b = np.zeros(len(cells), np.int64) if batch_index is None else np.asarray(batch_index)
    flat = b * h * w + cells[:, 0] * w + cells[:, 1]
    c = pillar_vectors.shape[1]
    return F.scatter_cells(pillar_vectors, flat, (batch_size, c, h, w))


class PillarEncoder(Module):
    """Shared linear map on augmented points, then max over each pillar."""

    def __init__(self, sensor: str, c_out: int, rng: np.random.Generator):
        self.sensor = sensor
        self.proj = Linear(SENSOR_FIELDS[sensor] + 3, c_out, rng)

    def forward(self, pillar_sets: list[PillarSet], grid: GridSpec) -> Tensor:
        feats, seg, cells, bidx = [], [], [], []
        offset = 0
        for b, ps in enumerate(pillar_sets):
            feats.append(ps.features)
            seg.append(ps.point_pillar + offset)
            cells.append(ps.cells)
            bidx.append(np.full(ps.n_pillars, b))
            offset += ps.n_pillars
        if offset == 0:
            c = self.proj.weight.shape[0]
            return Tensor(np.zeros((len(pillar_sets), c) + grid.raw_shape))
        y = self.proj(Tensor(np.vstack(feats)), channel_axis=1)
        pv = F.segment_max(y, np.concatenate(seg), offset)
        return scatter_bev(pv, np.vstack(cells), grid.raw_shape, np.concatenate(bidx), len(pillar_sets))


class ConvBlock(Module):
    """(conv - norm - GeLU) x 2, the first conv strided."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, stride: int = 2):
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride)
        self.norm1 = GroupNorm(c_out)
        self.conv2 = Conv2d(c_out, c_out, 3, rng)
        self.norm2 = GroupNorm(c_out)

    def forward(self, x: Tensor) -> Tensor:
        x = gelu(self.norm1(self.conv1(x)))
        return gelu(self.norm2(self.conv2(x)))


class Backbone(Module):
    """Three strided stages producing maps at 1/2, 1/4 and 1/8 of the raw grid."""

    def __init__(self, c_in: int, stage_channels, rng: np.random.Generator):
        chans = [c_in, *stage_channels]
        self.stages = [ConvBlock(chans[i], chans[i + 1], rng) for i in range(3)]

    def forward(self, bev: Tensor) -> list[Tensor]:
        outs = []
        x = bev
        for stage in self.stages:
            x = stage(x)
            outs.append(x)
        return outs


class FPN(Module):
    """Project stages 4/5 to the stage-3 width, upsample, concat, 1x1 to twice that width."""

    def __init__(self, stage_channels, rng: np.random.Generator, out_channels: int | None = None):
        c3, c4, c5 = stage_channels
        self.lat4 = Conv2d(c4, c3, 1, rng)
        self.lat5 = Conv2d(c5, c3, 1, rng)
        self.out_channels = out_channels or 2 * c3
        self.merge = Conv2d(3 * c3, self.out_channels, 1, rng)

    def forward(self, stages: list[Tensor]) -> Tensor:
        s3, s4, s5 = stages
        u4 = F.upsample_nearest(self.lat4(s4), s3.shape[-1] // s4.shape[-1])
        u5 = F.upsample_nearest(self.lat5(s5), s3.shape[-1] // s5.shape[-1])
        return self.merge(concat([s3, u4, u5], axis=-3))
