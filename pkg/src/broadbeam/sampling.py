"""Frequency/angle sample sets: uniform grids and block-maximum (nonuniform) selection.

The nonuniform selector evaluates an error surface on a dense "virtual"
grid, cuts it into rectangular blocks and keeps the worst point of each
block.  Band edges are sampled at full virtual resolution by making the
``edge`` outermost blocks along each axis one virtual point wide.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeMismatch

PASSBAND = "passband"
GROUP_DELAY = "group-delay"
STOPBAND = "stopband"
WNG = "wng"


@dataclass(frozen=True)
class BandSpec:
    """Frequency band (rad/sample), angular passband/stopband intervals and steering angle (rad)."""

    freq_band: tuple
    passband: tuple
    stopband: tuple
    steer_angle: float

    def __post_init__(self):
        object.__setattr__(self, "freq_band", tuple(float(v) for v in self.freq_band))
        object.__setattr__(self, "passband", tuple(float(v) for v in self.passband))
        sb = tuple(tuple(float(v) for v in iv) for iv in self.stopband)
        object.__setattr__(self, "stopband", sb)
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list:
        out = []
        lo, hi = self.freq_band
        if not 0 < lo < hi < np.pi:
            out.append("freq_band must satisfy 0 < low < high < pi")
        ivs = [("passband", self.passband)] + [(f"stopband[{i}]", iv) for i, iv in enumerate(self.stopband)]
        for name, (a, b) in ivs:
            if not 0 <= a <= b <= np.pi:
                out.append(f"{name} must satisfy 0 <= low <= high <= pi")
        pa, pb = self.passband
        for i, (a, b) in enumerate(self.stopband):
            if a <= pb and pa <= b:
                out.append(f"stopband[{i}] overlaps the passband")
        if not pa <= self.steer_angle <= pb:
            out.append("steer_angle must lie in the passband")
        return out

    @classmethod
    def from_hz_deg(cls, sample_rate, freq_hz, passband_deg, stopband_deg, steer_deg):
        w = tuple(2 * np.pi * f / sample_rate for f in freq_hz)
        return cls(w, tuple(np.deg2rad(passband_deg)),
                   tuple(tuple(np.deg2rad(iv)) for iv in stopband_deg), float(np.deg2rad(steer_deg)))


@dataclass(frozen=True)
class GridConfig:
    """Virtual grid ``P x Q``, actual block counts ``M x K`` and unit-width edge blocks per band edge."""

    P: int = 200
    Q: int = 500
    M: int = 22
    K: int = 52
    edge: int = 3
    mode: str = "nonuniform"

    def __post_init__(self):
        if self.mode not in ("uniform", "nonuniform"):
            raise ValueError(f"mode must be 'uniform' or 'nonuniform', not {self.mode!r}")
        if not (self.P >= self.M >= 2 and self.Q >= self.K >= 2):
            raise ValueError("need P >= M >= 2 and Q >= K >= 2")
        if self.edge < 0:
            raise ValueError("edge count must be >= 0")
        for n, b in ((self.P, self.M), (self.Q, self.K)):
            if b - 2 * self.edge < 1 or (n - 2 * self.edge) < (b - 2 * self.edge):
                raise ValueError("edge count leaves no room for interior blocks")


@dataclass
class SampleSet:
    """Sample points with role tags and quadrature weights.

    ``index`` holds the (row, column) position of each point in the grid it
    was drawn from, when there is one.
    """

    omega: np.ndarray
    theta: np.ndarray
    role: np.ndarray
    weight: np.ndarray = None
    index: np.ndarray = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, float).reshape(-1)
        self.theta = np.broadcast_to(np.asarray(self.theta, float), self.omega.shape).copy()
        self.role = np.broadcast_to(np.asarray(self.role, dtype=object), self.omega.shape).copy()
        if self.weight is None:
            self.weight = np.ones_like(self.omega)
        self.weight = np.broadcast_to(np.asarray(self.weight, float), self.omega.shape).copy()
        if self.index is not None:
            self.index = np.asarray(self.index, int).reshape(len(self.omega), -1)

    def __len__(self):
        return len(self.omega)

    def select(self, role: str) -> "SampleSet":
        m = self.role == role
        return SampleSet(self.omega[m], self.theta[m], self.role[m], self.weight[m],
                         None if self.index is None else self.index[m])

    def count(self, role: str) -> int:
        return int(np.sum(self.role == role))

    @staticmethod
    def concat(sets: Sequence["SampleSet"]) -> "SampleSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return SampleSet(np.zeros(0), np.zeros(0), np.zeros(0, dtype=object))
        idx = None
        if all(s.index is not None for s in sets) and len({s.index.shape[1] for s in sets}) == 1:
            idx = np.concatenate([s.index for s in sets])
        return SampleSet(np.concatenate([s.omega for s in sets]), np.concatenate([s.theta for s in sets]),
                         np.concatenate([s.role for s in sets]), np.concatenate([s.weight for s in sets]), idx)


def allocate(widths: Sequence[float], total: int, minimum: int = 1) -> list:
    """Split ``total`` points across intervals proportionally to ``widths`` (largest remainder)."""
    widths = np.asarray(widths, float)
    if len(widths) == 1:
        return [int(total)]
    share = total * widths / widths.sum()
    counts = np.maximum(np.floor(share).astype(int), minimum)
    order = np.argsort(-(share - np.floor(share)), kind="stable")
    i = 0
    while counts.sum() < total:
        counts[order[i % len(order)]] += 1
        i += 1
    while counts.sum() > total:
        j = int(np.argmax(counts))
        counts[j] -= 1
    return [int(c) for c in counts]


def linspace_intervals(intervals, total: int) -> tuple:
    """Equally spaced points per interval (ends inclusive); returns ``(points, interval_id)``."""
    intervals = [tuple(iv) for iv in intervals]
    counts = allocate([b - a for a, b in intervals], total, minimum=2 if total >= 2 * len(intervals) else 1)
    pts, ids = [], []
    for i, ((a, b), n) in enumerate(zip(intervals, counts)):
        p = np.linspace(a, b, n) if n > 1 else np.array([(a + b) / 2])
        pts.append(p)
        ids.append(np.full(n, i))
    return np.concatenate(pts), np.concatenate(ids)


@dataclass
class UniformGrid:
    """Axes of a uniform design grid plus the flattened :class:`SampleSet`."""

    omegas: np.ndarray
    pass_thetas: np.ndarray
    stop_thetas: np.ndarray
    samples: SampleSet = field(repr=False)

    @property
    def M(self):
        return len(self.omegas)


def uniform_grid(band: BandSpec, M: int, K: int) -> UniformGrid:
    """``M`` frequencies and ``K`` angles per angular band, all with band edges included.

    Stopband angles are shared between the stopband intervals in proportion
    to their widths.  Points are ordered frequency-major, matching the rows
    of the passband/stopband steering matrices.
    """
    if M < 2 or K < 2:
        raise ValueError("M and K must be >= 2")
    omegas = np.linspace(*band.freq_band, M)
    pth = np.linspace(*band.passband, K)
    sth, _ = linspace_intervals(band.stopband, K)
    sets = []
    for role, th in ((PASSBAND, pth), (STOPBAND, sth)):
        W, T = np.meshgrid(omegas, th, indexing="ij")
        I, J = np.meshgrid(np.arange(M), np.arange(len(th)), indexing="ij")
        sets.append(SampleSet(W.ravel(), T.ravel(), role, 1.0, np.c_[I.ravel(), J.ravel()]))
    sets.append(SampleSet(omegas, band.steer_angle, WNG, 1.0, np.c_[np.arange(M), np.zeros(M, int)]))
    return UniformGrid(omegas, pth, sth, SampleSet.concat(sets))


# --------------------------------------------------------------------------
# nonuniform selection

def axis_edges(length: int, blocks: int, edge: int = 0) -> np.ndarray:
    """Block boundaries along one axis (``blocks + 1`` increasing integers from 0 to ``length``).

    ``edge`` unit-width blocks sit at each end; the interior is split at
    ``round(i * n / b)`` offsets.
    """
    inner_len, inner_blocks = length - 2 * edge, blocks - 2 * edge
    if inner_blocks < 1 or inner_len < inner_blocks:
        raise ValueError(f"cannot split {length} points into {blocks} blocks with {edge} edge blocks")
    inner = edge + np.floor(np.arange(inner_blocks + 1) * inner_len / inner_blocks + 0.5).astype(int)
    return np.concatenate([np.arange(edge), inner, length - edge + 1 + np.arange(edge)])


def block_argmax(surface: np.ndarray, row_edges, col_edges):
    """Per-block argmax of ``|surface|``; ties go to the lowest flattened index within the block."""
    a = np.abs(np.asarray(surface))
    ps, qs = [], []
    for r0, r1 in zip(row_edges[:-1], row_edges[1:]):
        for c0, c1 in zip(col_edges[:-1], col_edges[1:]):
            blk = a[r0:r1, c0:c1]
            i = int(np.argmax(blk)) if not np.all(np.isnan(blk)) else 0
            if np.isnan(blk.flat[i]):
                i = int(np.nanargmax(blk))
            p, q = divmod(i, c1 - c0)
            ps.append(r0 + p)
            qs.append(c0 + q)
    return np.asarray(ps), np.asarray(qs)


def select_nonuniform(error_surface, cfg: GridConfig, omegas=None, thetas=None, role: str = PASSBAND) -> SampleSet:
    """Worst point of each of the ``M x K`` blocks of a ``P x Q`` error surface.

    ``omegas``/``thetas`` are the virtual axes; without them the returned
    coordinates are the virtual indices.
    """
    err = np.asarray(error_surface)
    if err.shape != (cfg.P, cfg.Q):
        raise ShapeMismatch(f"error surface has shape {err.shape}, expected {(cfg.P, cfg.Q)}")
    p, q = block_argmax(err, axis_edges(cfg.P, cfg.M, cfg.edge), axis_edges(cfg.Q, cfg.K, cfg.edge))
    om = np.arange(cfg.P, dtype=float) if omegas is None else np.asarray(omegas, float)
    th = np.arange(cfg.Q, dtype=float) if thetas is None else np.asarray(thetas, float)
    return SampleSet(om[p], th[q], role, 1.0, np.c_[p, q])


def split_config(cfg: GridConfig, widths: Sequence[float]) -> list:
    """Per-interval configs for a multi-interval angular band (``Q`` and ``K`` split by width)."""
    if len(widths) == 1:
        return [cfg]
    qs = allocate(widths, cfg.Q, minimum=2 * cfg.edge + 1)
    ks = allocate(widths, cfg.K, minimum=2 * cfg.edge + 1)
    return [GridConfig(cfg.P, q, cfg.M, k, cfg.edge, cfg.mode) for q, k in zip(qs, ks)]
