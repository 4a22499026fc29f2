"""Pixel-grid area estimation, densities, Hausdorff semi-distance, trap sets.

Verdict convention for grids: 0 = out, 1 = in, 2 = undecided.  Areas are
pixel-center counts times pixel area; the undecided band is tracked
separately so every estimate carries an explicit bracket.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

OUT, IN, UNDECIDED = 0, 1, 2


# -- geometry ------------------------------------------------------------------


@dataclass
class Region:
    """Axis-aligned rectangle given by center and half-widths."""

    center: complex
    half_width: float
    half_height: Optional[float] = None

    def __post_init__(self):
        if self.half_height is None:
            self.half_height = self.half_width

    def pixel_centers(self, resolution: int):
        cx, cy = self.center.real, self.center.imag
        hx, hy = self.half_width, self.half_height
        xs = cx - hx + (np.arange(resolution) + 0.5) * (2 * hx / resolution)
        ys = cy - hy + (np.arange(resolution) + 0.5) * (2 * hy / resolution)
        return xs[None, :] + 1j * ys[:, None]

    def pixel_area(self, resolution: int):
        return (2 * self.half_width / resolution) * (2 * self.half_height / resolution)

    def to_json(self):
        return {
            "center": [self.center.real, self.center.imag],
            "half_width": self.half_width,
            "half_height": self.half_height,
        }


@dataclass
class Disk:
    center: complex
    radius: float

    def contains(self, pts: np.ndarray):
        return np.abs(pts - self.center) <= self.radius


class Polyline:
    """A closed polyline with a spatial index for distance and winding tests."""

    def __init__(self, vertices: np.ndarray, closed: bool = True):
        v = np.asarray(vertices, dtype=complex)
        self.vertices = v
        self.closed = closed  # closure is implicit; segments wrap around
        self._tree = None
        seg_to = np.roll(v, -1) if closed else v[1:]
        seg_from = v if closed else v[:-1]
        self.seg_from = seg_from
        self.seg_to = seg_to
        self.seg_len = np.abs(seg_to - seg_from)
        self.max_gap = float(self.seg_len.max()) if len(self.seg_len) else 0.0

    def __len__(self):
        return len(self.vertices)

    @property
    def tree(self):
        if self._tree is None:
            pts = np.column_stack([self.vertices.real, self.vertices.imag])
            self._tree = cKDTree(pts)
        return self._tree

    def distance(self, pts) -> np.ndarray:
        """Exact distance to the polyline (vertex preselection + segments)."""
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        q = np.column_stack([pts.real, pts.imag])
        d_vert, idx = self.tree.query(q)
        out = np.empty(len(pts))
        maxlen = self.seg_len.max() if len(self.seg_len) else 0.0
        for i, (z, dv, j) in enumerate(zip(pts, d_vert, idx)):
            # any segment closer than dv has an endpoint within dv + seg_len
            cand = self.tree.query_ball_point([z.real, z.imag], dv + maxlen + 1e-300)
            best = dv
            n = len(self.vertices)
            for k in cand:
                for s in (k, (k - 1) % n):
                    if not self.closed and s >= len(self.seg_from):
                        continue
                    best = min(best, _seg_dist(z, self.seg_from[s], self.seg_to[s]))
            out[i] = best
        return out if out.shape else out[()]

    def distance_approx(self, pts) -> np.ndarray:
        """Nearest-vertex distance (upper bound, error <= local gap)."""
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        q = np.column_stack([pts.real, pts.imag])
        d, _ = self.tree.query(q)
        return d

    def contains(self, pts) -> np.ndarray:
        """Point-in-polygon by crossing number (closed polylines only)."""
        if not self.closed:
            raise ValueError("winding test needs a closed polyline")
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        x, y = pts.real, pts.imag
        inside = np.zeros(pts.shape, dtype=bool)
        x0, y0 = self.seg_from.real, self.seg_from.imag
        x1, y1 = self.seg_to.real, self.seg_to.imag
        # chunk over segments to bound memory
        step = max(1, int(4e6 // max(1, pts.size)))
        for s in range(0, len(x0), step):
            a0, b0 = x0[s : s + step], y0[s : s + step]
            a1, b1 = x1[s : s + step], y1[s : s + step]
            cond = (b0[:, None] > y[None, :]) != (b1[:, None] > y[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = a0[:, None] + (y[None, :] - b0[:, None]) / (b1 - b0 + 1e-300)[:, None] * (
                    a1 - a0
                )[:, None]
            crossing = cond & (x[None, :] < xint)
            inside ^= (crossing.sum(axis=0) % 2).astype(bool)
        return inside

    def self_intersects(self, sample_cap: int = 200000) -> bool:
        """Segment-pair intersection test on a spatial bucket grid."""
        n = len(self.seg_from)
        if n > sample_cap:
            return False  # too large to check exhaustively; callers downsample
        mid = (self.seg_from + self.seg_to) / 2
        tree = cKDTree(np.column_stack([mid.real, mid.imag]))
        r = 2 * self.seg_len.max()
        pairs = tree.query_pairs(r)
        for i, j in pairs:
            if abs(i - j) <= 1 or {i, j} == {0, n - 1}:
                continue
            if _segments_cross(
                self.seg_from[i], self.seg_to[i], self.seg_from[j], self.seg_to[j]
            ):
                return True
        return False

    def to_csv(self, ts=None):
        lines = ["t,re,im"]
        n = len(self.vertices)
        for i, z in enumerate(self.vertices):
            t = ts[i] if ts is not None else i / n
            lines.append(f"{t!r},{z.real!r},{z.imag!r}")
        return "\n".join(lines) + "\n"


def _seg_dist(z, a, b):
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0:
        return abs(z - a)
    t = ((z - a).real * ab.real + (z - a).imag * ab.imag) / denom
    t = min(1.0, max(0.0, t))
    return abs(z - (a + t * ab))


def _segments_cross(a0, a1, b0, b1):
    def orient(p, q, r):
        v = (q - p).real * (r - p).imag - (q - p).imag * (r - p).real
        return int(v > 0) - int(v < 0)

    return (
        orient(a0, a1, b0) != orient(a0, a1, b1)
        and orient(b0, b1, a0) != orient(b0, b1, a1)
    )


# -- grid estimates --------------------------------------------------------------


@dataclass
class GridEstimate:
    region: Region
    resolution: int
    verdicts: np.ndarray  # uint8 (res, res)
    pred_name: str = ""

    @property
    def counts(self):
        flat = self.verdicts.ravel()
        return (
            int(np.count_nonzero(flat == IN)),
            int(np.count_nonzero(flat == OUT)),
            int(np.count_nonzero(flat == UNDECIDED)),
        )

    @property
    def area_in(self):
        return self.counts[0] * self.region.pixel_area(self.resolution)

    @property
    def area_undecided(self):
        return self.counts[2] * self.region.pixel_area(self.resolution)

    @property
    def bracket(self):
        lo = self.area_in
        return lo, lo + self.area_undecided

    def dens(self):
        n_in, n_out, n_und = self.counts
        return n_in / (n_in + n_out + n_und)

    def to_p5(self) -> bytes:
        gray = np.zeros_like(self.verdicts)
        gray[self.verdicts == IN] = 255
        gray[self.verdicts == UNDECIDED] = 128
        header = f"P5\n{self.resolution} {self.resolution}\n255\n".encode()
        return header + gray.astype(np.uint8).tobytes()

    def summary(self):
        n_in, n_out, n_und = self.counts
        return {
            "area_in": self.area_in,
            "area_undecided": self.area_undecided,
            "resolution": self.resolution,
            "region": self.region.to_json(),
            "counts": {"in": n_in, "out": n_out, "undecided": n_und},
        }

    def refine(self, pred, workers: int = 1) -> "GridEstimate":
        """Double the resolution, re-evaluating only undecided pixels.

        Children of decided pixels inherit the parent verdict, so the bracket
        width never increases under refinement.
        """
        res2 = self.resolution * 2
        inherited = np.repeat(np.repeat(self.verdicts, 2, axis=0), 2, axis=1)
        mask = inherited == UNDECIDED
        if mask.any():
            pts = self.region.pixel_centers(res2)[mask]
            fresh = _eval_pred(pred, pts, workers)
            inherited = inherited.copy()
            inherited[mask] = fresh
        return GridEstimate(self.region, res2, inherited, self.pred_name)


def _eval_pred(pred, pts: np.ndarray, workers: int = 1) -> np.ndarray:
    flat = pts.ravel()
    if workers <= 1 or flat.size < 4096:
        out = np.asarray(pred(flat), dtype=np.uint8)
        return out.reshape(pts.shape)
    chunks = np.array_split(flat, workers * 4)
    with multiprocessing.Pool(workers) as pool:
        parts = pool.map(pred, chunks)
    return np.concatenate([np.asarray(p, dtype=np.uint8) for p in parts]).reshape(pts.shape)


def grid_area(
    pred: Callable[[np.ndarray], np.ndarray],
    region: Region,
    resolution: int,
    workers: int = 1,
    band_from_neighbors: bool = False,
    supersample: bool = False,
) -> GridEstimate:
    """Sample the membership predicate at pixel centers.

    ``band_from_neighbors`` marks in-pixels adjacent to out-pixels as the
    undecided band (used by escape-based predicates whose in-verdict at the
    iterate budget is not a proof).  ``supersample`` re-evaluates undecided
    pixels at 4 sub-centers and keeps ties undecided.
    """
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    pts = region.pixel_centers(resolution)
    verdicts = _eval_pred(pred, pts, workers)
    if band_from_neighbors:
        inn = verdicts == IN
        out = verdicts == OUT
        near_out = np.zeros_like(out)
        near_out[1:, :] |= out[:-1, :]
        near_out[:-1, :] |= out[1:, :]
        near_out[:, 1:] |= out[:, :-1]
        near_out[:, :-1] |= out[:, 1:]
        verdicts = verdicts.copy()
        verdicts[inn & near_out] = UNDECIDED
    if supersample:
        und = np.argwhere(verdicts == UNDECIDED)
        if len(und):
            hx = region.half_width / resolution
            hy = region.half_height / resolution
            base = pts[und[:, 0], und[:, 1]]
            offs = np.array(
                [(-hx / 2 - 1j * hy / 2), (hx / 2 - 1j * hy / 2), (-hx / 2 + 1j * hy / 2), (hx / 2 + 1j * hy / 2)]
            )
            sub = (base[:, None] + offs[None, :]).ravel()
            subv = _eval_pred(pred, sub, workers).reshape(len(und), 4)
            n_in = (subv == IN).sum(axis=1)
            n_out = (subv == OUT).sum(axis=1)
            new = np.full(len(und), UNDECIDED, dtype=np.uint8)
            new[n_in > n_out + (subv == UNDECIDED).sum(axis=1)] = IN
            new[n_out > n_in + (subv == UNDECIDED).sum(axis=1)] = OUT
            verdicts = verdicts.copy()
            verdicts[und[:, 0], und[:, 1]] = new
    name = getattr(pred, "name", pred.__class__.__name__)
    return GridEstimate(Region(region.center, region.half_width, region.half_height), resolution, verdicts, name)


def density(U, X, resolution: int = 512, workers: int = 1) -> float:
    """dens_U(X): in-fraction of X over the pixel set of U.

    U is a Disk, Region or boolean mask aligned with a GridEstimate X;
    X is a GridEstimate or a membership predicate.
    """
    if isinstance(X, GridEstimate):
        pts = X.region.pixel_centers(X.resolution)
        if isinstance(U, Disk):
            sel = U.contains(pts)
        elif isinstance(U, Region):
            sel = (np.abs(pts.real - U.center.real) <= U.half_width) & (
                np.abs(pts.imag - U.center.imag) <= U.half_height
            )
        elif isinstance(U, np.ndarray):
            sel = U
        else:
            raise TypeError(f"unsupported region type {type(U)}")
        n_sel = int(np.count_nonzero(sel))
        if n_sel == 0:
            raise ValueError("region U has zero pixel area")
        n_in = int(np.count_nonzero(X.verdicts[sel] == IN))
        return n_in / n_sel
    # X is a predicate: sample a fresh grid over U's bounding box
    if isinstance(U, Disk):
        reg = Region(U.center, U.radius)
        est = grid_area(X, reg, resolution, workers)
        return density(U, est)
    if isinstance(U, Region):
        est = grid_area(X, U, resolution, workers)
        return est.dens()
    raise TypeError(f"unsupported region type {type(U)}")


def hausdorff_semidistance(X, Y) -> float:
    """sup over X of distance to Y (asymmetric); Y is a cloud or Polyline."""
    X = np.atleast_1d(np.asarray(X, dtype=complex))
    if X.size == 0:
        raise ValueError("empty source cloud")
    if isinstance(Y, Polyline):
        if len(Y) == 0:
            raise ValueError("empty target polyline")
        return float(Y.distance(X).max())
    Y = np.atleast_1d(np.asarray(Y, dtype=complex))
    if Y.size == 0:
        raise ValueError("empty target cloud")
    tree = cKDTree(np.column_stack([Y.real, Y.imag]))
    d, _ = tree.query(np.column_stack([X.real, X.imag]))
    return float(d.max())


# -- membership predicates -------------------------------------------------------


@dataclass
class FilledJuliaPredicate:
    """Escape-budget membership for the filled Julia set of z -> lam z + z^2.

    Escape by m_low -> out; escape in (m_low, m_max] -> undecided (the
    budget-sensitive band); still bounded at m_max -> in.
    """

    lam: complex
    m_max: int = 2000
    escape_radius: float = 3.0
    m_low: Optional[int] = None
    name: str = "filled-julia"

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        m_low = self.m_low if self.m_low is not None else self.m_max // 2
        z = np.array(pts, dtype=complex)
        verdict = np.full(z.shape, IN, dtype=np.uint8)
        alive = np.ones(z.shape, dtype=bool)
        lam = complex(self.lam)
        R2 = self.escape_radius**2
        for k in range(1, self.m_max + 1):
            za = z[alive]
            za = lam * za + za * za
            z[alive] = za
            esc = za.real**2 + za.imag**2 > R2
            if esc.any():
                idx = np.flatnonzero(alive)[esc]
                verdict[idx] = OUT if k <= m_low else UNDECIDED
                alive[idx] = False
            if not alive.any():
                break
        return verdict


@dataclass
class DiskPredicate:
    center: complex
    radius: float
    name: str = "disk"

    def __call__(self, pts):
        v = np.where(np.abs(np.asarray(pts) - self.center) <= self.radius, IN, OUT)
        return v.astype(np.uint8)


@dataclass
class EmptyPredicate:
    name: str = "empty"

    def __call__(self, pts):
        return np.full(np.asarray(pts).shape, OUT, dtype=np.uint8)


# -- the trap sets K(delta), K_n(delta) -------------------------------------------


def rasterize_fill(poly: Polyline, x0, y0, dx, dy, grid):
    """Curve-cell mask and flood-filled interior on a raster grid.

    The polyline is densified so consecutive samples land in 8-adjacent
    cells, which makes the curve a barrier for the 4-connected fill.
    """
    from scipy.ndimage import binary_fill_holes

    v = poly.vertices
    step = min(dx, dy) / 2
    seg = (np.roll(v, -1) if poly.closed else np.append(v[1:], v[-1])) - v
    nsub = np.maximum(1, np.ceil(np.abs(seg) / step).astype(int))
    if nsub.max() > 1:
        dense = []
        for i, n in enumerate(nsub):
            if n == 1:
                dense.append(v[i : i + 1])
            else:
                ts = np.arange(n) / n
                dense.append(v[i] + ts * seg[i])
        vv = np.concatenate(dense)
    else:
        vv = v
    ix = np.clip(((vv.real - x0) / dx).astype(int), 0, grid - 1)
    iy = np.clip(((vv.imag - y0) / dy).astype(int), 0, grid - 1)
    curve = np.zeros((grid, grid), dtype=bool)
    curve[iy, ix] = True
    filled = binary_fill_holes(curve)
    return curve, filled


class VNeighborhood:
    """Fast membership test for {z : d(z, Delta) < delta}.

    A point is in V(delta) iff it lies inside the Siegel boundary or within
    delta of it.  Queries run against a precomputed raster classification;
    only points near the delta-contour or on boundary cells fall through to
    exact distance and winding tests.
    """

    def __init__(self, boundary: Polyline, delta: float, grid: int = 1024):
        self.boundary = boundary
        self.delta = float(delta)
        v = boundary.vertices
        pad = delta + boundary.max_gap + 1e-9
        xmin, xmax = v.real.min() - pad, v.real.max() + pad
        ymin, ymax = v.imag.min() - pad, v.imag.max() + pad
        self.x0, self.y0 = xmin, ymin
        self.dx = (xmax - xmin) / grid
        self.dy = (ymax - ymin) / grid
        self.grid = grid
        cell_diag = float(np.hypot(self.dx, self.dy))
        if delta < 2 * cell_diag:
            raise ValueError(
                f"delta={delta} under-resolved by the classification grid; "
                f"raise `grid` above {int(grid * 2 * cell_diag / delta) + 1}"
            )
        curve, filled = rasterize_fill(boundary, self.x0, self.y0, self.dx, self.dy, grid)
        inside_cell = filled & ~curve
        xs = xmin + (np.arange(grid) + 0.5) * self.dx
        ys = ymin + (np.arange(grid) + 0.5) * self.dy
        centers = (xs[None, :] + 1j * ys[:, None]).ravel()
        d = boundary.distance_approx(centers).reshape(grid, grid)
        margin = 0.5 * cell_diag + boundary.max_gap
        self.cell_in = inside_cell | (d + margin < delta)
        self.cell_out = ~filled & (d - margin > delta)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        ix = ((pts.real - self.x0) / self.dx).astype(int)
        iy = ((pts.imag - self.y0) / self.dy).astype(int)
        in_box = (ix >= 0) & (ix < self.grid) & (iy >= 0) & (iy < self.grid)
        res = np.zeros(pts.shape, dtype=bool)
        ixc = np.clip(ix, 0, self.grid - 1)
        iyc = np.clip(iy, 0, self.grid - 1)
        res[in_box & self.cell_in[iyc, ixc]] = True
        unsure = in_box & ~self.cell_in[iyc, ixc] & ~self.cell_out[iyc, ixc]
        if unsure.any():
            zs = pts[unsure]
            d = self.boundary.distance(zs)
            inside = self.boundary.contains(zs)
            res[unsure] = (d < self.delta) | inside
        return res


@dataclass
class KDeltaSpec:
    """Orbit trap: points whose whole orbit stays within delta of the disk."""

    boundary: Polyline
    delta: float
    lam: complex  # multiplier of the iterated map (base or perturbed)
    m_max: int = 10000
    escape_radius: float = 4.0
    vgrid: int = 1024
    _vn: Optional[VNeighborhood] = field(default=None, repr=False)

    @property
    def vn(self) -> VNeighborhood:
        if self._vn is None:
            self._vn = VNeighborhood(self.boundary, self.delta, self.vgrid)
        return self._vn


def k_delta_membership(spec: KDeltaSpec, z) -> tuple:
    """('in', None) or ('out', first exit index)."""
    res = k_delta_verdicts(spec, np.array([z], dtype=complex), return_exit=True)
    v, exit_idx = res
    if v[0] == IN:
        return ("in", None)
    return ("out", int(exit_idx[0]))


def k_delta_verdicts(spec: KDeltaSpec, pts: np.ndarray, return_exit: bool = False):
    """Vectorized trap verdicts for an array of starting points."""
    z = np.array(pts, dtype=complex).ravel()
    lam = complex(spec.lam)
    vn = spec.vn
    verdict = np.full(z.shape, IN, dtype=np.uint8)
    exit_idx = np.full(z.shape, -1, dtype=np.int64)
    alive = vn.contains(z)
    verdict[~alive] = OUT
    exit_idx[~alive] = 0
    R2 = spec.escape_radius**2
    for k in range(1, spec.m_max + 1):
        if not alive.any():
            break
        za = z[alive]
        za = lam * za + za * za
        z[alive] = za
        ok = za.real**2 + za.imag**2 <= R2
        ok[ok] = vn.contains(za[ok])
        if not ok.all():
            idx = np.flatnonzero(alive)[~ok]
            verdict[idx] = OUT
            exit_idx[idx] = k
            alive[idx] = False
    out = verdict.reshape(np.shape(pts))
    if return_exit:
        return out, exit_idx.reshape(np.shape(pts))
    return out


@dataclass
class KDeltaPredicate:
    spec: KDeltaSpec
    name: str = "k-delta"

    def __call__(self, pts):
        return k_delta_verdicts(self.spec, pts)


def density_profile(spec: KDeltaSpec, z0: complex, radii: Sequence[float], px_per_radius: int = 48):
    """dens_{D(z0, d)} of the complement of the trap, one value per radius."""
    radii = list(radii)
    if any(radii[i] <= radii[i + 1] for i in range(len(radii) - 1)) and len(radii) > 1:
        if not all(radii[i] > radii[i + 1] for i in range(len(radii) - 1)):
            raise ValueError("radii must be strictly decreasing")
    out = []
    pred = KDeltaPredicate(spec)
    for d in radii:
        reg = Region(z0, d)
        est = grid_area(pred, reg, 2 * px_per_radius)
        pts = reg.pixel_centers(2 * px_per_radius)
        sel = np.abs(pts - z0) <= d
        n_sel = int(np.count_nonzero(sel))
        n_out = int(np.count_nonzero(est.verdicts[sel] == OUT))
        out.append(n_out / n_sel)
    return out
