"""Planar domains on uniform grids: rasterization, measure, perimeter,
symmetric differences and Fraenkel asymmetry.

Sets are described symbolically by :class:`DomainSpec` (disks, simple
polygons, unions, differences) and carried numerically by
:class:`GridDomain`, a cell-center indicator mask with spacing ``h``.
Cells are classified by whether their center lies in the set; there are
no partial-cell volume fractions, so measures and symmetric differences
are exactly additive at the cell level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.signal import fftconvolve
from skimage.measure import find_contours

__all__ = [
    "DomainSpec",
    "GridDomain",
    "BallSpec",
    "unit_ball_measure",
    "rasterize",
    "measure",
    "perimeter",
    "ball_same_measure",
    "rasterize_ball",
    "symmetric_difference_measure",
    "fraenkel_asymmetry",
    "isoperimetric_deficit",
]


def unit_ball_measure(n: int) -> float:
    """Volume of the unit ball in R^n (pi for n = 2)."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# symbolic domain specifications


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper intersection test for open segments p1p2 and p3p4."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass(frozen=True)
class DomainSpec:
    """Tagged union of planar set constructions.

    shape is one of ``disk`` (center, radius), ``polygon`` (simple vertex
    list), ``union`` or ``difference`` (of sub-specs).  Instances are built
    through the classmethod constructors, which validate their inputs.
    """

    shape: str
    center: tuple[float, float] | None = None
    radius: float | None = None
    vertices: tuple[tuple[float, float], ...] | None = None
    parts: tuple["DomainSpec", ...] = field(default_factory=tuple)

    @classmethod
    def disk(cls, center, radius) -> "DomainSpec":
        if radius <= 0:
            raise ValueError("disk radius must be positive")
        return cls(shape="disk", center=(float(center[0]), float(center[1])),
                   radius=float(radius))

    @classmethod
    def polygon(cls, vertices) -> "DomainSpec":
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        k = len(verts)
        for i in range(k):
            a, b = verts[i], verts[(i + 1) % k]
            for j in range(i + 1, k):
                c, d = verts[j], verts[(j + 1) % k]
                if j == i or (j + 1) % k == i or (i + 1) % k == j:
                    continue
                if _segments_intersect(a, b, c, d):
                    raise ValueError("polygon is self-intersecting")
        return cls(shape="polygon", vertices=verts)

    @classmethod
    def union(cls, *parts: "DomainSpec") -> "DomainSpec":
        if not parts:
            raise ValueError("union of nothing")
        return cls(shape="union", parts=tuple(parts))

    @classmethod
    def difference(cls, base: "DomainSpec", hole: "DomainSpec") -> "DomainSpec":
        return cls(shape="difference", parts=(base, hole))

    # -- membership -------------------------------------------------------

    def contains(self, x, y):
        """Vectorized membership of points (x, y) in the (open) set."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "disk":
            cx, cy = self.center
            return (x - cx) ** 2 + (y - cy) ** 2 < self.radius ** 2
        if self.shape == "polygon":
            vx = np.array([v[0] for v in self.vertices])
            vy = np.array([v[1] for v in self.vertices])
            inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
            j = len(vx) - 1
            for i in range(len(vx)):
                cond = (vy[i] > y) != (vy[j] > y)
                with np.errstate(divide="ignore", invalid="ignore"):
                    xin = (vx[j] - vx[i]) * (y - vy[i]) / (vy[j] - vy[i]) + vx[i]
                inside ^= cond & (x < xin)
                j = i
            return inside
        if self.shape == "union":
            out = self.parts[0].contains(x, y)
            for p in self.parts[1:]:
                out = out | p.contains(x, y)
            return out
        if self.shape == "difference":
            return self.parts[0].contains(x, y) & ~self.parts[1].contains(x, y)
        raise ValueError(f"unknown shape {self.shape!r}")

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of a box containing the set."""
        if self.shape == "disk":
            cx, cy = self.center
            r = self.radius
            return cx - r, cy - r, cx + r, cy + r
        if self.shape == "polygon":
            xs = [v[0] for v in self.vertices]
            ys = [v[1] for v in self.vertices]
            return min(xs), min(ys), max(xs), max(ys)
        if self.shape == "union":
            boxes = [p.bounding_box() for p in self.parts]
            return (min(b[0] for b in boxes), min(b[1] for b in boxes),
                    max(b[2] for b in boxes), max(b[3] for b in boxes))
        if self.shape == "difference":
            return self.parts[0].bounding_box()
        raise ValueError(f"unknown shape {self.shape!r}")

    # -- JSON round trip --------------------------------------------------

    def to_json(self) -> dict:
        if self.shape == "disk":
            return {"shape": "disk", "center": list(self.center),
                    "radius": self.radius}
        if self.shape == "polygon":
            return {"shape": "polygon",
                    "vertices": [list(v) for v in self.vertices]}
        return {"shape": self.shape,
                "parts": [p.to_json() for p in self.parts]}

    @classmethod
    def from_json(cls, data: dict) -> "DomainSpec":
        shape = data.get("shape")
        if shape == "disk":
            return cls.disk(data["center"], data["radius"])
        if shape == "polygon":
            return cls.polygon(data["vertices"])
        if shape == "union":
            return cls.union(*(cls.from_json(p) for p in data["parts"]))
        if shape == "difference":
            parts = [cls.from_json(p) for p in data["parts"]]
            if len(parts) != 2:
                raise ValueError("difference takes exactly 2 parts")
            return cls.difference(*parts)
        raise ValueError(f"unknown shape {shape!r}")


@dataclass(frozen=True)
class BallSpec:
    """A disk given by center and radius."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def measure(self) -> float:
        return math.pi * self.radius ** 2


class GridDomain:
    """Cell mask on a uniform grid.

    mask[i, j] is True when the center of cell (i, j) lies in the set;
    axis 0 runs along x.  The center of cell (i, j) is
    ``origin + (i + 1/2, j + 1/2) * h``.  The outermost ring of cells is
    always False so five-point stencils never leave the array.

    ``face_fractions``, when present, holds for each of the four face
    directions the fractional distance (in units of h) from an interior
    cell center to the domain boundary along that face.  It is filled by
    :func:`rasterize` and consumed by the elliptic solver; masks built
    directly from arrays leave it None (fraction 1, plain ghost values).
    """

    def __init__(self, mask, h, origin, face_fractions=None):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        if h <= 0:
            raise ValueError("grid spacing must be positive")
        if not mask.any():
            raise ValueError("empty mask")
        if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
            raise ValueError("mask must be False on the outer cell ring")
        self.mask = mask
        self.h = float(h)
        self.origin = (float(origin[0]), float(origin[1]))
        self.face_fractions = face_fractions

    @property
    def shape(self):
        return self.mask.shape

    @property
    def num_cells(self) -> int:
        return int(self.mask.sum())

    def cell_centers(self):
        """Coordinate arrays (X, Y) of all cell centers, shaped like mask."""
        nx, ny = self.mask.shape
        x = self.origin[0] + (np.arange(nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def with_mask(self, mask) -> "GridDomain":
        """Same grid frame, different mask (face fractions dropped)."""
        return GridDomain(mask, self.h, self.origin)


# ---------------------------------------------------------------------------
# rasterization

_FACE_DIRS = {"e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1)}


def _boundary_fractions(spec: DomainSpec, dom: GridDomain) -> dict:
    """Fractional center-to-boundary distances for cut faces.

    For each interior cell whose neighbor in direction d is outside, find
    theta in (0, 1] with ``center + theta*h*d`` on the boundary, by
    bisection on the membership predicate.  Fractions are clamped away
    from zero to keep the solver matrix well conditioned.
    """
    mask = dom.mask
    h = dom.h
    X, Y = dom.cell_centers()
    out = {}
    for name, (dx, dy) in _FACE_DIRS.items():
        nb_in = np.zeros_like(mask)
        nb_in[1:-1, 1:-1] = mask[1 + dx:mask.shape[0] - 1 + dx,
                                 1 + dy:mask.shape[1] - 1 + dy]
        cut = mask & ~nb_in
        frac = np.ones(mask.shape)
        if cut.any():
            cx = X[cut]
            cy = Y[cut]
            lo = np.zeros(cx.shape)
            hi = np.ones(cx.shape)
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                inside = spec.contains(cx + mid * h * dx, cy + mid * h * dy)
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            frac[cut] = np.maximum(0.5 * (lo + hi), 1e-6)
        out[name] = frac
    return out


def rasterize(spec: DomainSpec, h: float) -> GridDomain:
    """Rasterize a DomainSpec at spacing h.

    The grid covers the bounding box with a two-cell margin on every side,
    so the mandatory empty outer ring holds automatically.  Raises when no
    cell center falls inside the set (h too coarse).
    """
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    xmin, ymin, xmax, ymax = spec.bounding_box()
    if xmax <= xmin or ymax <= ymin:
        raise ValueError("degenerate bounding box")
    ox = xmin - 2.0 * h
    oy = ymin - 2.0 * h
    nx = int(math.ceil((xmax - ox) / h)) + 2
    ny = int(math.ceil((ymax - oy) / h)) + 2
    x = ox + (np.arange(nx) + 0.5) * h
    y = oy + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(x, y, indexing="ij")
    mask = spec.contains(X, Y)
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    if not mask.any():
        raise ValueError(f"rasterization at h={h} produced an empty mask")
    dom = GridDomain(mask, h, (ox, oy))
    dom.face_fractions = _boundary_fractions(spec, dom)
    return dom


# ---------------------------------------------------------------------------
# measures and perimeter


def measure(d: GridDomain) -> float:
    """Lebesgue measure of the rasterized set: cell count times h^2."""
    return d.num_cells * d.h ** 2


def perimeter(d: GridDomain) -> float:
    """Contour length of the mask indicator at level 1/2.

    The indicator is box-smoothed over a 3x3 neighborhood before contour
    extraction; the raw staircase contour overestimates smooth boundaries
    by about 5%, the smoothed one is accurate to a fraction of a percent
    for C^1 boundaries.  When smoothing erases the level set entirely
    (very thin sets) the raw contour is used instead.
    """
    ind = d.mask.astype(float)
    smooth = uniform_filter(ind, size=3, mode="constant")
    total = _contour_length(smooth, d.h)
    if total == 0.0:
        total = _contour_length(ind, d.h)
    return total


def _contour_length(img: np.ndarray, h: float) -> float:
    total = 0.0
    for contour in find_contours(img, 0.5):
        seg = np.diff(contour, axis=0)
        total += float(np.hypot(seg[:, 0], seg[:, 1]).sum())
    return total * h


def ball_same_measure(d: GridDomain, center=(0.0, 0.0)) -> BallSpec:
    """Ball with the same measure as the rasterized set (n = 2)."""
    m = measure(d)
    if m <= 0:
        raise ValueError("domain has zero measure")
    return BallSpec(center=(float(center[0]), float(center[1])),
                    radius=math.sqrt(m / math.pi))


def rasterize_ball(d: GridDomain, b: BallSpec) -> np.ndarray:
    """Boolean mask of cell centers of d's grid inside the ball."""
    X, Y = d.cell_centers()
    return (X - b.center[0]) ** 2 + (Y - b.center[1]) ** 2 < b.radius ** 2


def _lattice_ball_count(radius: float, h: float, origin, cx: float,
                        cy: float) -> int:
    """Cells of the (unbounded) grid lattice whose centers lie in the ball.

    Depends on the center only through its fractional offset relative to
    the lattice, and is not clipped to the stored grid window.
    """
    fx = (cx - origin[0]) / h - 0.5
    fy = (cy - origin[1]) / h - 0.5
    fx -= round(fx)
    fy -= round(fy)
    k = int(math.ceil(radius / h)) + 2
    ii = np.arange(-k, k + 1, dtype=float)
    r2 = (ii[:, None] - fx) ** 2 + (ii[None, :] - fy) ** 2
    return int((r2 * h ** 2 < radius ** 2).sum())


def symmetric_difference_measure(d: GridDomain, b: BallSpec) -> float:
    """Measure of cells where the mask and the rasterized ball disagree.

    Ball cells whose centers fall outside the stored grid window still
    count (the mask is empty there), so the value does not depend on how
    generously the grid was cropped.
    """
    inside = rasterize_ball(d, b)
    overlap = int((d.mask & inside).sum())
    total = _lattice_ball_count(b.radius, d.h, d.origin,
                                b.center[0], b.center[1])
    return float(d.num_cells + total - 2 * overlap) * d.h ** 2


# ---------------------------------------------------------------------------
# Fraenkel asymmetry


def _ball_kernel(radius: float, h: float) -> np.ndarray:
    """Indicator of the disk of given radius on a lattice-centered stencil."""
    m = int(math.floor(radius / h)) + 1
    ii = np.arange(-m, m + 1)
    K = (ii[:, None] ** 2 + ii[None, :] ** 2) * h ** 2 < radius ** 2
    return K.astype(float)


def fraenkel_asymmetry(d: GridDomain, full: bool = False):
    """Normalized minimal symmetric difference with equal-measure balls.

    alpha = min_c |Omega Delta B(c)| / |B|, minimized over ball centers.
    The lattice-center stage is exhaustive: the overlap of the mask with
    the equal-measure ball placed at every lattice offset comes from one
    FFT cross-correlation, rounded back to exact integer cell counts.  A
    local search at step h/2 around the best lattice center refines the
    answer.  Ties go to the lexicographically smallest center.

    With ``full=True`` returns (alpha, BallSpec of the best ball).
    """
    m_omega = measure(d)
    if m_omega <= 0:
        raise ValueError("domain has zero measure")
    radius = math.sqrt(m_omega / math.pi)
    h = d.h
    K = _ball_kernel(radius, h)
    mk = (K.shape[0] - 1) // 2
    ball_cells = float(K.sum())

    corr = fftconvolve(d.mask.astype(float), K, mode="full")
    overlap = np.rint(corr)
    n_cells = d.num_cells
    # symmetric-difference cell count at every lattice-center candidate
    sd = n_cells + ball_cells - 2.0 * overlap
    # argmin with row-major (lexicographic in center coordinates) tie-break
    flat = int(np.argmin(sd))
    pi_, qi_ = np.unravel_index(flat, sd.shape)
    p0 = int(pi_) - mk   # lattice index of best center along x
    q0 = int(qi_) - mk
    cx0 = d.origin[0] + (p0 + 0.5) * h
    cy0 = d.origin[1] + (q0 + 0.5) * h

    best_sd, best_c = _refine_center(d, radius, (cx0, cy0),
                                     float(sd[pi_, qi_]) * h ** 2)
    alpha = best_sd / m_omega
    if full:
        return alpha, BallSpec(center=best_c, radius=radius)
    return alpha


def _refine_center(d: GridDomain, radius, c0, sd0):
    """Direct symmetric-difference evaluation on a +-2h, step h/2 stencil."""
    h = d.h
    best_sd, best_c = sd0, c0
    offsets = np.arange(-4, 5) * (h / 2.0)
    for dx in offsets:
        for dy in offsets:
            cx, cy = c0[0] + dx, c0[1] + dy
            sd = symmetric_difference_measure(
                d, BallSpec(center=(cx, cy), radius=radius))
            if sd < best_sd - 1e-12 * max(sd0, 1.0):
                best_sd, best_c = sd, (cx, cy)
    return best_sd, best_c


def isoperimetric_deficit(d: GridDomain) -> float:
    """P(Omega) / (n omega_n^{1/n} |Omega|^{(n-1)/n}) - 1, with n = 2.

    Nonnegative up to contour error; compare against alpha^2 / gamma_n to
    exercise the quantitative isoperimetric inequality.
    """
    m = measure(d)
    if m <= 0:
        raise ValueError("domain has zero measure")
    return perimeter(d) / (2.0 * math.sqrt(math.pi * m)) - 1.0
