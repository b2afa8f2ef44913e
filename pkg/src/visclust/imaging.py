"""Turning projected points into an image and reading clusters back out.

Pipeline for one projection: quantise the projected points onto an integer
grid at 0.01 resolution, rasterise to a binary image, smooth with a
normalised Gaussian kernel, keep pixels strictly above the image mean, label
connected components (8-neighbourhood in 2-D, 26 in 3-D), drop small
components and hand every point the label of its pixel.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.ndimage import correlate1d
from scipy.spatial.distance import pdist

from visclust._rng import as_generator
from visclust.errors import InsufficientDataError, InvalidDimensionError

PIXELS_PER_UNIT = 100
SIGMA_SUBSAMPLE = 500
SIGMA_SHORTEST = 1000


@dataclass(frozen=True)
class QuantizedPoints:
    z: np.ndarray  # (m, k) nonnegative int64
    origin: np.ndarray  # per-dimension minimum of the projected data

    @property
    def k(self):
        return self.z.shape[1]


@dataclass(frozen=True)
class BinaryImage:
    """Image grid plus the flat pixel index of every point."""

    grid: np.ndarray
    pixel: np.ndarray

    @property
    def point_index(self):
        """Map from pixel coordinate tuple to the list of point indices on it."""
        order = np.argsort(self.pixel, kind="stable")
        flat = self.pixel[order]
        out = {}
        bounds = np.flatnonzero(np.diff(flat)) + 1
        for chunk in np.split(order, bounds):
            if chunk.size:
                coord = np.unravel_index(self.pixel[chunk[0]], self.grid.shape)
                out[tuple(int(c) for c in coord)] = chunk.tolist()
        return out

    def with_grid(self, grid):
        return BinaryImage(grid, self.pixel)


@dataclass(frozen=True)
class LabeledComponents:
    labels: np.ndarray  # 0 background, 1..n_cc
    sizes: np.ndarray  # pixel count per label, index 0 -> label 1

    @property
    def n_cc(self):
        return int(self.sizes.size)


def quantize(projected):
    """Floor-scale projected points to integer pixel coordinates."""
    y = np.asarray(projected, dtype=float)
    if y.ndim != 2 or y.shape[0] < 1 or not 1 <= y.shape[1] <= 3:
        raise InvalidDimensionError(f"expected m x k points with k in 1..3, got shape {y.shape}")
    origin = y.min(axis=0)
    z = np.floor(PIXELS_PER_UNIT * (y - origin)).astype(np.int64)
    return QuantizedPoints(z, origin)


def rasterize(q):
    z = q.z if isinstance(q, QuantizedPoints) else np.asarray(q, dtype=np.int64)
    shape = tuple(int(s) for s in z.max(axis=0) + 1)
    pixel = np.ravel_multi_index(tuple(z.T), shape)
    grid = np.zeros(shape, dtype=np.uint8)
    grid.flat[pixel] = 1
    return BinaryImage(grid, pixel)


def estimate_sigma(projected, s=1.0, rng=None, dims=1):
    """Gaussian filter width in pixels for one projection.

    Median of the 1000 shortest pairwise distances (on at most 500 randomly
    chosen points), converted to pixels, weighted by ``s`` and divided by the
    dimension ``dims`` of the original data.
    """
    y = np.asarray(projected, dtype=float)
    m = y.shape[0]
    if m < 2:
        raise InsufficientDataError("need at least two points to estimate sigma")
    if s <= 0:
        raise ValueError("scale factor must be positive")
    if dims < 1:
        raise InvalidDimensionError("dims must be at least 1")
    if m > SIGMA_SUBSAMPLE:
        idx = as_generator(rng).choice(m, size=SIGMA_SUBSAMPLE, replace=False)
        y = y[idx]
    dist = pdist(y)
    n = min(SIGMA_SHORTEST, dist.size)
    shortest = np.partition(dist, n - 1)[:n]
    sigma = float(np.median(shortest)) * PIXELS_PER_UNIT * s / dims
    return sigma if sigma > 0 else 1.0


def kernel_radius(sigma):
    return int(math.ceil(3.0 * sigma))


def gaussian_kernel_1d(sigma):
    r = kernel_radius(sigma)
    t = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


@numba.njit(cache=True, fastmath=True)
def _scatter(coords, weights, g, out, row_lo, row_hi):
    # Add weight * outer(g, g, g) around every nonzero voxel, clipped to the
    # grid. Records the touched x-range of every row and returns the total
    # mass added.
    nz, ny, nx = out.shape
    r = (g.size - 1) // 2
    flat_z = nz == 1
    total = 0.0
    for i in range(coords.shape[0]):
        cz, cy, cx = coords[i, 0], coords[i, 1], coords[i, 2]
        z0 = cz if flat_z else max(cz - r, 0)
        z1 = cz + 1 if flat_z else min(cz + r + 1, nz)
        y0, y1 = max(cy - r, 0), min(cy + r + 1, ny)
        x0, x1 = max(cx - r, 0), min(cx + r + 1, nx)
        gx = g[x0 - cx + r : x1 - cx + r] * weights[i]
        mz = 0.0
        for z in range(z0, z1):
            wz = 1.0 if flat_z else g[z - cz + r]
            mz += wz
            for y in range(y0, y1):
                wy = wz * g[y - cy + r]
                row = out[z, y, x0:x1]
                for t in range(x1 - x0):
                    row[t] += wy * gx[t]
                row_lo[z, y] = min(row_lo[z, y], x0)
                row_hi[z, y] = max(row_hi[z, y], x1)
        total += mz * g[y0 - cy + r : y1 - cy + r].sum() * gx.sum()
    return total


@numba.njit(cache=True, fastmath=True)
def _scatter_rows(coords, weights, g, out, row_lo, row_hi):
    # 2-D variant of _scatter: spread every pixel along x into its row, then
    # spread each nonzero row along y. Cost grows with kernel width, not its
    # square.
    _, ny, nx = out.shape
    r = (g.size - 1) // 2
    a = np.zeros((ny, nx))
    a_lo = np.full(ny, nx, dtype=np.int64)
    a_hi = np.zeros(ny, dtype=np.int64)
    total = 0.0
    for i in range(coords.shape[0]):
        cy, cx = coords[i, 1], coords[i, 2]
        x0, x1 = max(cx - r, 0), min(cx + r + 1, nx)
        w = weights[i]
        row = a[cy, x0:x1]
        for t in range(x1 - x0):
            row[t] += w * g[x0 - cx + r + t]
        a_lo[cy] = min(a_lo[cy], x0)
        a_hi[cy] = max(a_hi[cy], x1)
        total += w * g[x0 - cx + r : x1 - cx + r].sum() * g[max(cy - r, 0) - cy + r : min(cy + r + 1, ny) - cy + r].sum()
    for y in range(ny):
        lo, hi = a_lo[y], a_hi[y]
        if hi <= lo:
            continue
        src = a[y, lo:hi]
        for yy in range(max(y - r, 0), min(y + r + 1, ny)):
            c = g[yy - y + r]
            dst = out[0, yy, lo:hi]
            for t in range(hi - lo):
                dst[t] += c * src[t]
            row_lo[0, yy] = min(row_lo[0, yy], lo)
            row_hi[0, yy] = max(row_hi[0, yy], hi)
    return total


def _smooth(img, sigma, method):
    """Filtered field as a 3-D array, per-row x-extents of its support and its
    total mass (``None`` when not tracked)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    grid = np.asarray(img.grid if isinstance(img, BinaryImage) else img)
    g = gaussian_kernel_1d(sigma)
    shape3 = (1,) * (3 - grid.ndim) + grid.shape
    idx = None
    if isinstance(img, BinaryImage) and grid.dtype == np.uint8:
        # occupied pixels are known without scanning the grid
        idx = np.unique(img.pixel)
    if method == "auto":
        nnz = idx.size if idx is not None else int(np.count_nonzero(grid))
        reach = np.prod([min(g.size, n) for n in grid.shape])
        method = "scatter" if grid.ndim == 2 or nnz * reach < grid.size * grid.ndim * g.size else "separable"
    if method == "scatter" and 2 <= grid.ndim <= 3:
        if idx is None:
            idx = np.flatnonzero(grid)
        coords = np.zeros((idx.size, 3), dtype=np.int64)
        coords[:, 3 - grid.ndim :] = np.column_stack(np.unravel_index(idx, grid.shape))
        out = np.zeros(shape3)
        row_lo = np.full(shape3[:2], shape3[2], dtype=np.int64)
        row_hi = np.zeros(shape3[:2], dtype=np.int64)
        kernel = _scatter_rows if grid.ndim == 2 else _scatter
        total = kernel(coords, grid.ravel()[idx].astype(float), g, out, row_lo, row_hi)
        return out, row_lo, row_hi, total
    if method not in ("scatter", "separable"):
        raise ValueError(f"unknown filter method {method!r}")
    out = grid.astype(float)
    for axis in range(out.ndim):
        out = correlate1d(out, g, axis=axis, mode="constant", cval=0.0)
    row_lo = np.zeros(shape3[:2], dtype=np.int64)
    row_hi = np.full(shape3[:2], shape3[2], dtype=np.int64)
    return out.reshape(shape3), row_lo, row_hi, None


def gaussian_filter(img, sigma, method="auto"):
    """Convolve with a normalised isotropic Gaussian, zero outside the grid.

    ``method="separable"`` runs one 1-D pass per axis over the whole grid.
    ``method="scatter"`` spreads the kernel out from each nonzero pixel,
    touching only rows it reaches, which is much cheaper when few pixels are
    set relative to the grid size.
    ``"auto"`` picks whichever needs fewer multiply-adds.
    """
    grid = img.grid if isinstance(img, BinaryImage) else np.asarray(img)
    out = _smooth(img, sigma, method)[0].reshape(grid.shape)
    return img.with_grid(out) if isinstance(img, BinaryImage) else out


def threshold_mean(img):
    grid = img.grid if isinstance(img, BinaryImage) else np.asarray(img)
    out = (grid > grid.mean()).astype(np.uint8)
    return img.with_grid(out) if isinstance(img, BinaryImage) else out


def min_component_size(sigma, k):
    """Pixel count of the filter support; components this small are outliers."""
    return (2 * kernel_radius(sigma) + 1) ** k


@numba.njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@numba.njit(cache=True)
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@numba.njit(cache=True)
def _two_pass(values, cut, min_size, out, row_lo, row_hi):
    # Foreground is values > cut, processed as horizontal runs. A singleton
    # leading axis gives 8-connectivity. out must be zero on entry.
    nz, ny, nx = values.shape
    row_ptr = np.zeros(nz * ny + 1, dtype=np.int64)
    for z in range(nz):
        for y in range(ny):
            count = 0
            inside = False
            for x in range(row_lo[z, y], row_hi[z, y]):
                fg = values[z, y, x] > cut
                if fg and not inside:
                    count += 1
                inside = fg
            row_ptr[z * ny + y + 1] = count
    row_ptr = np.cumsum(row_ptr)
    n_runs = row_ptr[-1]
    run_s = np.empty(n_runs, dtype=np.int64)
    run_e = np.empty(n_runs, dtype=np.int64)
    for z in range(nz):
        for y in range(ny):
            i = row_ptr[z * ny + y]
            inside = False
            hi = row_hi[z, y]
            for x in range(row_lo[z, y], hi):
                fg = values[z, y, x] > cut
                if fg and not inside:
                    run_s[i] = x
                elif inside and not fg:
                    run_e[i] = x
                    i += 1
                inside = fg
            if inside:
                run_e[i] = hi
    # join runs that touch (including diagonally) in already-visited rows
    parent = np.arange(n_runs)
    for z in range(nz):
        for y in range(ny):
            row = z * ny + y
            for i in range(row_ptr[row], row_ptr[row + 1]):
                s, e = run_s[i], run_e[i]
                for dz in range(-1, 1):
                    zz = z + dz
                    if zz < 0:
                        continue
                    y_hi = y if dz == 0 else y + 1
                    for yy in range(y - 1, y_hi + 1):
                        if yy < 0 or yy >= ny or (dz == 0 and yy == y):
                            continue
                        other = zz * ny + yy
                        for j in range(row_ptr[other], row_ptr[other + 1]):
                            if run_s[j] > e:
                                break
                            if run_e[j] >= s:
                                _union(parent, i, j)
    size = np.zeros(n_runs, dtype=np.int64)
    for i in range(n_runs):
        size[_find(parent, i)] += run_e[i] - run_s[i]
    # survivors renumbered in raster order of their first run
    final = np.zeros(n_runs, dtype=np.int64)
    kept = np.zeros(n_runs + 1, dtype=np.int64)
    n_cc = 0
    for i in range(n_runs):
        root = _find(parent, i)
        if final[root] == 0:
            if size[root] > min_size:
                n_cc += 1
                final[root] = n_cc
                kept[n_cc] = size[root]
            else:
                final[root] = -1
    for z in range(nz):
        for y in range(ny):
            row = z * ny + y
            for i in range(row_ptr[row], row_ptr[row + 1]):
                lab = final[parent[i]]
                if lab > 0:
                    for x in range(run_s[i], run_e[i]):
                        out[z, y, x] = lab
    return kept[1 : n_cc + 1].copy()


def _label(values, cut, min_size, row_lo=None, row_hi=None):
    shape = values.shape
    v3 = np.ascontiguousarray(values).reshape((1,) * (3 - values.ndim) + shape)
    if row_lo is None:
        row_lo = np.zeros(v3.shape[:2], dtype=np.int64)
        row_hi = np.full(v3.shape[:2], v3.shape[2], dtype=np.int64)
    prov = np.zeros(v3.shape, dtype=np.int32)
    sizes = _two_pass(v3, cut, int(min_size), prov, row_lo, row_hi)
    return LabeledComponents(prov.reshape(shape), sizes)


def label_components(img, min_size_pixels=0):
    """Two-pass union-find labelling of the foreground.

    Components with at most ``min_size_pixels`` pixels become background;
    surviving labels are numbered 1..n_cc in raster (first-encounter) order.
    """
    grid = img.grid if isinstance(img, BinaryImage) else np.asarray(img)
    if not 1 <= grid.ndim <= 3:
        raise InvalidDimensionError("only 1-, 2- and 3-D images are supported")
    return _label((grid != 0).view(np.uint8), 0, min_size_pixels)


def segment(img, sigma, min_size_pixels, method="auto"):
    """Smooth, keep pixels strictly above the mean and label, in one go.

    Same result as chaining :func:`gaussian_filter`, :func:`threshold_mean`
    and :func:`label_components`, but only rows reached by the kernel are
    scanned and the mean comes from the kernel masses rather than a pass over
    the grid.
    """
    grid = img.grid if isinstance(img, BinaryImage) else np.asarray(img)
    if min_size_pixels >= grid.size - 1:
        # at most size - 1 pixels can lie strictly above the mean
        return LabeledComponents(np.zeros(grid.shape, dtype=np.int32), np.zeros(0, dtype=np.int64))
    field, row_lo, row_hi, total = _smooth(img, sigma, method)
    mean = field.mean() if total is None else total / field.size
    comps = _label(field, mean, min_size_pixels, row_lo, row_hi)
    return LabeledComponents(comps.labels.reshape(grid.shape), comps.sizes)


def assign_points(components, img):
    """Per-point component label; 0 marks points on background pixels."""
    return components.labels.ravel()[img.pixel]


def write_pnm(path, grid):
    """Dump an image stage as binary PBM (0/1 data) or PGM (anything else).

    3-D images are written one file per slice along the first axis with a
    ``_NNN`` suffix.
    """
    path = Path(path)
    grid = np.asarray(grid)
    if grid.ndim == 3:
        written = []
        for i, sl in enumerate(grid):
            written += write_pnm(path.with_name(f"{path.stem}_{i:03d}{path.suffix}"), sl)
        return written
    if grid.ndim == 1:
        grid = grid[None, :]
    h, w = grid.shape
    if np.isin(grid, (0, 1)).all():
        # PBM: 1 = black
        packed = np.packbits(grid.astype(np.uint8), axis=1)
        data = b"P4\n%d %d\n" % (w, h) + packed.tobytes()
    else:
        top = float(grid.max())
        scaled = np.zeros_like(grid, dtype=float) if top <= 0 else grid / top
        pix = np.clip(np.round(scaled * 255), 0, 255).astype(np.uint8)
        data = b"P5\n%d %d\n255\n" % (w, h) + pix.tobytes()
    path.write_bytes(data)
    return [path]
