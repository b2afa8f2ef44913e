import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visclust import imaging
from visclust.errors import InsufficientDataError
from visclust.imaging import (
    assign_points,
    estimate_sigma,
    gaussian_filter,
    label_components,
    min_component_size,
    quantize,
    rasterize,
    threshold_mean,
)


def direct_convolution(grid, sigma):
    r = math.ceil(3 * sigma)
    offs = np.arange(-r, r + 1)
    kernel = np.exp(-(offs[:, None] ** 2 + offs[None, :] ** 2) / (2 * sigma**2))
    kernel /= kernel.sum()
    h, w = grid.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(-r, r + 1):
                ii = i - a
                if not 0 <= ii < h:
                    continue
                for b in range(-r, r + 1):
                    jj = j - b
                    if 0 <= jj < w:
                        acc += kernel[a + r, b + r] * grid[ii, jj]
            out[i, j] = acc
    return out


def flood_fill(fg):
    labels = np.zeros(fg.shape, dtype=int)
    n = 0
    offsets = [o for o in np.ndindex(*(3,) * fg.ndim) if any(c != 1 for c in o)]
    for start in zip(*np.nonzero(fg)):
        if labels[start]:
            continue
        n += 1
        labels[start] = n
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for o in offsets:
                q = tuple(pi + oi - 1 for pi, oi in zip(p, o))
                if all(0 <= qi < s for qi, s in zip(q, fg.shape)) and fg[q] and not labels[q]:
                    labels[q] = n
                    queue.append(q)
    return labels, n


def same_partition(a, b):
    fa, fb = a.ravel(), b.ravel()
    if not np.array_equal(fa == 0, fb == 0):
        return False
    pairs = set(zip(fa[fa > 0], fb[fb > 0]))
    return len(pairs) == len({p[0] for p in pairs}) == len({p[1] for p in pairs})


def test_quantize_single_point():
    q = quantize(np.array([[0.37, -1.2]]))
    np.testing.assert_array_equal(q.z, [[0, 0]])


def test_quantize_merges_close_points():
    q = quantize(np.array([[0.0, 0.3], [0.005, 0.3]]))
    assert np.array_equal(q.z[0], q.z[1])


def test_quantize_min_is_zero():
    y = np.random.default_rng(0).normal(size=(50, 3))
    assert np.all(quantize(y).z.min(axis=0) == 0)


@pytest.mark.parametrize("d", [1, 2, 4, 5, 9, 50])
def test_quantize_bound(d):
    rng = np.random.default_rng(d)
    bound = math.isqrt(40000 * d)
    for _ in range(200):
        k = int(rng.integers(2, 4))
        y = rng.uniform(-np.sqrt(d), np.sqrt(d), (int(rng.integers(1, 40)), k))
        y[0] = np.sqrt(d)
        y[-1] = -np.sqrt(d)
        assert quantize(y).z.max() <= bound


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.floats(-50, 50))
def test_quantize_translation(seed, cx, cy):
    y = np.random.default_rng(seed).uniform(-2, 2, (30, 2))
    za = quantize(y).z
    zb = quantize(y + np.array([cx, cy])).z
    assert np.abs(za - zb).max() <= 1


def test_rasterize_distinct_and_coincident():
    img = rasterize(quantize(np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.2]])))
    assert img.grid.sum() == 3
    img = rasterize(quantize(np.array([[0.0, 0.0], [0.0, 0.0], [0.5, 0.5]])))
    assert img.grid.sum() == 2
    assert sorted(img.point_index[(0, 0)]) == [0, 1]


def test_rasterize_counts_distinct_pixels():
    y = np.random.default_rng(3).uniform(-1, 1, (1000, 2))
    q = quantize(y)
    img = rasterize(q)
    assert img.grid.sum() == len({tuple(r) for r in q.z})
    assert img.grid.shape == tuple(q.z.max(axis=0) + 1)
    assert sum(len(v) for v in img.point_index.values()) == 1000
    for pix, pts in img.point_index.items():
        assert img.grid[pix] == 1
        for p in pts:
            assert tuple(q.z[p]) == pix


def test_sigma_two_points():
    assert estimate_sigma(np.array([[0.0, 0.0], [0.03, 0.0]]), 1.0) == pytest.approx(3.0, rel=1e-12)


def test_sigma_coincident_fallback():
    assert estimate_sigma(np.zeros((10, 2)), 1.25) == 1.0


def test_sigma_linear_in_scale():
    y = np.random.default_rng(0).normal(size=(300, 2))
    assert estimate_sigma(y, 2.0) == pytest.approx(2 * estimate_sigma(y, 1.0), rel=1e-12)


def test_sigma_uses_median_of_shortest():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(60, 2))
    d = [np.linalg.norm(y[i] - y[j]) for i in range(60) for j in range(i + 1, 60)]
    expected = np.median(sorted(d)[:1000]) * 100
    assert estimate_sigma(y, 1.0) == pytest.approx(expected, rel=1e-12)


def test_sigma_subsample_deterministic():
    y = np.random.default_rng(2).normal(size=(2000, 2))
    a = estimate_sigma(y, 1.0, np.random.default_rng(5))
    b = estimate_sigma(y, 1.0, np.random.default_rng(5))
    assert a == b


def test_sigma_needs_two_points():
    with pytest.raises(InsufficientDataError):
        estimate_sigma(np.zeros((1, 2)))


def test_filter_zero_image():
    assert np.all(gaussian_filter(np.zeros((20, 20)), 2.0) == 0)


def test_filter_impulse_conserves_mass():
    g = np.zeros((21, 21))
    g[10, 10] = 1
    out = gaussian_filter(g, 1.0)
    assert np.unravel_index(out.argmax(), out.shape) == (10, 10)
    assert abs(out.sum() - 1) < 1e-9


def test_filter_matches_direct_sum():
    rng = np.random.default_rng(0)
    for sigma in (0.6, 1.0, 2.3):
        grid = (rng.random((40, 40)) < 0.2).astype(float)
        np.testing.assert_allclose(gaussian_filter(grid, sigma), direct_convolution(grid, sigma), atol=1e-9, rtol=0)


def test_filter_mass_conservation_3d():
    g = np.zeros((30, 30, 30))
    g[12:18, 10:20, 14] = 1
    out = gaussian_filter(g, 1.5)
    assert abs(out.sum() - g.sum()) < 1e-9


def test_threshold_examples():
    assert threshold_mean(np.full((5, 5), 3.0)).sum() == 0
    g = np.zeros((4, 4))
    g[3, 3] = 1
    np.testing.assert_array_equal(threshold_mean(g), g)
    r = np.random.default_rng(0).random((20, 20))
    np.testing.assert_array_equal(threshold_mean(r), (r > r.mean()).astype(np.uint8))


def test_label_two_blocks():
    g = np.zeros((10, 10), dtype=np.uint8)
    g[1:4, 1:4] = 1
    g[6:9, 6:9] = 1
    lc = label_components(g, 0)
    assert lc.n_cc == 2
    assert list(lc.sizes) == [9, 9]


def test_label_diagonal_chain():
    assert label_components(np.eye(12, dtype=np.uint8), 0).n_cc == 1


def test_label_size_filter():
    g = np.zeros((10, 10), dtype=np.uint8)
    g[0, 0] = 1
    g[5:8, 5:8] = 1
    lc = label_components(g, 1)
    assert lc.n_cc == 1 and lc.labels[0, 0] == 0 and lc.labels[6, 6] == 1
    assert label_components(g, 9).n_cc == 0


def test_label_first_encounter_order():
    g = np.zeros((6, 6), dtype=np.uint8)
    g[0, 5] = 1
    g[3, 0] = 1
    lc = label_components(g, 0)
    assert lc.labels[0, 5] == 1 and lc.labels[3, 0] == 2


def test_label_matches_flood_fill_2d():
    rng = np.random.default_rng(11)
    for _ in range(200):
        g = (rng.random((30, 30)) < rng.uniform(0.1, 0.6)).astype(np.uint8)
        lc = label_components(g, 0)
        ref, n = flood_fill(g)
        assert lc.n_cc == n
        assert same_partition(lc.labels, ref)
        assert set(np.unique(lc.labels)) == set(range(n + 1))


def test_label_matches_flood_fill_3d():
    rng = np.random.default_rng(12)
    for _ in range(30):
        g = (rng.random((8, 9, 10)) < rng.uniform(0.05, 0.4)).astype(np.uint8)
        lc = label_components(g, 0)
        ref, n = flood_fill(g)
        assert lc.n_cc == n
        assert same_partition(lc.labels, ref)


def test_label_idempotent():
    rng = np.random.default_rng(13)
    g = (rng.random((30, 30)) < 0.4).astype(np.uint8)
    first = label_components(g, 2)
    second = label_components(first.labels > 0, 2)
    assert np.array_equal(first.labels, second.labels)


def test_assign_points():
    y = np.array([[0.0, 0.0], [0.01, 0.0], [0.5, 0.5]])
    img = rasterize(quantize(y))
    g = img.grid.copy()
    g[:] = 0
    g[0:2, 0] = 1
    lc = label_components(g, 0)
    np.testing.assert_array_equal(assign_points(lc, img), [1, 1, 0])


def test_assign_points_tallies_match_point_index():
    rng = np.random.default_rng(4)
    y = np.vstack([rng.normal(0, 0.05, (200, 2)), rng.normal(1, 0.05, (200, 2))])
    img = rasterize(quantize(y))
    sigma = estimate_sigma(y, 1.0, rng)
    lc = label_components(threshold_mean(gaussian_filter(img.grid, sigma)), min_component_size(sigma, 2))
    labels = assign_points(lc, img)
    recount = {}
    for pix, pts in img.point_index.items():
        recount[lc.labels[pix]] = recount.get(lc.labels[pix], 0) + len(pts)
    for lab, n in recount.items():
        assert np.sum(labels == lab) == n


def test_write_pnm(tmp_path):
    g = np.zeros((3, 10), dtype=np.uint8)
    g[1, 2] = 1
    (p,) = imaging.write_pnm(tmp_path / "b.pbm", g)
    data = p.read_bytes()
    assert data.startswith(b"P4\n10 3\n") and len(data) == len(b"P4\n10 3\n") + 3 * 2
    (p,) = imaging.write_pnm(tmp_path / "g.pgm", np.linspace(0, 1, 12).reshape(3, 4) * 0.5)
    data = p.read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n") and data[-1] == 255
    files = imaging.write_pnm(tmp_path / "v.pgm", np.random.default_rng(0).random((3, 4, 5)))
    assert [f.name for f in files] == ["v_000.pgm", "v_001.pgm", "v_002.pgm"]


@pytest.mark.parametrize("shape,sigma", [((60, 70), 1.7), ((25, 30, 35), 1.2), ((40, 40), 0.3)])
def test_segment_matches_chained_steps(shape, sigma):
    rng = np.random.default_rng(len(shape))
    for _ in range(10):
        pts = rng.normal(0.5, 0.12, (int(rng.integers(5, 120)), len(shape)))
        img = rasterize(quantize(np.clip(pts, 0, 1) * [(s - 1) / 100 for s in shape]))
        min_size = min_component_size(sigma, len(shape))
        for method in ("scatter", "separable"):
            fast = imaging.segment(img, sigma, min_size, method=method)
            slow = label_components(threshold_mean(gaussian_filter(img.grid, sigma, method="separable")), min_size)
            assert np.array_equal(fast.labels, slow.labels)
            assert np.array_equal(fast.sizes, slow.sizes)


def test_filter_methods_agree():
    rng = np.random.default_rng(21)
    grid = (rng.random((30, 25, 20)) < 0.01).astype(np.uint8)
    a = gaussian_filter(grid, 1.4, method="scatter")
    b = gaussian_filter(grid, 1.4, method="separable")
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


@pytest.mark.parametrize("shape,sigma", [((12, 15), 2.5), ((12, 15), 4.0), ((6, 7, 8), 0.9)])
def test_segment_with_oversized_minimum(shape, sigma):
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, (40, len(shape))) * [(s - 1) / 100 for s in shape]
    img = rasterize(quantize(pts))
    min_size = min_component_size(sigma, len(shape))
    assert min_size >= img.grid.size - 1
    fast = imaging.segment(img, sigma, min_size)
    slow = label_components(threshold_mean(gaussian_filter(img.grid, sigma, method="separable")), min_size)
    assert fast.n_cc == slow.n_cc == 0
    assert np.array_equal(fast.labels, slow.labels)
