"""The visual clustering search loop.

For each candidate projection the data (scaled to [-1, 1] per coordinate) is
mapped to 2-D or 3-D, rendered as an image, smoothed, thresholded and split
into connected components. The first projection whose components match the
requested cluster count and whose cluster-size division is within ``t`` (L1)
of the requested one is accepted. 2-D projections are tried first, then
3-D; if both budgets run out the clusters are peeled off one at a time by
recursive two-way searches.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from visclust import imaging
from visclust._rng import check_seed, stream
from visclust.data import Dataset, scale_minmax
from visclust.errors import (
    BackfillError,
    InfeasibleError,
    InsufficientDataError,
    InvalidDimensionError,
    InvalidInputError,
    NoStructureError,
)
from visclust.projections import ProjectionSet, sample_projection_set, sample_stiefel

SATISFIED = "satisfied"
NOT_SATISFIED = "division-not-satisfied"
FALLBACK_BINARY = "fallback-binary"
AUTO_COUNT = "auto-count"

OUTLIER_SIGMAS = 4.0
SCALE_BOUNDS = (0.1, 10.0)
AUTO_SCAN_PROJECTIONS = 500
_CHUNK = 250


@dataclass(frozen=True)
class VisClustConfig:
    """Inputs of a clustering run.

    ``division`` defaults to equal cluster sizes; ``subsample`` to all points.
    With ``embedding=True`` the input is taken to be a precomputed 2-D or 3-D
    embedding and is only rotated, never projected.
    """

    n_clusters: int | None = None
    threshold: float = 0.1
    scale: float = 1.25
    subsample: int | None = None
    division: tuple | None = None
    projections: ProjectionSet | None = None
    embedding: bool = False
    seed: int = 0
    n_projections_2d: int = 5000
    n_projections_3d: int = 2000
    adapt_every: int = 250

    def __post_init__(self):
        if self.n_clusters is not None and self.n_clusters < 1:
            raise InvalidInputError("n_clusters must be >= 1")
        if not self.threshold > 0:
            raise InvalidInputError("threshold must be positive")
        if not self.scale > 0:
            raise InvalidInputError("scale must be positive")
        if self.subsample is not None and self.subsample < 1:
            raise InvalidInputError("subsample must be >= 1")
        if self.n_projections_2d < 0 or self.n_projections_3d < 0 or self.adapt_every < 1:
            raise InvalidInputError("projection budgets must be nonnegative")
        check_seed(self.seed)
        if self.division is not None:
            eta = tuple(float(v) for v in self.division)
            if any(v < 0 for v in eta) or abs(sum(eta) - 1.0) > 1e-9:
                raise InvalidInputError(f"division must be nonnegative and sum to 1, got {eta}")
            if self.n_clusters is not None and len(eta) != self.n_clusters:
                raise InvalidInputError(f"division has {len(eta)} entries for {self.n_clusters} clusters")
            object.__setattr__(self, "division", eta)

    def eta(self, n_c):
        if self.division is not None and len(self.division) == n_c:
            return np.asarray(self.division)
        return np.full(n_c, 1.0 / n_c)

    def echo(self):
        """Effective settings as a flat dict (defaults resolved where possible)."""
        return {
            "n_clusters": self.n_clusters,
            "threshold": self.threshold,
            "scale": self.scale,
            "subsample": self.subsample,
            "division": None if self.division is None else list(self.division),
            "user_projections": self.projections is not None,
            "embedding": self.embedding,
            "seed": self.seed,
            "n_projections_2d": self.n_projections_2d,
            "n_projections_3d": self.n_projections_3d,
        }


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    division: np.ndarray
    status: str
    iterations_used: int = 0
    k_used: int = 0
    final_scale: float = float("nan")
    deviation: float = float("nan")
    detail: dict = field(default_factory=dict, compare=False)

    @property
    def n_clusters(self):
        return int(self.division.size)

    @property
    def satisfied(self):
        return self.status in (SATISFIED, FALLBACK_BINARY) or (
            self.status == AUTO_COUNT and self.detail.get("search_status") in (SATISFIED, FALLBACK_BINARY)
        )

    def report(self):
        return {
            "status": self.status,
            "iterations_used": self.iterations_used,
            "k_used": self.k_used,
            "final_s": self.final_scale,
            "n_clusters": self.n_clusters,
            "division": [float(v) for v in self.division],
            "deviation": self.deviation,
            **{k: v for k, v in self.detail.items()},
        }


def outlier_mask(x_scaled):
    """Points more than four standard deviations from the mean in any coordinate."""
    x = np.asarray(x_scaled, dtype=float)
    if x.shape[0] < 2:
        raise InsufficientDataError("outlier detection needs at least two points")
    mu = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    dev = np.abs(x - mu)
    flagged = (sd > 0) & (dev > OUTLIER_SIGMAS * sd)
    return flagged.any(axis=1)


def adapt_scale(outcomes, s):
    """Multiplicative update of the filter scale from recent outcomes.

    ``outcomes`` holds one entry per iteration: negative when too few
    clusters were found, positive when too many, zero when the count matched.
    More than 80% too few raises ``s`` by 25%; more than 80% too many lowers
    it by 25%. The result is clamped to [0.1, 10].
    """
    o = np.sign(np.asarray(outcomes, dtype=float))
    if o.size == 0:
        return s
    if np.mean(o < 0) > 0.8:
        s *= 1.25
    elif np.mean(o > 0) > 0.8:
        s *= 0.75
    return float(min(max(s, SCALE_BOUNDS[0]), SCALE_BOUNDS[1]))


def backfill(x_scaled, partial):
    """Give every unlabelled point (label <= 0) the label of its nearest labelled point.

    Euclidean distance; among equally near labelled points the one with the
    lowest index wins.
    """
    x = np.asarray(x_scaled, dtype=float)
    partial = np.asarray(partial)
    assigned = np.flatnonzero(partial > 0)
    if assigned.size == 0:
        raise BackfillError("no labelled points to backfill from")
    missing = np.flatnonzero(partial <= 0)
    out = partial.copy()
    if missing.size == 0:
        return out
    tree = cKDTree(x[assigned])
    kq = min(8, assigned.size)
    dist, idx = tree.query(x[missing], k=kq)
    if kq == 1:
        dist, idx = dist[:, None], idx[:, None]
    cand = np.where(dist <= dist[:, :1], assigned[np.minimum(idx, assigned.size - 1)], np.iinfo(np.int64).max)
    nearest = cand.min(axis=1)
    # when every returned neighbour ties, more tied points may lie beyond them
    for row in np.flatnonzero(dist[:, -1] <= dist[:, 0]) if kq < assigned.size else ():
        near = assigned[tree.query_ball_point(x[missing[row]], dist[row, 0] * (1 + 1e-12) + 1e-300)]
        d = np.sqrt(((x[near] - x[missing[row]]) ** 2).sum(axis=1))
        nearest[row] = near[d == d.min()].min()
    out[missing] = partial[nearest]
    return out


def _pipeline(y, s, sigma_rng, dims):
    """One projection through the imaging steps; returns (n_cc, per-point labels)."""
    k = y.shape[1]
    img = imaging.rasterize(imaging.quantize(y))
    sigma = imaging.estimate_sigma(y, s, sigma_rng, dims)
    comps = imaging.segment(img, sigma, imaging.min_component_size(sigma, k))
    part = comps.labels.ravel()[img.pixel]
    if comps.n_cc == 0:
        return 0, part
    # keep only components that hold points; renumber in raster order
    present = np.zeros(comps.n_cc + 1, dtype=np.int64)
    present[part] = 1
    present[0] = 0
    n_cc = int(present.sum())
    if n_cc != comps.n_cc:
        remap = np.cumsum(present) * present
        part = remap[part]
    return n_cc, part


def _relabel(full, n, eta):
    """Match clusters to division entries by rank of size; labels become 1..n."""
    counts = np.bincount(full, minlength=n + 1)[1:]
    by_size = np.argsort(counts, kind="stable")
    by_eta = np.argsort(eta, kind="stable")
    mapping = np.zeros(n + 1, dtype=np.int64)
    mapping[by_size + 1] = by_eta + 1
    labels = mapping[full]
    division = np.bincount(labels, minlength=n + 1)[1:] / labels.size
    return labels, division


class _Search:
    """State of the projection loop for one (sub)dataset."""

    def __init__(self, x, n_c, eta, cfg, level):
        self.x = x
        self.m, self.d = x.shape
        self.n_c = n_c
        self.eta = eta
        self.cfg = cfg
        self.level = level
        self.xs = scale_minmax(x)
        self.s = cfg.scale
        self.iterations = 0
        self.k_used = 0
        self.best = None  # (deviation, labels, division, k)
        self.best_gap = None  # (gap, labels, division, k) when no count match yet
        keep = ~outlier_mask(self.xs) if self.m >= 2 else np.ones(self.m, dtype=bool)
        if cfg.subsample is not None and cfg.subsample < self.m:
            chosen = np.zeros(self.m, dtype=bool)
            chosen[stream(cfg.seed, "subsample", level).choice(self.m, cfg.subsample, replace=False)] = True
            keep &= chosen
            if keep.sum() < 2:
                keep = chosen
        if keep.sum() < 2:
            keep = np.ones(self.m, dtype=bool)
        self.active = np.flatnonzero(keep)
        self.xa = self.xs[self.active]
        self.sigma_rng = stream(cfg.seed, "sigma", level)

    def stages(self):
        cfg = self.cfg
        if cfg.projections is not None:
            if cfg.projections.d != self.d:
                raise InvalidDimensionError(f"projections expect d={cfg.projections.d}, data has d={self.d}")
            yield cfg.projections.k, iter(cfg.projections.q)
            return
        if cfg.embedding:
            k = self.d
            if k not in (2, 3):
                raise InvalidDimensionError("an embedding must be 2- or 3-dimensional")
            budget = cfg.n_projections_2d if k == 2 else cfg.n_projections_3d
            yield k, self._rotations(k, budget)
            return
        ks = [k for k in (2, 3) if k <= self.d] or [1]
        for k in ks:
            budget = cfg.n_projections_3d if k == 3 else cfg.n_projections_2d
            yield k, self._random_bases(k, budget)

    def _random_bases(self, k, budget):
        rng = stream(self.cfg.seed, f"projections-{k}", self.level)
        done = 0
        while done < budget:
            n = min(_CHUNK, budget - done)
            yield from sample_projection_set(n, k, self.d, rng=rng).q
            done += n

    def _rotations(self, k, budget):
        rng = stream(self.cfg.seed, f"projections-{k}", self.level)
        if budget > 0:
            yield np.eye(k)
        for _ in range(budget - 1):
            yield sample_stiefel(k, k, rng).q

    def _complete(self, part, n):
        full = np.zeros(self.m, dtype=np.int64)
        full[self.active] = part
        if (full == 0).any():
            full = backfill(self.xs, full)
        eta = self.eta if n == self.n_c else np.full(n, 1.0 / n)
        return _relabel(full, n, eta)

    def run(self):
        """Iterate over all stages; return a satisfied Partition or None."""
        cfg = self.cfg
        for k, bases in self.stages():
            outcomes = []
            for q in bases:
                self.iterations += 1
                self.k_used = k
                n_cc, part = _pipeline(self.xa @ q.T, self.s, self.sigma_rng, self.d)
                outcomes.append(n_cc - self.n_c)
                if n_cc == self.n_c:
                    labels, division = self._complete(part, n_cc)
                    dev = float(np.abs(division - self.eta).sum())
                    if dev < cfg.threshold:
                        return self._partition(labels, division, SATISFIED, dev)
                    if self.best is None or dev < self.best[0]:
                        self.best = (dev, labels, division, k)
                elif n_cc > 0 and self.best is None:
                    gap = abs(n_cc - self.n_c)
                    if self.best_gap is None or gap < self.best_gap[0]:
                        labels, division = self._complete(part, n_cc)
                        self.best_gap = (gap, labels, division, k)
                if len(outcomes) == cfg.adapt_every:
                    self.s = adapt_scale(outcomes, self.s)
                    outcomes = []
        return None

    def _partition(self, labels, division, status, dev):
        return Partition(
            labels=labels,
            division=division,
            status=status,
            iterations_used=self.iterations,
            k_used=self.k_used,
            final_scale=self.s,
            deviation=dev,
        )

    def best_effort(self):
        if self.best is not None:
            dev, labels, division, k = self.best
        elif self.best_gap is not None:
            _, labels, division, k = self.best_gap
            dev = float("nan")
        else:
            labels, division, k, dev = np.ones(self.m, dtype=np.int64), np.ones(1), self.k_used, float("nan")
        p = self._partition(labels, division, NOT_SATISFIED, dev)
        return replace(p, k_used=k)


def _prepare(x, cfg):
    pts = x.points if isinstance(x, Dataset) else np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.size == 0:
        raise InvalidInputError("dataset is empty")
    if not np.isfinite(pts).all():
        raise InvalidInputError("dataset contains non-finite values")
    return pts


def _trivial(m, cfg):
    return Partition(np.ones(m, dtype=np.int64), np.ones(1), SATISFIED, 0, 0, cfg.scale, 0.0)


def cluster(x, cfg=None, **overrides):
    """Partition ``x`` into ``cfg.n_clusters`` clusters.

    Keyword overrides are applied to ``cfg`` (or to the default config), so
    ``cluster(x, n_clusters=3, seed=1)`` works. Without a cluster count the
    count is chosen automatically (see :func:`auto_cluster_count`).
    """
    cfg = replace(cfg or VisClustConfig(), **overrides)
    pts = _prepare(x, cfg)
    if cfg.n_clusters is None:
        return auto_cluster_count(pts, cfg)
    m = pts.shape[0]
    n_c = cfg.n_clusters
    if n_c > m:
        raise InfeasibleError(f"{n_c} clusters requested for {m} points")
    if n_c == 1:
        return _trivial(m, cfg)
    search = _Search(pts, n_c, cfg.eta(n_c), cfg, level=0)
    found = search.run()
    if found is not None:
        return found
    used = search.iterations
    if n_c > 2:
        fallback = recursive_binary(pts, cfg)
        used += fallback.iterations_used
        if fallback.status == FALLBACK_BINARY:
            return replace(fallback, iterations_used=used)
    return replace(search.best_effort(), iterations_used=used)


def recursive_binary(x, cfg):
    """Peel off the cluster with the smallest requested share, one two-way search at a time.

    Each level runs the full projection search for two clusters with division
    ``(eta_min, 1 - eta_min)`` on the points not yet assigned; the smaller
    side becomes the cluster for ``eta_min`` and the rest is searched again
    with the remaining division renormalised.
    """
    pts = _prepare(x, cfg)
    m = pts.shape[0]
    n_c = cfg.n_clusters
    if n_c is None or n_c < 2:
        raise InvalidInputError("recursive binary clustering needs n_clusters >= 2")
    if n_c > m:
        raise InfeasibleError(f"{n_c} clusters requested for {m} points")
    eta = cfg.eta(n_c)
    pending = list(range(n_c))  # indices into eta still to be assigned
    remaining = np.arange(m)
    labels = np.zeros(m, dtype=np.int64)
    used, k_used, scale = 0, 0, cfg.scale
    status = FALLBACK_BINARY
    level = 0
    while len(pending) > 1:
        shares = eta[pending]
        total = shares.sum()
        shares = shares / total if total > 0 else np.full(len(pending), 1.0 / len(pending))
        jmin = int(np.argmin(shares))
        target = pending[jmin]
        binary = np.array([shares[jmin], 1.0 - shares[jmin]])
        if remaining.size < 2:
            status = NOT_SATISFIED
            break
        search = _Search(pts[remaining], 2, binary, cfg, level)
        found = search.run()
        used += search.iterations
        k_used, scale = search.k_used, search.s
        if found is None:
            status = NOT_SATISFIED
            found = search.best_effort()
            small = found.labels == 1 if found.n_clusters == 2 else np.zeros(remaining.size, dtype=bool)
            labels[remaining[small]] = target + 1
            pending.pop(jmin)
            remaining = remaining[~small]
            break
        small = found.labels == 1
        labels[remaining[small]] = target + 1
        remaining = remaining[~small]
        pending.pop(jmin)
        level += 1
    # whatever is left belongs to the largest outstanding share
    if remaining.size:
        last = max(pending, key=lambda j: (eta[j], -j))
        labels[remaining] = last + 1
    present = np.unique(labels)
    if present.size == n_c:
        division = np.bincount(labels, minlength=n_c + 1)[1:] / m
        dev = float(np.abs(division - eta).sum())
    else:
        # a level failed and left some shares empty: compact to 1..n
        labels = np.searchsorted(present, labels) + 1
        division = np.bincount(labels)[1:] / m
        dev = float("nan")
    return Partition(labels, division, status, used, k_used, scale, dev)


def mode_count(counts):
    """Most frequent positive component count; ties go to the smaller count."""
    counts = np.asarray(counts)
    positive = counts[counts > 0]
    if positive.size == 0:
        raise NoStructureError("no projection showed any cluster")
    values, freq = np.unique(positive, return_counts=True)
    return int(values[np.argmax(freq)])  # values are sorted, argmax keeps the first tie


def auto_cluster_count(x, cfg=None):
    """Pick the cluster count seen most often over a scan of 2-D projections, then cluster.

    Ties between counts go to the smaller count.
    """
    cfg = cfg or VisClustConfig()
    pts = _prepare(x, cfg)
    m, d = pts.shape
    if m < 2:
        raise InsufficientDataError("automatic cluster count needs at least two points")
    probe_cfg = replace(cfg, n_clusters=None, division=None)
    search = _Search(pts, 1, np.ones(1), probe_cfg, level=0)
    if cfg.embedding:
        k = d
        bases = search._rotations(k, AUTO_SCAN_PROJECTIONS)
    else:
        k = min(2, d)
        rng = stream(cfg.seed, "auto")
        bases = iter(sample_projection_set(AUTO_SCAN_PROJECTIONS, k, d, rng=rng).q)
    counts = np.array([_pipeline(search.xa @ q.T, cfg.scale, search.sigma_rng, d)[0] for q in bases])
    n_c = min(mode_count(counts), m)
    inner = _trivial(m, cfg) if n_c == 1 else cluster(pts, replace(cfg, n_clusters=n_c, division=None))
    detail = {"search_status": inner.status, "scan_counts_mode": n_c}
    return replace(
        inner,
        status=AUTO_COUNT,
        iterations_used=inner.iterations_used + AUTO_SCAN_PROJECTIONS,
        detail=detail,
    )
