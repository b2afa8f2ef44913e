"""Datasets: synthetic generators, scaling and delimited-text I/O."""

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from visclust._rng import as_generator
from visclust.errors import DataParseError, GenerationError, InvalidInputError

BLOB_SPACING = 2.5
MAX_PLACEMENT_ATTEMPTS = 100_000


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError(f"points must be a nonempty m x d matrix, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise InvalidInputError("points contain non-finite values")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise InvalidInputError(f"{lab.size} labels for {pts.shape[0]} points")
            object.__setattr__(self, "labels", lab)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != pts.shape[1]:
                raise InvalidInputError("feature name count does not match dimension")
            object.__setattr__(self, "feature_names", names)

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


def _split_sizes(m, n_c):
    base, extra = divmod(m, n_c)
    return [base + (1 if i < extra else 0) for i in range(n_c)]


def _place_centers(n_c, d, rng, spacing=BLOB_SPACING):
    centers = [np.zeros(d)]
    for _ in range(1, n_c):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            anchor = centers[rng.integers(len(centers))]
            u = rng.standard_normal(d)
            norm = np.linalg.norm(u)
            if norm == 0:
                continue
            cand = anchor + spacing * u / norm
            dist = np.linalg.norm(np.asarray(centers) - cand, axis=1)
            if np.all(dist >= spacing - 1e-12):
                centers.append(cand)
                break
        else:
            raise GenerationError(f"could not place center {len(centers) + 1} after {MAX_PLACEMENT_ATTEMPTS} attempts")
    return np.asarray(centers)


def gen_blobs(m=1000, d=5, n_c=4, std=0.05, rng=None):
    """Isotropic Gaussian blobs whose centers sit 2.5 apart.

    The first center is the origin; each further center lies exactly 2.5 from
    a randomly chosen existing center and at least 2.5 from all others.
    """
    if n_c < 1 or m < n_c:
        raise InvalidInputError(f"need 1 <= n_c <= m, got n_c={n_c}, m={m}")
    if std <= 0:
        raise InvalidInputError("std must be positive")
    rng = as_generator(rng)
    centers = _place_centers(n_c, d, rng)
    sizes = _split_sizes(m, n_c)
    labels = np.repeat(np.arange(1, n_c + 1), sizes)
    points = centers[labels - 1] + std * rng.standard_normal((m, d))
    return Dataset(points, labels, meta={"centers": centers})


def pad_dimensions(x, new_d, rng=None):
    """Append uninformative coordinates drawn between the global data extremes."""
    ds = x if isinstance(x, Dataset) else Dataset(x)
    if new_d <= ds.d:
        raise InvalidInputError(f"new dimension {new_d} must exceed current {ds.d}")
    rng = as_generator(rng)
    lo, hi = ds.points.min(), ds.points.max()
    extra = rng.uniform(lo, hi, size=(ds.m, new_d - ds.d)) if hi > lo else np.full((ds.m, new_d - ds.d), lo)
    return Dataset(np.hstack([ds.points, extra]), ds.labels, meta=dict(ds.meta))


def gen_circles(m=1500, noise_std=0.0, rng=None, factor=0.5):
    """Two concentric circles of radius 1 (label 1) and ``factor`` (label 2)."""
    if m < 2:
        raise InvalidInputError("need at least two points")
    rng = as_generator(rng)
    n_out = m // 2
    n_in = m - n_out
    t_out = np.linspace(0, 2 * np.pi, n_out, endpoint=False)
    t_in = np.linspace(0, 2 * np.pi, n_in, endpoint=False)
    pts = np.vstack(
        [
            np.column_stack([np.cos(t_out), np.sin(t_out)]),
            factor * np.column_stack([np.cos(t_in), np.sin(t_in)]),
        ]
    )
    if noise_std > 0:
        pts = pts + noise_std * rng.standard_normal(pts.shape)
    labels = np.repeat([1, 2], [n_out, n_in])
    return Dataset(pts, labels)


def gen_moons(m=1500, noise_std=0.0, rng=None):
    """Two interleaved half circles; the lower one is shifted by (1, 0.5)."""
    if m < 2:
        raise InvalidInputError("need at least two points")
    rng = as_generator(rng)
    n_up = m // 2
    n_low = m - n_up
    t_up = np.linspace(0, np.pi, n_up)
    t_low = np.linspace(0, np.pi, n_low)
    pts = np.vstack(
        [
            np.column_stack([np.cos(t_up), np.sin(t_up)]),
            np.column_stack([1 - np.cos(t_low), 0.5 - np.sin(t_low)]),
        ]
    )
    if noise_std > 0:
        pts = pts + noise_std * rng.standard_normal(pts.shape)
    labels = np.repeat([1, 2], [n_up, n_low])
    return Dataset(pts, labels)


def gen_single_gaussian(m=1500, d=2, std=1.0, rng=None):
    if m < 2:
        raise InvalidInputError("need at least two points")
    rng = as_generator(rng)
    return Dataset(std * rng.standard_normal((m, d)), np.ones(m, dtype=int))


def scale_minmax(x):
    """Map every coordinate affinely onto [-1, 1]; constant coordinates go to 0."""
    is_ds = isinstance(x, Dataset)
    pts = x.points if is_ds else np.asarray(x, dtype=float)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, 2.0 * (pts - lo) / safe - 1.0, 0.0)
    if is_ds:
        return Dataset(out, x.labels, x.feature_names, dict(x.meta))
    return out


def _sniff_delimiter(first_line):
    if "\t" in first_line:
        return "\t"
    if "," in first_line:
        return ","
    return None  # whitespace


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_delimited(path, delimiter=None, header=None, label_column=None):
    """Read a numeric table from comma-, tab- or whitespace-separated text.

    ``header=None`` detects a header row by the presence of a non-numeric
    field. ``label_column`` (name or 0-based index, negative allowed) is split
    off as integer ground-truth labels.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataParseError(f"{path}: no data")
    if delimiter is None:
        delimiter = _sniff_delimiter(lines[0])
    if delimiter is None:
        rows = [ln.split() for ln in lines]
    else:
        rows = [[c.strip() for c in r] for r in csv.reader(io.StringIO("\n".join(lines)), delimiter=delimiter)]
    if header is None:
        header = not all(_is_number(c) for c in rows[0])
    names = rows[0] if header else None
    body = rows[1:] if header else rows
    if not body:
        raise DataParseError(f"{path}: header but no data rows")
    width = len(body[0])
    first_row = 2 if header else 1
    for r, row in enumerate(body):
        if len(row) != width:
            raise DataParseError(f"{path}: row {r + first_row} has {len(row)} fields, expected {width}")
    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if names is None or label_column not in names:
                raise DataParseError(f"{path}: no column named {label_column!r}")
            label_idx = names.index(label_column)
        else:
            label_idx = int(label_column) % width
    values = np.empty((len(body), width))
    raw_labels = []
    for r, row in enumerate(body):
        for c, tok in enumerate(row):
            if c == label_idx:
                raw_labels.append(tok)
                continue
            try:
                values[r, c] = float(tok)
            except ValueError:
                col = names[c] if names else c + 1
                raise DataParseError(f"{path}: row {r + first_row}, column {col}: cannot parse {tok!r}") from None
    keep = [c for c in range(width) if c != label_idx]
    labels = None
    if label_idx is not None:
        try:
            labels = np.array([int(float(t)) for t in raw_labels])
        except ValueError:
            # symbolic class names -> 1..n in order of first appearance
            codes = {}
            labels = np.array([codes.setdefault(t, len(codes) + 1) for t in raw_labels])
    feature_names = tuple(names[c] for c in keep) if names else None
    return Dataset(values[:, keep], labels, feature_names)


def save_points(path, dataset, label_name="label"):
    """Write points (and labels, if any) with 17 significant digits."""
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    names = list(ds.feature_names or (f"x{i + 1}" for i in range(ds.d)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ([label_name] if ds.labels is not None else []))
        for i, row in enumerate(ds.points):
            out = [f"{v:.17g}" for v in row]
            if ds.labels is not None:
                out.append(str(int(ds.labels[i])))
            w.writerow(out)


def save_labels(path, labels, header=None):
    labels = getattr(labels, "labels", labels)
    with open(path, "w") as fh:
        if header:
            fh.write(f"{header}\n")
        for v in np.asarray(labels):
            fh.write(f"{int(v)}\n")


def load_labels(path):
    """Read one integer label per line; a non-numeric first line is a header."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines and not _is_number(lines[0]):
        lines = lines[1:]
    out = []
    for i, ln in enumerate(lines):
        try:
            out.append(int(float(ln)))
        except ValueError:
            raise DataParseError(f"{path}: line {i + 1}: cannot parse label {ln!r}") from None
    return np.array(out, dtype=int)


_DATA_DIR = Path(__file__).parent / "datasets"


def load_iris():
    """Fisher's Iris (150 x 4, three classes)."""
    return load_delimited(_DATA_DIR / "iris.csv", label_column="species")


BANKNOTE_ENV = "VISCLUST_BANKNOTE_PATH"


def load_banknotes(path=None):
    """UCI Banknote Authentication (1372 x 4, two classes).

    The table is not bundled. It is read from ``path``, else from the file
    named by ``$VISCLUST_BANKNOTE_PATH``, else from ``datasets/banknote.csv``
    inside the package. The original headerless five-column layout (four
    features, class last) is expected.
    """
    candidates = [path, os.environ.get(BANKNOTE_ENV), _DATA_DIR / "banknote.csv"]
    for cand in candidates:
        if cand and Path(cand).is_file():
            return load_delimited(cand, label_column=-1)
    raise FileNotFoundError(
        f"banknote data not found; pass a path or set {BANKNOTE_ENV} to the UCI data_banknote_authentication.txt file"
    )
