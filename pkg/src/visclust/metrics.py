"""Clustering evaluation: contingency tables, Rand index, one-sided ARI, ACC.

The adjusted Rand index here corrects for chance under the one-sided random
model with a fixed number of clusters: the predicted partition ``A`` is
randomised over all partitions of the ``m`` points into ``n_cA`` nonempty
blocks while the reference ``B`` stays fixed. Its expectation involves the
Stirling numbers of the second kind, which are handled as exact integers.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numpy as np
from scipy.optimize import linear_sum_assignment

from visclust.errors import InsufficientDataError, InvalidInputError, UndefinedMetricError

# Largest n * k for which a full recurrence table is cheap to hold.
_TABLE_LIMIT = 20_000
_RECURRENCE_LIMIT = 10_000


@dataclass(frozen=True)
class ContingencyTable:
    """``counts[i, j] = |A_i & B_j|`` with A = rows (predicted), B = columns."""

    counts: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray

    @property
    def a(self):
        return self.counts.sum(axis=1)

    @property
    def b(self):
        return self.counts.sum(axis=0)

    @property
    def m(self):
        return int(self.counts.sum())

    @property
    def shape(self):
        return self.counts.shape


def _labels(v, name):
    v = np.asarray(getattr(v, "labels", v))
    if v.ndim != 1:
        raise InvalidInputError(f"{name} labels must be one-dimensional")
    return v


def contingency(pred, truth):
    pred = _labels(pred, "predicted")
    truth = _labels(truth, "true")
    if pred.shape != truth.shape:
        raise InvalidInputError(f"label length mismatch: {pred.size} vs {truth.size}")
    if pred.size < 1:
        raise InvalidInputError("need at least one label")
    rows, ri = np.unique(pred, return_inverse=True)
    cols, ci = np.unique(truth, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (ri, ci), 1)
    return ContingencyTable(counts, rows, cols)


def _pairs(values):
    return sum(comb(int(v), 2) for v in np.ravel(values))


def _as_table(table_or_pred, truth=None):
    if isinstance(table_or_pred, ContingencyTable):
        return table_or_pred
    return contingency(table_or_pred, truth)


def _rand_fraction(table):
    m = table.m
    if m < 2:
        raise InsufficientDataError("Rand index needs at least two points")
    total = comb(m, 2)
    agree = total + 2 * _pairs(table.counts) - _pairs(table.a) - _pairs(table.b)
    return Fraction(agree, total)


def rand_index(table, truth=None):
    """Fraction of point pairs on which two partitions agree.

    Accepts a :class:`ContingencyTable` or two label vectors.
    """
    return float(_rand_fraction(_as_table(table, truth)))


def stirling2(n, k):
    """Exact S(n, k) from the alternating-sum closed form."""
    if k < 0 or n < 0:
        return 0
    if k > n:
        return 0
    total = sum((-1) ** (k - j) * comb(k, j) * j**n for j in range(k + 1))
    return total // factorial(k)


class StirlingCache:
    """Table of S(n, k) for ``n <= n_max``, ``k <= k_max`` built by recurrence.

    ``S(n, k) = k S(n-1, k) + S(n-1, k-1)``, ``S(0, 0) = 1``.
    """

    def __init__(self, n_max, k_max):
        if n_max < 0 or k_max < 0:
            raise ValueError("bounds must be nonnegative")
        self.n_max = int(n_max)
        self.k_max = int(k_max)
        rows = [[1] + [0] * self.k_max]
        for n in range(1, self.n_max + 1):
            prev = rows[-1]
            row = [0] * (self.k_max + 1)
            for k in range(1, min(n, self.k_max) + 1):
                row[k] = k * prev[k] + prev[k - 1]
            rows.append(row)
        self._rows = rows

    def __call__(self, n, k):
        if k > n:
            return 0
        if n > self.n_max or k > self.k_max or n < 0 or k < 0:
            raise IndexError(f"S({n}, {k}) outside cache bounds ({self.n_max}, {self.k_max})")
        return self._rows[n][k]


def _stirling_pair(m, k):
    """(S(m-1, k), S(m, k)) as exact integers, without materialising a table."""
    if m > _RECURRENCE_LIMIT:
        return stirling2(m - 1, k), stirling2(m, k)
    row = [1] + [0] * k
    prev_row = row
    for n in range(1, m + 1):
        prev_row = row
        row = [0] * (k + 1)
        for j in range(1, min(n, k) + 1):
            row[j] = j * prev_row[j] + prev_row[j - 1]
    return prev_row[k], row[k]


def _expected_fraction(table, stirling=None):
    m = table.m
    k = table.shape[0]
    if m < 2:
        raise InsufficientDataError("expected Rand index needs at least two points")
    if k > m:
        raise InvalidInputError(f"{k} predicted clusters for {m} points")
    if stirling is None and m * k <= _TABLE_LIMIT:
        stirling = StirlingCache(m, k)
    if stirling is not None:
        s_prev, s_cur = stirling(m - 1, k), stirling(m, k)
    else:
        s_prev, s_cur = _stirling_pair(m, k)
    ratio = Fraction(s_prev, s_cur)
    same_b = Fraction(_pairs(table.b), comb(m, 2))
    return ratio * same_b + (1 - ratio) * (1 - same_b)


def expected_rand_index(table, stirling=None):
    """Expected Rand index when only the predicted partition (rows) is random."""
    return float(_expected_fraction(table, stirling))


def adjusted_rand_index(pred, truth=None, stirling=None):
    """One-sided adjusted Rand index of ``pred`` against ``truth``."""
    table = _as_table(pred, truth)
    ri = _rand_fraction(table)
    e = _expected_fraction(table, stirling)
    if e == 1:
        raise UndefinedMetricError("expected Rand index is 1; adjustment undefined")
    return float((ri - e) / (1 - e))


def accuracy(pred, truth=None):
    """Fraction of points correctly labelled under the best cluster-to-class matching.

    Clusters and classes are matched one-to-one by a maximum-weight
    assignment on the contingency table; unmatched labels score nothing.
    """
    table = _as_table(pred, truth)
    counts = table.counts
    r, c = linear_sum_assignment(counts, maximize=True)
    return float(counts[r, c].sum() / table.m)


def metrics_report(pred, truth):
    table = contingency(pred, truth)
    report = {"acc": accuracy(table), "ri": rand_index(table)}
    if table.m >= 2:
        e = _expected_fraction(table)
        report["e_ri"] = float(e)
        report["ari"] = float((_rand_fraction(table) - e) / (1 - e)) if e != 1 else float("nan")
    report.update(m=table.m, n_clusters_pred=table.shape[0], n_clusters_truth=table.shape[1])
    return report


def format_report(report):
    """Flat ``key=value`` lines."""
    lines = []
    for key, val in report.items():
        if isinstance(val, float):
            val = repr(val)
        elif isinstance(val, (list, tuple, np.ndarray)):
            val = ",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in val)
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"
