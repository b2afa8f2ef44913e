"""Random orthonormal projection bases and related quantities.

A basis ``q`` is a ``k x d`` matrix with orthonormal rows (a point on the
Stiefel manifold); the induced orthogonal projector is ``p = q.T @ q``.
Uniform bases are drawn by orthonormalising a Gaussian matrix with QR and
fixing the signs so the triangular factor has a nonnegative diagonal, which
makes the basis a deterministic function of the Gaussian draw.
"""

from dataclasses import dataclass, field

import numpy as np

from visclust._rng import as_generator
from visclust.errors import InsufficientDataError, InvalidDimensionError


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProjectionBasis:
    """Row-orthonormal ``k x d`` matrix."""

    q: np.ndarray

    def __post_init__(self):
        q = _frozen(self.q)
        if q.ndim != 2 or q.shape[0] > q.shape[1]:
            raise InvalidDimensionError(f"basis must be k x d with k <= d, got {q.shape}")
        object.__setattr__(self, "q", q)

    @property
    def k(self):
        return self.q.shape[0]

    @property
    def d(self):
        return self.q.shape[1]

    def projector(self):
        """The ``d x d`` orthogonal projector ``q.T @ q``."""
        return self.q.T @ self.q


@dataclass(frozen=True)
class ProjectionSet:
    """Ordered collection of bases sharing one ``(k, d)``.

    Stored stacked as an ``(n, k, d)`` array for vectorised use.
    """

    q: np.ndarray
    seed: int | None = field(default=None)

    def __post_init__(self):
        q = _frozen(self.q)
        if q.ndim != 3 or q.shape[0] == 0:
            raise InvalidDimensionError(f"expected a nonempty (n, k, d) stack, got shape {q.shape}")
        if q.shape[1] > q.shape[2]:
            raise InvalidDimensionError("bases must satisfy k <= d")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_bases(cls, bases, seed=None):
        mats = [b.q if isinstance(b, ProjectionBasis) else np.asarray(b, dtype=float) for b in bases]
        if not mats:
            raise InvalidDimensionError("projection set must be nonempty")
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise InvalidDimensionError(f"mixed basis shapes in set: {sorted(shapes)}")
        return cls(np.stack(mats), seed=seed)

    def __len__(self):
        return self.q.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return ProjectionSet(self.q[i], seed=self.seed)
        return ProjectionBasis(self.q[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def k(self):
        return self.q.shape[1]

    @property
    def d(self):
        return self.q.shape[2]


def _check_kd(k, d):
    if not (isinstance(k, (int, np.integer)) and isinstance(d, (int, np.integer))):
        raise InvalidDimensionError("k and d must be integers")
    if k < 1 or k > d:
        raise InvalidDimensionError(f"need 1 <= k <= d, got k={k}, d={d}")


def _orthonormalize(g):
    # g: (..., d, k) Gaussian; returns (..., k, d) with orthonormal rows.
    qf, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    signs = np.where(diag < 0, -1.0, 1.0)
    qf = qf * signs[..., None, :]
    return np.swapaxes(qf, -1, -2)


def sample_stiefel(k, d, rng=None):
    """Draw a uniformly distributed ``k x d`` basis with orthonormal rows."""
    _check_kd(k, d)
    rng = as_generator(rng)
    g = rng.standard_normal((d, k))
    return ProjectionBasis(_orthonormalize(g))


def sample_projection_set(n, k, d, rng=None, seed=None):
    """Draw ``n`` bases; bitwise equal to ``n`` successive :func:`sample_stiefel` calls."""
    _check_kd(k, d)
    if n < 1:
        raise InvalidDimensionError("need at least one projection")
    rng = as_generator(rng if rng is not None else seed)
    g = rng.standard_normal((n, d, k))
    return ProjectionSet(_orthonormalize(g), seed=seed)


def project(q, x):
    """Apply the basis to every row of ``x`` (``m x d``), returning ``m x k``."""
    qm = q.q if isinstance(q, ProjectionBasis) else np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != qm.shape[1]:
        raise InvalidDimensionError(f"data has shape {x.shape}, basis expects {qm.shape[1]} columns")
    return x @ qm.T


def total_variance(x):
    """Unbiased sample variance summed over all coordinates."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    if m < 2:
        raise InsufficientDataError("total variance needs at least two points")
    centered = x - x.mean(axis=0)
    return float(np.sum(centered * centered) / (m - 1))


def projector_distances(a, b):
    """Frobenius distances between the projectors of two basis stacks.

    Uses ``||P_a - P_b||_F^2 = 2k - 2 ||q_a q_b^T||_F^2``, which depends on the
    subspaces only, never on the particular bases.
    """
    qa = a.q if isinstance(a, (ProjectionSet, ProjectionBasis)) else np.asarray(a, dtype=float)
    qb = b.q if isinstance(b, (ProjectionSet, ProjectionBasis)) else np.asarray(b, dtype=float)
    if qa.ndim == 2:
        qa = qa[None]
    if qb.ndim == 2:
        qb = qb[None]
    if qa.shape[1:] != qb.shape[1:]:
        raise InvalidDimensionError(f"cannot compare bases of shape {qa.shape[1:]} and {qb.shape[1:]}")
    k = qa.shape[1]
    g = np.einsum("aid,bjd->abij", qa, qb)
    sq = 2.0 * k - 2.0 * np.einsum("abij,abij->ab", g, g)
    return np.sqrt(np.maximum(sq, 0.0))


def covering_radius_estimate(projection_set, probes=500, rng=None):
    """Monte-Carlo estimate of the covering radius of a projection set.

    The supremum over the Grassmannian is replaced by a maximum over
    ``probes`` uniformly drawn projectors (or over explicitly supplied probe
    bases).
    """
    if not isinstance(projection_set, ProjectionSet):
        projection_set = ProjectionSet.from_bases(projection_set)
    k, d = projection_set.k, projection_set.d
    if isinstance(probes, (int, np.integer)):
        if probes < 1:
            raise ValueError("probes must be >= 1")
        probe_q = sample_projection_set(int(probes), k, d, rng=as_generator(rng)).q
    else:
        probe_q = probes.q if isinstance(probes, ProjectionSet) else np.asarray(probes, dtype=float)
        if probe_q.ndim == 2:
            probe_q = probe_q[None]
        if probe_q.shape[1:] != (k, d):
            raise InvalidDimensionError("probe bases do not match the set's (k, d)")
    dist = projector_distances(probe_q, projection_set.q)
    return float(dist.min(axis=1).max())
