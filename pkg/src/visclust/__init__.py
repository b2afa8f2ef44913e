"""Visual clustering through random orthogonal projections and image processing."""

from visclust.algorithm import (
    Partition,
    VisClustConfig,
    auto_cluster_count,
    cluster,
    recursive_binary,
)
from visclust.baselines import kmeans
from visclust.data import Dataset
from visclust.metrics import accuracy, adjusted_rand_index, rand_index

__all__ = [
    "Dataset",
    "Partition",
    "VisClustConfig",
    "accuracy",
    "adjusted_rand_index",
    "auto_cluster_count",
    "cluster",
    "kmeans",
    "rand_index",
    "recursive_binary",
]

__version__ = "0.1.0"
