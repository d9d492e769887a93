from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import structlog

from .dataset import BoundaryDistribution
from .errors import SpectralError
from .settings import get_settings
from .tensor_flatten import Flattening, flattenings_of
from .tree_model import EdgeSplit, PhyloTree

log = structlog.get_logger(__name__)

MatrixLike = Union[Flattening, np.ndarray, Sequence[Sequence[float]]]
SplitKey = Union[EdgeSplit, int]


@dataclass(frozen=True)
class SpectralResult:
    singular_values: Tuple[float, ...]
    rank: int
    dist_sq: float
    unique_minimizer: bool = True


@dataclass(frozen=True)
class DistanceEstimate:
    per_split: Dict[SplitKey, SpectralResult] = field(default_factory=dict)

    @property
    def lower_bound(self) -> float:
        return max((r.dist_sq for r in self.per_split.values()), default=0.0)


def _as_array(m: MatrixLike) -> np.ndarray:
    arr = m.to_array() if isinstance(m, Flattening) else np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise SpectralError(f"expected a nonempty matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpectralError("matrix has non-finite entries")
    return arr


def singular_values(m: MatrixLike) -> List[float]:
    return [float(s) for s in np.linalg.svd(_as_array(m), compute_uv=False)]


def _tail_sq(sigma: Sequence[float], k: int) -> float:
    tail = np.asarray(sigma[k:], dtype=np.float64)
    return float(np.dot(tail, tail))


def _check_rank(k: int, arr: np.ndarray) -> None:
    if not 0 <= k <= min(arr.shape):
        raise SpectralError(f"rank {k} outside 0..{min(arr.shape)} for a {arr.shape[0]}x{arr.shape[1]} matrix")


def eckart_young_dist_sq(m: MatrixLike, k: int = 2) -> float:
    """Squared Frobenius distance to the nearest matrix of rank at most k."""
    arr = _as_array(m)
    _check_rank(k, arr)
    return _tail_sq(singular_values(arr), k)


def spectral_result(m: MatrixLike, k: int = 2) -> SpectralResult:
    arr = _as_array(m)
    _check_rank(k, arr)
    sigma = singular_values(arr)
    unique = True
    if 0 < k < len(sigma):
        top = sigma[0]
        gap_tol = get_settings().SPECTRAL_GAP_TOLERANCE
        # the truncation is ambiguous only when the discarded value is real and ties the kept one
        if sigma[k] > 1e-12 * top and abs(sigma[k - 1] - sigma[k]) < gap_tol * top:
            unique = False
            log.warning("spectral.nonunique_minimizer", k=k, sigma_k=sigma[k - 1], sigma_k1=sigma[k])
    return SpectralResult(tuple(sigma), k, _tail_sq(sigma, k), unique)


def tree_distance_estimate(p: BoundaryDistribution, tree: PhyloTree, splits: Sequence[EdgeSplit], k: int = 2) -> DistanceEstimate:
    flats = flattenings_of(p, tree, splits)
    est = DistanceEstimate({s: spectral_result(f, k) for s, f in flats.items()})
    log.debug("spectral.tree_estimate", splits=len(splits), lower_bound=est.lower_bound)
    return est


def matrix_distance_estimate(matrices: Sequence[Flattening], k: int = 2) -> DistanceEstimate:
    return DistanceEstimate({i: spectral_result(m, k) for i, m in enumerate(matrices)})
