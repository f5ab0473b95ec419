"""
PCA residue analysis of encoder embeddings
Eigenbasis fitting, component-magnitude profiles, N-sigma, windowed projection and the window sweep
"""
import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.detectors.residue import ResidueDetector, ResidueHyperparams, train_residue
from src.errors import DataError, DegenerateInputError, DimensionMismatchError
from src.evaluation import evaluate_detection
from src.logger import get_logger
from src.numerics import EigenDecomposition, as_matrix, covariance, symmetric_eig
from src.output_stage import OutputHead

logger = get_logger(__name__)

DEGENERATE_VARIANCE = 1e-12


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray
    decomposition: EigenDecomposition

    @property
    def dim(self) -> int:
        return self.decomposition.dimension

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.decomposition.eigenvalues

    @property
    def basis(self) -> np.ndarray:
        """Columns q_1..q_d"""
        return self.decomposition.eigenvectors

    def coordinates(self, embeddings: np.ndarray) -> np.ndarray:
        """Uncentred eigenbasis coordinates e^T q_i, shape (n, d)"""
        e = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if e.shape[-1] != self.dim:
            raise DimensionMismatchError(f"PCA basis is {self.dim}-dim, embeddings are {e.shape[-1]}-dim")
        return e @ self.basis


def fit_pca(embeddings: np.ndarray) -> PCAModel:
    """Eigenbasis of the covariance of clean (unattacked) embeddings"""
    x = as_matrix(embeddings, "embeddings")
    if x.shape[0] < 2:
        raise DegenerateInputError(f"PCA needs at least 2 embeddings, got {x.shape[0]}")
    if x.shape[0] < x.shape[1] + 1:
        logger.warning(f"PCA on {x.shape[0]} samples in {x.shape[1]} dims: trailing eigenvalues are zero")
    return PCAModel(x.mean(axis=0), symmetric_eig(covariance(x)))


@dataclass(frozen=True)
class ResidueProfile:
    rho: np.ndarray        # mean |e^T q_i| per rank
    std: np.ndarray        # per-rank standard deviation over samples
    count: int

    @property
    def dim(self) -> int:
        return int(self.rho.shape[0])


def component_profile(pca: PCAModel, embeddings: np.ndarray) -> ResidueProfile:
    """rho_i = mean_j |e_j . q_i|, projections uncentred"""
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise DataError("component profile needs a non-empty (n, d) embedding set")
    magnitudes = np.abs(pca.coordinates(e))
    return ResidueProfile(magnitudes.mean(axis=0), magnitudes.std(axis=0), int(e.shape[0]))


@dataclass(frozen=True)
class NSigmaResult:
    value: float
    used_ranks: int
    excluded_ranks: int


def n_sigma_detail(profile_orig: ResidueProfile, profile_attack: ResidueProfile,
                   ranks: int = 0) -> NSigmaResult:
    """
    Mean of |rho_attack - rho_orig| / std_orig over the first `ranks` ranks (0 = all).

    Ranks whose original variance is at most 1e-12 are excluded and counted.
    """
    if profile_orig.dim != profile_attack.dim:
        raise DimensionMismatchError("profiles must have equal dimension")
    limit = profile_orig.dim if ranks <= 0 else min(ranks, profile_orig.dim)
    variance = profile_orig.std[:limit] ** 2
    keep = variance > DEGENERATE_VARIANCE
    if not keep.any():
        raise DegenerateInputError("every rank has degenerate variance; N-sigma is undefined")
    gaps = np.abs(profile_attack.rho[:limit] - profile_orig.rho[:limit])[keep] / np.sqrt(variance[keep])
    return NSigmaResult(float(gaps.mean()), int(keep.sum()), int(limit - keep.sum()))


def n_sigma(profile_orig: ResidueProfile, profile_attack: ResidueProfile, ranks: int = 0) -> float:
    return n_sigma_detail(profile_orig, profile_attack, ranks).value


def residue_gap(profile_orig: ResidueProfile, profile_attack: ResidueProfile, start: int, stop: int) -> float:
    """Sum of rho_attack - rho_orig over ranks start..stop-1"""
    if not 0 <= start <= stop <= profile_orig.dim:
        raise DataError(f"rank range [{start}, {stop}) outside 0..{profile_orig.dim}")
    return float(np.sum(profile_attack.rho[start:stop] - profile_orig.rho[start:stop]))


@dataclass(frozen=True)
class WindowSpec:
    start: int
    width: int

    def check(self, dim: int):
        if self.start < 0 or self.width < 0 or self.start + self.width > dim:
            raise DataError(f"window [{self.start}, {self.start + self.width}) is outside 0..{dim}")


def windowed_projection(pca: PCAModel, e: np.ndarray, win: WindowSpec) -> np.ndarray:
    """Keep only the eigen-components with rank in [start, start + width)"""
    win.check(pca.dim)
    q = pca.basis[:, win.start:win.start + win.width]
    e = np.asarray(e, dtype=np.float64)
    return (e @ q) @ q.T


@dataclass(frozen=True)
class SweepRecord:
    start: int
    accuracy: float
    f1: float


@dataclass
class SweepData:
    """Original/attacked encoder embeddings for training and testing, plus test class labels"""
    train_original: np.ndarray
    train_attacked: np.ndarray
    test_original: np.ndarray
    test_attacked: np.ndarray
    test_labels: np.ndarray


ResidueTrainer = Callable[[np.ndarray, np.ndarray], ResidueDetector]


def default_trainer(hyper: Optional[ResidueHyperparams] = None) -> ResidueTrainer:
    def trainer(x: np.ndarray, y: np.ndarray) -> ResidueDetector:
        return train_residue(x, y, hyper).detector
    return trainer


def _sweep_point(head: OutputHead, pca: PCAModel, data: SweepData, trainer: ResidueTrainer,
                 win: WindowSpec) -> SweepRecord:
    project = lambda e: windowed_projection(pca, e, win)
    predictions = np.argmax(head.forward(project(data.test_original)).outputs, axis=1)
    accuracy = float(np.mean(predictions == data.test_labels))
    train_x = np.concatenate([project(data.train_original), project(data.train_attacked)])
    train_y = np.concatenate([np.zeros(len(data.train_original)), np.ones(len(data.train_attacked))])
    detector = trainer(train_x, train_y)
    test_scores = np.concatenate([detector.scores(project(data.test_original)),
                                  detector.scores(project(data.test_attacked))])
    test_y = np.concatenate([np.zeros(len(data.test_original)), np.ones(len(data.test_attacked))])
    f1 = evaluate_detection(test_scores, test_y, "residue").best_f1
    logger.debug(f"window p={win.start}: accuracy {accuracy:.4f}, F1 {f1:.4f}")
    return SweepRecord(win.start, accuracy, f1)


def window_sweep(head: OutputHead, pca: PCAModel, data: SweepData, width: int = 5,
                 trainer: Optional[ResidueTrainer] = None, threads: int = 1) -> List[SweepRecord]:
    """
    For every valid window start p: accuracy of the frozen output stage on projected
    test originals, and best F1 of a fresh residue detector trained on projected embeddings.
    """
    if not head.is_classifier:
        raise DataError("window sweep accuracy needs a classification head")
    if not 1 <= width <= pca.dim:
        raise DataError(f"window width {width} must lie in 1..{pca.dim}")
    trainer = trainer or default_trainer()
    windows = [WindowSpec(p, width) for p in range(pca.dim - width + 1)]
    for win in windows:
        win.check(pca.dim)
    if threads <= 1:
        return [_sweep_point(head, pca, data, trainer, w) for w in windows]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: _sweep_point(head, pca, data, trainer, w), windows))


def sweep_peaks(records: List[SweepRecord]) -> Tuple[int, int]:
    """(start with the highest accuracy, start with the highest F1); ties keep the lowest start"""
    accuracy = max(records, key=lambda r: (r.accuracy, -r.start))
    f1 = max(records, key=lambda r: (r.f1, -r.start))
    return accuracy.start, f1.start


# CSV output

def write_profile_csv(path: str, profile_orig: ResidueProfile, profile_attack: ResidueProfile):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["rank", "rho_orig", "rho_attack", "std_orig"])
        for i in range(profile_orig.dim):
            writer.writerow([i, f"{profile_orig.rho[i]:.10f}", f"{profile_attack.rho[i]:.10f}",
                             f"{profile_orig.std[i]:.10f}"])


def write_sweep_csv(path: str, records: List[SweepRecord]):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["p", "accuracy", "f1"])
        for r in records:
            writer.writerow([r.start, f"{r.accuracy:.10f}", f"{r.f1:.10f}"])
