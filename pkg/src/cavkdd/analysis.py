"""Dataset diagnostics: explained variance of singular values and a
two-component PCA projection of a seeded row sample.

The SVD is computed here rather than bought: a Householder QR reduction for
tall matrices followed by a one-sided Jacobi sweep on the square factor
(the test suite validates it against a brute-force covariance
eigendecomposition). The input matrix is mean-centered first even though
standardization already centers the numeric columns, because one-hot
columns are not centered by the preprocessor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InputError
from .ingest import CLASS_NAMES
from .preprocess import FeatureMatrix

_JACOBI_TOL = 1e-14
_MAX_SWEEPS = 60


def _householder_r(a: np.ndarray) -> np.ndarray:
    """Upper-triangular R of the QR factorization (Q discarded)."""
    a = a.astype(np.float64).copy()
    n, m = a.shape
    for j in range(min(n - 1, m)):
        x = a[j:, j]
        norm_x = np.sqrt(x @ x)
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += norm_x if x[0] >= 0 else -norm_x
        v /= np.sqrt(v @ v)
        a[j:, j:] -= np.outer(2.0 * v, v @ a[j:, j:])
    r = a[:m, :m]
    return np.triu(r)


def _jacobi_svd(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Jacobi: returns (singular values descending, V with
    matching right singular vectors as columns)."""
    a = b.astype(np.float64).copy()
    m = a.shape[1]
    v = np.eye(m)
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                app = a[:, p] @ a[:, p]
                aqq = a[:, q] @ a[:, q]
                apq = a[:, p] @ a[:, q]
                if apq == 0.0 or abs(apq) <= _JACOBI_TOL * np.sqrt(app * aqq):
                    continue
                rotated = True
                # stable tangent: no division by the (possibly tiny) apq
                diff = aqq - app
                sign = 1.0 if diff >= 0 else -1.0
                t = 2.0 * apq * sign / (abs(diff) + np.hypot(diff, 2.0 * apq))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            break
    sing = np.sqrt((a * a).sum(axis=0))
    order = np.argsort(-sing, kind="stable")
    return sing[order], v[:, order]


def _centered_values(X) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X)
    if values.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {values.shape}")
    if values.shape[0] < 2:
        raise InputError("need at least 2 rows")
    values = values.astype(np.float64)
    return values - values.mean(axis=0)


def _svd(centered: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = centered.shape
    b = _householder_r(centered) if n > m else centered
    return _jacobi_svd(b)


@dataclass(frozen=True)
class VarianceProfile:
    """Full spectrum: singular values (non-increasing), per-component
    explained-variance fractions, cumulative fractions; ``top_k`` is the
    requested reporting depth for exports."""

    singular_values: np.ndarray
    variance_fractions: np.ndarray
    cumulative_fractions: np.ndarray
    top_k: int

    def top_cumulative(self, k: int) -> float:
        return float(self.cumulative_fractions[k - 1])


@dataclass(frozen=True)
class PcaProjection:
    coordinates: np.ndarray     # (n, 2)
    labels: np.ndarray
    components: np.ndarray      # (2, F), orthonormal rows


def svd_variance(X, top_k: Optional[int] = None) -> VarianceProfile:
    """Spectrum of the mean-centered matrix with explained-variance
    fractions sigma_i^2 / sum_j sigma_j^2."""
    centered = _centered_values(X)
    sing, _ = _svd(centered)
    if top_k is None:
        top_k = len(sing)
    if not 1 <= top_k <= len(sing):
        raise InputError(f"top_k must be in [1, {len(sing)}], got {top_k}")
    power = sing * sing
    total = power.sum()
    if total == 0.0:
        raise InputError("svd_variance: matrix has zero variance")
    fractions = power / total
    return VarianceProfile(singular_values=sing,
                           variance_fractions=fractions,
                           cumulative_fractions=np.cumsum(fractions),
                           top_k=int(top_k))


def pca_project(X, labels, n_samples: int = 90_000, seed: int = 0) -> PcaProjection:
    """Project a seeded uniform row sample onto its top-2 right singular
    vectors; duplicated rows land on identical points."""
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X)
    labels = np.asarray(labels)
    if n_samples < 3:
        raise InputError(f"n_samples must be >= 3, got {n_samples}")
    if values.ndim != 2 or values.shape[1] < 2:
        raise InputError(f"need a 2-D matrix with >= 2 columns, got {values.shape}")
    if len(values) != len(labels):
        raise InputError(f"{len(values)} rows vs {len(labels)} labels")
    n = len(values)
    if n_samples >= n:
        idx = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=n_samples, replace=False))
    sample = values[idx].astype(np.float64)
    centered = sample - sample.mean(axis=0)
    _, v = _svd(centered)
    components = v[:, :2]
    coords = centered @ components
    return PcaProjection(coordinates=coords, labels=labels[idx].copy(),
                         components=components.T.copy())


# --- CSV export --------------------------------------------------------------

def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="ascii")
    os.replace(tmp, path)


def export_variance_csv(profile: VarianceProfile, path) -> None:
    """component,singular_value,variance_fraction,cumulative_fraction with
    9 significant digits, one row per component up to the profile's top_k."""
    lines = ["component,singular_value,variance_fraction,cumulative_fraction"]
    for i in range(profile.top_k):
        lines.append(f"{i + 1},{profile.singular_values[i]:.9g},"
                     f"{profile.variance_fractions[i]:.9g},"
                     f"{profile.cumulative_fractions[i]:.9g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def export_projection_csv(projection: PcaProjection, path) -> None:
    lines = ["pc1,pc2,label"]
    for (pc1, pc2), label in zip(projection.coordinates, projection.labels):
        lines.append(f"{pc1:.9g},{pc2:.9g},{CLASS_NAMES[int(label)]}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def export_csv(obj, path) -> None:
    """Type-dispatched export for either analysis artifact."""
    if isinstance(obj, VarianceProfile):
        export_variance_csv(obj, path)
    elif isinstance(obj, PcaProjection):
        export_projection_csv(obj, path)
    else:
        raise InputError(f"cannot export object of type {type(obj).__name__}")
