"""Dense linear algebra and randomness substrate.

All public operations work on 2-D float64 numpy arrays and either return
finite values or raise. Randomness everywhere in the package flows through
:func:`make_rng`, which pins the counter-based Philox4x32-10 bit generator so
that a seed produces the same stream on every platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

# Name of the one PRNG used package-wide (see README, "Reproducibility").
PRNG_NAME = "philox4x32-10"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator over the fixed Philox4x32-10 bit stream."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit sub-seed from a base seed and context labels.

    Used to give every sweep cell (fraction index, repeat index, ...) an
    independently reproducible stream: SHA-256 over the rendered components,
    truncated to 8 bytes.
    """
    text = "|".join([str(int(base_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise ValueError."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD: returns (U, s, V) with U @ diag(s) @ V.T == m.

    s is non-negative and non-increasing; U and V have orthonormal columns.
    Raises NumericalError with matrix diagnostics if the backend fails to
    converge.
    """
    m = check_matrix(m, "svd input")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        fro = float(np.linalg.norm(m))
        amax = float(np.max(np.abs(m))) if m.size else 0.0
        raise NumericalError(
            f"SVD did not converge for {m.shape[0]}x{m.shape[1]} matrix "
            f"(||m||_F={fro:.6g}, max|m_ij|={amax:.6g}): {exc}"
        ) from exc
    return u, s, vt.T


@dataclass(frozen=True)
class PcaModel:
    """Linear PCA fitted on row-sample data (centering only, no scaling)."""

    mean: np.ndarray                      # (d,)
    components: np.ndarray                # (d, k), orthonormal columns
    explained_variance_ratio: np.ndarray  # (k,), non-increasing, sum <= 1
    k: int


def fit_pca(data, k: int) -> PcaModel:
    """Fit a k-component PCA on an (n, d) sample matrix.

    Components are the top right-singular vectors of the centered data;
    explained variance ratios come from the squared singular values over the
    total variance of all d directions.
    """
    data = check_matrix(data, "pca data")
    n, d = data.shape
    if n < 2:
        raise ValueError(f"pca requires at least 2 samples, got {n}")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"pca k={k} out of range 1..min(n={n}, d={d})")
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, v = svd(centered)
    variances = s**2 / (n - 1)
    total = float(variances.sum())
    if total > 0.0:
        ratio = variances[:k] / total
    else:
        ratio = np.zeros(k)
    return PcaModel(mean=mean, components=v[:, :k].copy(),
                    explained_variance_ratio=np.asarray(ratio, dtype=np.float64),
                    k=int(k))


def apply_pca(model: PcaModel, data) -> np.ndarray:
    """Project (n, d) rows onto the model's components: (rows - mean) @ C."""
    data = check_matrix(data, "pca input")
    d = model.mean.shape[0]
    if data.shape[1] != d:
        raise ValueError(f"pca input has {data.shape[1]} columns, model expects {d}")
    return (data - model.mean) @ model.components


def inverse_pca(model: PcaModel, reduced) -> np.ndarray:
    """Map (n, k) reduced rows back to the original d-dimensional space."""
    reduced = check_matrix(reduced, "pca reduced input")
    if reduced.shape[1] != model.k:
        raise ValueError(f"reduced input has {reduced.shape[1]} columns, model k={model.k}")
    return reduced @ model.components.T + model.mean


def solve_least_squares(a, b) -> np.ndarray:
    """Minimal-norm argmin_X ||A X - B||_F via the SVD pseudoinverse.

    For rank-deficient A the returned X has the smallest Frobenius norm among
    all minimizers.
    """
    a = check_matrix(a, "A")
    b = check_matrix(b, "B")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row count mismatch: A has {a.shape[0]}, B has {b.shape[0]}")
    u, s, v = svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], b.shape[1]))
    cutoff = max(a.shape) * np.finfo(np.float64).eps * s[0]
    inv_s = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return v @ (inv_s[:, None] * (u.T @ b))
