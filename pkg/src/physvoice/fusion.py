"""Orthogonal feature fusion.

Pooled embedding features and physics features are concatenated row-wise
into X (B, P). Fitting centers X and takes a Householder QR of X_c^T; the
first k = min(B, P) columns of Q form an orthonormal basis of the span of
the centered training rows. Transforming projects centered rows onto that
basis, X_ortho = X_c Q_k Q_k^T.

Because the basis spans the training rows exactly, transforming the
training batch reproduces X_c itself (to rounding); the projection only
bites on rows outside the fitted span. That identity is a property of the
construction, not a defect, and the acceptance tests pin it.

The fitted transform is frozen: mean and basis are stored at fit time and
reused verbatim for every later batch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import FormatError, ShapeError
from .signals import EmbeddingSequence
from .validation import as_float_matrix, as_float_vector, check_n_features

_MAGIC = b"QRF1"


def pool_embedding(seq: EmbeddingSequence) -> np.ndarray:
    """Temporal mean pooling, (T, D) -> (D,)."""
    return np.mean(seq.frames, axis=0)


def householder_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR via Householder reflections with a positive diagonal of R.

    For a (m, n) input returns Q (m, k) with orthonormal columns and R
    (k, n) upper triangular, k = min(m, n), such that Q @ R reconstructs
    the input. Columns whose remaining entries are all zero are skipped
    (identity reflector), which keeps the factorization defined for
    rank-deficient input. Where the diagonal of R is positive the
    factorization is unique, so results are reproducible across platforms.
    """
    a = as_float_matrix(a, "qr input")
    m, n = a.shape
    k = min(m, n)
    r = a.copy()
    reflectors: list[tuple[int, np.ndarray]] = []
    for j in range(k):
        x = r[j:, j]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        v = x.copy()
        # Choose the sign that avoids cancellation in v[0] - alpha.
        alpha = -norm_x if x[0] >= 0 else norm_x
        v[0] -= alpha
        v /= np.linalg.norm(v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append((j, v))
    q = np.zeros((m, k))
    q[:k, :k] = np.eye(k)
    for j, v in reversed(reflectors):
        q[j:] -= 2.0 * np.outer(v, v @ q[j:])
    r = np.triu(r[:k])
    # Flip signs so diag(R) >= 0; zero diagonal entries stay put.
    signs = np.where(np.diag(r)[:k] < 0.0, -1.0, 1.0)
    q *= signs
    r *= signs[:, None]
    return q, r


def center(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the column mean; returns (centered, mean)."""
    x = as_float_matrix(x, "X")
    mu = np.mean(x, axis=0)
    return x - mu, mu


def qr_basis(x_centered: np.ndarray, validate: bool = True) -> np.ndarray:
    """Orthonormal basis (P, k) for the row span of a centered batch."""
    x_centered = as_float_matrix(x_centered, "X_centered")
    q, r = householder_qr(x_centered.T)
    if validate:
        gram_err = np.max(np.abs(q.T @ q - np.eye(q.shape[1])))
        if gram_err > 1e-8:
            raise ShapeError(f"QR basis lost orthonormality (error {gram_err:.3e})")
        recon_err = np.max(np.abs(q @ r - x_centered.T))
        scale = max(1.0, float(np.max(np.abs(x_centered))))
        if recon_err > 1e-8 * scale:
            raise ShapeError(f"QR reconstruction error {recon_err:.3e} too large")
    return q


@dataclass(frozen=True, eq=False)
class FusedBatch:
    """Projected batch plus the frozen statistics that produced it."""

    x_ortho: np.ndarray
    mu: np.ndarray
    q_k: np.ndarray


class OrthogonalFusion(BaseEstimator, TransformerMixin):
    """Center-and-project transformer over concatenated feature rows.

    fit learns the batch mean and the orthonormal row-span basis;
    transform applies ``(X - mean_) @ basis_ @ basis_.T``.
    """

    def __init__(self, validate: bool = True):
        self.validate = validate

    def fit(self, X, y=None):
        x_centered, mu = center(X)
        self.mean_ = mu
        self.basis_ = qr_basis(x_centered, validate=self.validate)
        self.n_features_in_ = x_centered.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "basis_"):
            raise ShapeError("OrthogonalFusion must be fitted before transform")
        x = as_float_matrix(X, "X")
        check_n_features(x, self.n_features_in_, "X")
        return (x - self.mean_) @ self.basis_ @ self.basis_.T

    def transform_vector(self, x_new: np.ndarray) -> np.ndarray:
        x = as_float_vector(x_new, "x_new")
        check_n_features(x, self.n_features_in_, "x_new")
        return (x - self.mean_) @ self.basis_ @ self.basis_.T


def fuse(x: np.ndarray) -> FusedBatch:
    """One-shot fit-and-project of a batch."""
    fusion = OrthogonalFusion().fit(x)
    return FusedBatch(fusion.transform(x), fusion.mean_, fusion.basis_)


def apply_fusion(x_new: np.ndarray, mu: np.ndarray, q_k: np.ndarray) -> np.ndarray:
    """Project one new row with frozen statistics."""
    x = as_float_vector(x_new, "x_new")
    if x.shape[0] != mu.shape[0] or q_k.shape[0] != mu.shape[0]:
        raise ShapeError(
            f"dimension mismatch: x has {x.shape[0]}, mu has {mu.shape[0]}, "
            f"basis has {q_k.shape[0]} rows"
        )
    return (x - mu) @ q_k @ q_k.T


def save_fusion(path, fusion: OrthogonalFusion) -> None:
    """Binary layout: magic, u32 dims, u32 k, mean then basis as little-endian f32 row-major."""
    if not hasattr(fusion, "basis_"):
        raise ShapeError("cannot save an unfitted fusion transform")
    dims, k = fusion.basis_.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", dims, k))
        fh.write(fusion.mean_.astype("<f4").tobytes())
        fh.write(np.ascontiguousarray(fusion.basis_, dtype="<f4").tobytes())


def load_fusion(path) -> OrthogonalFusion:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a fusion transform file")
    dims, k = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * dims + 4 * dims * k
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    mean = np.frombuffer(blob, dtype="<f4", count=dims, offset=12).astype(np.float64)
    basis = (
        np.frombuffer(blob, dtype="<f4", count=dims * k, offset=12 + 4 * dims)
        .astype(np.float64)
        .reshape(dims, k)
    )
    fusion = OrthogonalFusion()
    fusion.mean_ = mean
    fusion.basis_ = basis
    fusion.n_features_in_ = dims
    return fusion
