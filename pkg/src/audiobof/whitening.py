"""PCA whitening of spectral blocks.

Fitting eigendecomposes the sample covariance, keeps the smallest number
of leading components covering the requested variance fraction, and
scales each kept direction by 1/sqrt(eigenvalue + EPSILON). Applying the
model is then a single affine map.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio

EPSILON = 1e-5  # eigenvalue floor inside the inverse square root


@dataclass
class WhiteningModel:
    mean: np.ndarray       # (d,)
    basis: np.ndarray      # (k, d), rows = scaled principal directions
    eigenvalues: np.ndarray  # (k,) descending
    retained_variance: float

    @property
    def input_dim(self):
        return self.mean.shape[0]

    @property
    def output_dim(self):
        return self.basis.shape[0]


def fit_whitening(X, retain=0.9) -> WhiteningModel:
    """Fit the whitening transform on rows of X.

    Covariance uses 1/(n-1); eigenvector signs are fixed so each
    direction's largest-magnitude entry is positive, which makes the fit
    byte-reproducible.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    if not 0 < retain <= 1:
        raise ValueError("retain must be in (0, 1]")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]

    total = eigvals.sum()
    if total <= 1e-12 * max(1.0, float(np.abs(X).max()) ** 2):
        raise ValueError("degenerate covariance")

    fractions = np.cumsum(eigvals) / total
    k = int(np.argmax(fractions >= retain - 1e-12)) + 1

    kept = eigvecs[:, :k]
    flip = np.sign(kept[np.argmax(np.abs(kept), axis=0), np.arange(k)])
    flip[flip == 0] = 1.0
    kept = kept * flip

    scale = 1.0 / np.sqrt(eigvals[:k] + EPSILON)
    return WhiteningModel(
        mean=mean,
        basis=scale[:, None] * kept.T,
        eigenvalues=eigvals[:k],
        retained_variance=float(fractions[k - 1]),
    )


def apply_whitening(model: WhiteningModel, x):
    """basis @ (x - mean); accepts a vector or a matrix of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"expected dimension {model.input_dim}, got {x.shape[-1]}")
    return (x - model.mean) @ model.basis.T


def save_whitening(model: WhiteningModel, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matio.save_matrix(out_dir / "mean.dbof", model.mean)
    matio.save_matrix(out_dir / "basis.dbof", model.basis)
    matio.save_matrix(out_dir / "eigenvalues.dbof", model.eigenvalues)
    header = (
        f"d {model.input_dim}\n"
        f"k {model.output_dim}\n"
        f"retain {model.retained_variance!r}\n"
        f"epsilon {EPSILON!r}\n"
    )
    (out_dir / "header.txt").write_text(header)


def load_whitening(out_dir) -> WhiteningModel:
    out_dir = Path(out_dir)
    fields = dict(line.split(None, 1) for line in (out_dir / "header.txt").read_text().splitlines())
    return WhiteningModel(
        mean=matio.load_vector(out_dir / "mean.dbof").astype(np.float64),
        basis=matio.load_matrix(out_dir / "basis.dbof").astype(np.float64),
        eigenvalues=matio.load_vector(out_dir / "eigenvalues.dbof").astype(np.float64),
        retained_variance=float(fields["retain"]),
    )
