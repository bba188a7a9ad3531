"""Discriminant analysis of latent vectors.

LDA projects latent clouds onto two axes for inspection, QDA classifies
them from per-class Gaussian fits, and the traversal displacement matrix
measures which anatomical region each latent variable moves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ATTRIBUTE_COUNT
from .sdvae import ATTRIBUTE_DIM, LATENT_DIM, attribute_slice

__all__ = [
    "AnalysisError", "LdaModel", "QdaModel", "AttributeModels",
    "ConfusionResult", "ContourEllipse",
    "fit_lda", "embed", "fit_qda", "log_posteriors", "classify",
    "classify_many", "per_attribute_models", "confusion_matrix",
    "disentanglement_matrix", "argmax_alignment", "iso_contours",
]


class AnalysisError(Exception):
    """Raised for ill-posed discriminant fits or degenerate inputs."""


def _as_matrix(latents) -> np.ndarray:
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2:
        raise AnalysisError("latents must be a 2-d array (samples x dims)")
    return z


def _class_index(labels):
    # np.unique sorts, so class order is deterministic
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    return tuple(classes.tolist()), y


# ---------------------------------------------------------------------------
# Linear discriminant embedding

@dataclass(frozen=True)
class LdaModel:
    """SVD-solved Fisher discriminant with at most two projection axes."""

    classes: tuple
    projection: np.ndarray   # (d, p), p <= 2
    center: np.ndarray       # (d,) prior-weighted mean, subtracted before projecting
    class_means: np.ndarray  # (C, p) embedded class means


def fit_lda(latents, labels, tol: float = 1e-4, n_components: int = 2) -> LdaModel:
    """Fit a linear discriminant embedding via two singular value steps.

    Within-class directions are whitened first; singular values at or below
    ``tol`` are dropped rather than regularized. The projection keeps at most
    ``n_components`` axes (never more than classes - 1).
    """
    z = _as_matrix(latents)
    classes, y = _class_index(labels)
    n, d = z.shape
    c = len(classes)
    if c < 2:
        raise AnalysisError("need at least 2 distinct labels")
    if n <= c:
        raise AnalysisError("need more samples than classes")
    priors = np.bincount(y, minlength=c) / n
    means = np.stack([z[y == i].mean(axis=0) for i in range(c)])
    center = priors @ means

    centered = z - means[y]
    std = centered.std(axis=0)
    std[std == 0.0] = 1.0
    fac = 1.0 / (n - c)
    _, s, vt = np.linalg.svd(np.sqrt(fac) * (centered / std), full_matrices=False)
    rank = int(np.sum(s > tol))
    if rank == 0:
        raise AnalysisError("within-class scatter is singular beyond tolerance")
    whiten = (vt[:rank] / std).T / s[:rank]

    between = (np.sqrt(n * priors * fac) * (means - center).T).T @ whiten
    _, s2, vt2 = np.linalg.svd(between, full_matrices=False)
    rank2 = int(np.sum(s2 > tol * s2[0]))
    if rank2 == 0:
        raise AnalysisError("no between-class scatter above tolerance")

    p = min(n_components, c - 1, rank2)
    w = whiten @ vt2[:p].T
    # sign convention: the largest-magnitude loading of each axis is positive
    flips = np.sign(w[np.argmax(np.abs(w), axis=0), np.arange(p)])
    flips[flips == 0.0] = 1.0
    w = w * flips
    return LdaModel(classes=classes, projection=w, center=center,
                    class_means=(means - center) @ w)


def embed(model: LdaModel, z) -> np.ndarray:
    """Project latent vector(s) onto the fitted discriminant axes."""
    z = np.asarray(z, dtype=np.float64)
    return (z - model.center) @ model.projection


# ---------------------------------------------------------------------------
# Quadratic discriminant classification

@dataclass(frozen=True)
class QdaModel:
    """Per-class Gaussian fit: empirical means, covariances, priors.

    Covariance spectra are truncated at an absolute eigenvalue tolerance;
    densities use the retained spectrum only (pseudo-inverse Mahalanobis and
    log pseudo-determinant). Nothing is shrunk or ridged.
    """

    classes: tuple
    means: np.ndarray         # (C, d)
    covariances: np.ndarray   # (C, d, d)
    priors: np.ndarray        # (C,)
    eigenvalues: tuple        # retained spectrum per class
    eigenvectors: tuple       # matching (d, r) bases per class


def fit_qda(latents, labels, tol: float = 1e-4,
            shrinkage: float = 0.0) -> QdaModel:
    """Fit one Gaussian per class; eigenvalues <= ``tol`` are truncated.

    A class needs at least 2 samples, and more samples than dimensions for a
    full-rank covariance (with 5 dims per attribute subset that is easy to
    satisfy; a rank-deficient class is still usable through truncation, but
    a class with no spectrum above tolerance is rejected).

    ``shrinkage`` in [0, 1] blends each class covariance toward its isotropic
    average, (1 - g) * S + g * (tr(S) / d) * I.  Zero keeps the empirical
    covariance exactly; small positive values stabilize fits where the
    dimension rivals the per-class sample count.
    """
    if not 0.0 <= shrinkage <= 1.0:
        raise AnalysisError(f"shrinkage must be in [0, 1], got {shrinkage}")
    z = _as_matrix(latents)
    classes, y = _class_index(labels)
    c = len(classes)
    if c < 2:
        raise AnalysisError("need at least 2 distinct labels")
    n, d = z.shape
    means = np.zeros((c, d))
    covs = np.zeros((c, d, d))
    vals, vecs = [], []
    for i in range(c):
        zi = z[y == i]
        if len(zi) < 2:
            raise AnalysisError(
                f"class {classes[i]!r} has {len(zi)} sample(s); need at least 2")
        means[i] = zi.mean(axis=0)
        cov = np.atleast_2d(np.cov(zi, rowvar=False, ddof=1))
        if shrinkage > 0.0:
            cov = ((1.0 - shrinkage) * cov
                   + shrinkage * (np.trace(cov) / cov.shape[0]) * np.eye(cov.shape[0]))
        covs[i] = cov
        w, v = np.linalg.eigh(cov)
        keep = w > tol
        if not np.any(keep):
            raise AnalysisError(
                f"covariance of class {classes[i]!r} is degenerate: no "
                f"eigenvalue above {tol}; supply more samples per dimension")
        vals.append(w[keep])
        vecs.append(v[:, keep])
    priors = np.bincount(y, minlength=c) / n
    return QdaModel(classes=classes, means=means, covariances=covs,
                    priors=priors, eigenvalues=tuple(vals), eigenvectors=tuple(vecs))


def log_posteriors(model: QdaModel, z) -> np.ndarray:
    """Unnormalized log posteriors: log prior plus Gaussian log density.

    Accepts a single vector (returns (C,)) or a sample matrix (returns (n, C)).
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    pts = np.atleast_2d(z)
    out = np.empty((len(pts), len(model.classes)))
    for i in range(len(model.classes)):
        w = model.eigenvalues[i]
        proj = (pts - model.means[i]) @ model.eigenvectors[i]
        maha = np.sum(proj * proj / w, axis=1)
        logdet = float(np.sum(np.log(w)))
        out[:, i] = (-0.5 * (maha + logdet + w.size * np.log(2.0 * np.pi))
                     + np.log(model.priors[i]))
    return out[0] if single else out


def classify(model: QdaModel, z):
    """Most probable class for one latent vector, with its log posteriors."""
    lp = log_posteriors(model, np.asarray(z, dtype=np.float64).reshape(-1))
    return model.classes[int(np.argmax(lp))], lp


def classify_many(model: QdaModel, zs):
    """Vectorized classify: (labels list, (n, C) log-posterior matrix)."""
    lp = log_posteriors(model, _as_matrix(zs))
    idx = np.argmax(lp, axis=1)
    return [model.classes[i] for i in idx], lp


# ---------------------------------------------------------------------------
# Whole-latent and per-attribute model pairs

@dataclass(frozen=True)
class AttributeModels:
    whole: tuple    # (LdaModel, QdaModel) on all 75 dims
    subsets: tuple  # 15 (LdaModel, QdaModel) pairs, one per 5-dim attribute


def per_attribute_models(latents, labels, tol: float = 1e-4,
                         shrinkage: float = 0.0) -> AttributeModels:
    """Fit LDA/QDA pairs on the whole latent and on each 5-dim subset."""
    z = _as_matrix(latents)
    if z.shape[1] != LATENT_DIM:
        raise AnalysisError(f"expected {LATENT_DIM}-dim latents, got {z.shape[1]}")
    whole = (fit_lda(z, labels, tol), fit_qda(z, labels, tol, shrinkage))
    subsets = []
    for k in range(ATTRIBUTE_COUNT):
        sub = z[:, attribute_slice(k)]
        subsets.append((fit_lda(sub, labels, tol),
                        fit_qda(sub, labels, tol, shrinkage)))
    return AttributeModels(whole=whole, subsets=tuple(subsets))


# ---------------------------------------------------------------------------
# Confusion summaries

@dataclass(frozen=True)
class ConfusionResult:
    classes: tuple
    counts: np.ndarray    # (C, C), rows = true, cols = predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


def confusion_matrix(model: QdaModel, latents, labels) -> ConfusionResult:
    """Counts plus per-class and macro precision/recall/F1 on labeled data."""
    z = _as_matrix(latents)
    labels = list(labels)
    if len(labels) != len(z):
        raise AnalysisError("one label per latent required")
    index = {label: i for i, label in enumerate(model.classes)}
    try:
        truth = np.array([index[t] for t in labels])
    except KeyError as missing:
        raise AnalysisError(f"label {missing} was not seen at fit time") from None
    predicted, _ = classify_many(model, z)
    pred = np.array([index[p] for p in predicted])

    c = len(model.classes)
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    diag = np.diag(counts).astype(np.float64)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros(c), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros(c), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr, out=np.zeros(c), where=pr > 0)
    return ConfusionResult(
        classes=model.classes, counts=counts,
        precision=precision, recall=recall, f1=f1,
        accuracy=float(diag.sum() / counts.sum()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()))


# ---------------------------------------------------------------------------
# Latent traversal displacement matrix

def disentanglement_matrix(generate, masks, dim: int = LATENT_DIM,
                           sweep=(-3.0, 3.0), baseline=None) -> np.ndarray:
    """Mean per-region displacement as each latent variable sweeps lo -> hi.

    ``generate`` maps an (n, dim) latent matrix to (n, V, 3) vertex positions;
    ``masks`` are the per-region vertex index sets. Entry (i, k) is the mean
    displacement in region k between the shapes generated with variable i at
    ``sweep[0]`` and at ``sweep[1]``, every other variable held at ``baseline``
    (zeros by default, i.e. the prior mean). Both sweep ends and the baseline
    accept per-variable arrays, so the traversal can be anchored to an
    encoded cohort's range instead of the prior.
    """
    lo = np.broadcast_to(np.asarray(sweep[0], dtype=np.float64), (dim,))
    hi = np.broadcast_to(np.asarray(sweep[1], dtype=np.float64), (dim,))
    if baseline is None:
        base = np.zeros(dim)
    else:
        base = np.asarray(baseline, dtype=np.float64).reshape(dim)
    z_lo = np.tile(base, (dim, 1))
    z_hi = z_lo.copy()
    idx = np.arange(dim)
    z_lo[idx, idx] = lo
    z_hi[idx, idx] = hi
    disp = np.linalg.norm(np.asarray(generate(z_hi)) - np.asarray(generate(z_lo)),
                          axis=2)
    out = np.zeros((dim, len(masks)))
    for k, mask in enumerate(masks):
        mask = np.asarray(mask, dtype=np.int64)
        if mask.size:
            out[:, k] = disp[:, mask].mean(axis=1)
    return out


def argmax_alignment(matrix) -> float:
    """Fraction of latent variables whose strongest region is their own subset."""
    m = np.asarray(matrix, dtype=np.float64)
    rows, cols = m.shape
    if rows != cols * ATTRIBUTE_DIM:
        raise AnalysisError(f"expected {cols * ATTRIBUTE_DIM} rows for {cols} regions")
    owners = np.arange(rows) // ATTRIBUTE_DIM
    return float(np.mean(np.argmax(m, axis=1) == owners))


# ---------------------------------------------------------------------------
# Iso-contour summaries of embedded clouds

@dataclass(frozen=True)
class ContourEllipse:
    """One-standard-deviation ellipse of a class cloud in the embedded plane."""

    label: object
    center: np.ndarray      # (2,)
    covariance: np.ndarray  # (2, 2), population (ddof=0)
    axes: np.ndarray        # semi-axis lengths, major first
    angle: float            # major-axis direction, radians in [0, pi)
    degenerate: bool


def iso_contours(points, labels):
    """Per-class mean and covariance of 2D points as ellipse parameters.

    Single-point classes (or flat clouds) are flagged degenerate instead of
    inventing spread.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise AnalysisError("points must be an (n, 2) array")
    classes, y = _class_index(labels)
    out = []
    for i, label in enumerate(classes):
        cloud = pts[y == i]
        center = cloud.mean(axis=0)
        if len(cloud) < 2:
            out.append(ContourEllipse(label=label, center=center,
                                      covariance=np.zeros((2, 2)),
                                      axes=np.zeros(2), angle=0.0,
                                      degenerate=True))
            continue
        cov = np.cov(cloud, rowvar=False, ddof=0)
        w, v = np.linalg.eigh(cov)  # ascending
        w = np.clip(w, 0.0, None)
        axes = np.sqrt(w[::-1])
        angle = float(np.arctan2(v[1, 1], v[0, 1]))
        if angle < 0.0:
            angle += np.pi
        out.append(ContourEllipse(label=label, center=center, covariance=cov,
                                  axes=axes, angle=angle,
                                  degenerate=bool(axes[-1] <= 0.0)))
    return tuple(out)
