"""Correlation battery linking characteristics to stability indices.

Four views over the same standardized sample pair: entrywise Pearson,
per-pair centered kernel alignment (RBF, median-heuristic bandwidth),
first-pair canonical correlation with ridge-regularized covariance
blocks, and its kernelized (dual, Gram-regularized) counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantColumn, DegenerateKernel, DimensionError, LengthMismatch,
    NonFinite, RankDeficient, TooFewSamples,
)

CCA_RIDGE = 1e-8
KCCA_KAPPA_SCALE = 1e-3  # default kappa = scale * n_samples
# Bandwidth = scale * median positive pairwise distance.  The quarter-median
# scale keeps the kernel local enough to separate the branches of two-to-one
# relations (e.g. y = x^2 around 0) that a full median bandwidth smooths
# over; median-proportional, so still affine invariant.
MEDIAN_BANDWIDTH_SCALE = 0.25


def standardize_columns(M: np.ndarray, what: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{what} must be a 2-D sample matrix")
    if not np.all(np.isfinite(M)):
        raise NonFinite(f"{what} contains non-finite entries")
    std = M.std(axis=0)
    if np.any(std == 0.0):
        cols = np.flatnonzero(std == 0.0).tolist()
        raise ConstantColumn(f"{what} columns {cols} are constant")
    return (M - M.mean(axis=0)) / std


@dataclass(frozen=True)
class SampleMatrixPair:
    """Characteristics (x) vs stability indices (y), standardized."""
    x: np.ndarray
    y: np.ndarray
    x_names: tuple[str, ...] = ()
    y_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = standardize_columns(self.x, "x")
        y = standardize_columns(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise LengthMismatch("x and y row counts differ")
        if x.shape[0] < 3:
            raise TooFewSamples("need at least 3 samples")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not self.x_names:
            object.__setattr__(
                self, "x_names", tuple(f"x{i}" for i in range(x.shape[1])))
        if not self.y_names:
            object.__setattr__(
                self, "y_names", tuple(f"y{i}" for i in range(y.shape[1])))
        if len(self.x_names) != x.shape[1] or len(self.y_names) != y.shape[1]:
            raise LengthMismatch("column name counts do not match matrices")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class KernelConfig:
    kernel: str = "rbf"  # "rbf" | "linear"
    bandwidth: float | None = None  # None = median pairwise distance
    kappa: float | None = None  # None = 1e-3 * n_samples


def pearson_matrix(pair: SampleMatrixPair) -> np.ndarray:
    """Entrywise Pearson correlations; columns are already standardized."""
    return (pair.x.T @ pair.y) / pair.n


def _gram(M: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Kernel Gram matrix of sample rows."""
    if cfg.kernel == "linear":
        return M @ M.T
    if cfg.kernel != "rbf":
        raise DimensionError(f"unknown kernel {cfg.kernel!r}")
    sq = np.sum(M * M, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (M @ M.T), 0.0)
    if cfg.bandwidth is not None:
        bw = float(cfg.bandwidth)
    else:
        d = np.sqrt(d2[np.triu_indices(len(M), k=1)])
        positive = d[d > 0.0]
        if positive.size == 0:
            raise DegenerateKernel("all pairwise distances are zero")
        bw = MEDIAN_BANDWIDTH_SCALE * float(np.median(positive))
    if bw <= 0.0:
        raise DegenerateKernel("kernel bandwidth must be positive")
    return np.exp(-d2 / (2.0 * bw * bw))


def _centered_gram(M: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    K = _gram(M, cfg)
    n = K.shape[0]
    H = np.eye(n) - np.ones((n, n)) / n
    Kc = H @ K @ H
    if np.linalg.norm(Kc) <= 1e-12 * n:
        raise DegenerateKernel("centered Gram matrix is numerically zero")
    return Kc


def kernel_alignment(a: np.ndarray, b: np.ndarray,
                     cfg: KernelConfig | None = None) -> float:
    """CKA of two 1-D samples: <Ka, Kb>_F / (|Ka|_F |Kb|_F), centered."""
    cfg = cfg or KernelConfig()
    Ka = _centered_gram(np.asarray(a, dtype=float).reshape(-1, 1), cfg)
    Kb = _centered_gram(np.asarray(b, dtype=float).reshape(-1, 1), cfg)
    return float(np.sum(Ka * Kb) / (np.linalg.norm(Ka) * np.linalg.norm(Kb)))


def kernel_correlation_matrix(pair: SampleMatrixPair,
                              cfg: KernelConfig | None = None) -> np.ndarray:
    """Per column pair centered kernel alignment, p x q."""
    cfg = cfg or KernelConfig()
    p = pair.x.shape[1]
    q = pair.y.shape[1]
    kx = [_centered_gram(pair.x[:, [j]], cfg) for j in range(p)]
    ky = [_centered_gram(pair.y[:, [j]], cfg) for j in range(q)]
    out = np.empty((p, q))
    for i in range(p):
        for j in range(q):
            out[i, j] = np.sum(kx[i] * ky[j]) / (
                np.linalg.norm(kx[i]) * np.linalg.norm(ky[j]))
    return out


@dataclass(frozen=True)
class CcaResult:
    rho: float
    a: np.ndarray  # p coefficients, var(X a) = 1, a[argfirst] > 0
    b: np.ndarray  # q coefficients, var(Y b) = 1


def _inv_sqrt_psd(S: np.ndarray, what: str) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    keep = w > 1e-12 * max(w.max(), 1.0)
    if not np.any(keep):
        raise RankDeficient(f"{what} block is rank deficient")
    return V[:, keep] @ np.diag(1.0 / np.sqrt(w[keep])) @ V[:, keep].T


def cca(pair: SampleMatrixPair) -> CcaResult:
    """First canonical pair with +1e-8 I ridge on the covariance blocks.

    The ridged eigenproblem supplies the coefficient directions; the
    reported correlation is the empirical correlation of the projections,
    which is insensitive to the ridge to second order.
    """
    n = pair.n
    p = pair.x.shape[1]
    q = pair.y.shape[1]
    if n <= p + q:
        raise TooFewSamples(f"need more than {p + q} samples")
    Sxx = pair.x.T @ pair.x / n + CCA_RIDGE * np.eye(p)
    Syy = pair.y.T @ pair.y / n + CCA_RIDGE * np.eye(q)
    Sxy = pair.x.T @ pair.y / n
    Wx = _inv_sqrt_psd(Sxx, "x covariance")
    Syy_inv = np.linalg.inv(Syy)
    M = Wx @ Sxy @ Syy_inv @ Sxy.T @ Wx
    w, V = np.linalg.eigh(M)
    a = Wx @ V[:, -1]
    b = Syy_inv @ Sxy.T @ a
    zx = pair.x @ a
    zy = pair.y @ b
    vx = float(zx @ zx)
    vy = float(zy @ zy)
    if vx <= 0.0 or vy <= 0.0:
        raise RankDeficient("canonical projection collapsed")
    rho = float((zx @ zy) / np.sqrt(vx * vy))
    # unit sample variance of both projections
    a = a / np.sqrt(vx / n)
    b = b / np.sqrt(vy / n)
    nz = np.flatnonzero(np.abs(a) > 1e-12)
    if nz.size and a[nz[0]] < 0:
        a = -a
        rho = -rho
    if rho < 0:
        b = -b
        rho = -rho
    return CcaResult(rho=min(rho, 1.0), a=a, b=b)


def _damped_basis(K: np.ndarray, kappa: float, what: str):
    """Eigenbasis of a centered Gram with damping weights sqrt(l/(l+kappa))."""
    w, U = np.linalg.eigh((K + K.T) / 2.0)
    keep = w > 1e-12 * max(w[-1], 0.0)
    if not np.any(keep):
        raise DegenerateKernel(f"{what} Gram matrix has no positive spectrum")
    return U[:, keep], np.sqrt(w[keep] / (w[keep] + kappa))


def kcca(pair: SampleMatrixPair, cfg: KernelConfig | None = None) -> float:
    """First kernel canonical correlation from the regularized dual problem.

    Maximizes a' Kx Ky b over a, b subject to the kappa-regularized norms
    a'(Kx^2 + kappa Kx)a and b'(Ky^2 + kappa Ky)b.  In the eigenbases of
    the centered Grams this is the largest singular value of
    Dx Ux' Uy Dy with damping weights D = diag(sqrt(l/(l + kappa))),
    which keeps every factor bounded by one.
    """
    cfg = cfg or KernelConfig()
    n = pair.n
    p = pair.x.shape[1]
    q = pair.y.shape[1]
    if n <= p + q:
        raise TooFewSamples(f"need more than {p + q} samples")
    kappa = cfg.kappa if cfg.kappa is not None else KCCA_KAPPA_SCALE * n
    if kappa <= 0:
        raise DimensionError("kappa must be positive")
    Ux, dx = _damped_basis(_centered_gram(pair.x, cfg), kappa, "x")
    Uy, dy = _damped_basis(_centered_gram(pair.y, cfg), kappa, "y")
    G = (dx[:, None] * (Ux.T @ Uy)) * dy[None, :]
    s = np.linalg.svd(G, compute_uv=False)
    return float(np.clip(s[0], 0.0, 1.0))
