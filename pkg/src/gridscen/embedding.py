"""Low-dimensional electrical coordinates from a distance matrix.

Classical multidimensional scaling double-centers the squared distances
and takes coordinates from the positive eigenpairs; metric MDS refines a
start configuration by SMACOF majorization of the stress

    sigma(X) = sum_{i<j} w_ij (D_ij - d_ij(X))^2.

Fidelity of an embedding is the Pearson correlation between embedded and
input distances over the strict upper triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionError, MethodMismatch, NonSymmetric

SYMMETRY_TOL = 1e-9
# eigenvalues within this relative band of zero count as zero
ZERO_EIG_REL = 1e-9
SIGN_TOL = 1e-12


@dataclass(frozen=True)
class Embedding:
    X: np.ndarray  # (n, k) coordinates
    method: str  # "classical" | "metric"
    k: int
    eigenvalues: np.ndarray | None = None  # signed, descending (classical)
    stress: float | None = None  # final stress (metric)
    stress_history: np.ndarray | None = None  # per-iteration stress (metric)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class SmacofConfig:
    max_iter: int = 500
    tol: float = 1e-7  # relative stress decrease stop threshold
    weights: np.ndarray | None = None  # symmetric, >= 0, zero diagonal
    init: str = "classical"  # "classical" | "random"
    seed: int = 0


def check_distance_matrix(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise NonSymmetric("distance matrix must be square")
    if not np.all(np.isfinite(D)):
        raise NonSymmetric("distance matrix contains non-finite entries")
    if np.max(np.abs(D - D.T), initial=0.0) > SYMMETRY_TOL:
        raise NonSymmetric("distance matrix is not symmetric")
    if np.max(np.abs(np.diag(D)), initial=0.0) > SYMMETRY_TOL:
        raise NonSymmetric("distance matrix diagonal is not zero")
    if np.min(D, initial=0.0) < -SYMMETRY_TOL:
        raise NonSymmetric("distance matrix has negative entries")
    return D


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix of row vectors."""
    X = np.asarray(X, dtype=float)
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def double_centered_gram(D: np.ndarray) -> np.ndarray:
    """B = -1/2 C D^(2) C with C = I - (1/n) 1 1^T."""
    n = D.shape[0]
    C = np.eye(n) - np.ones((n, n)) / n
    return -0.5 * C @ (D * D) @ C


def _fix_signs(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def classical_mds(D: np.ndarray, k: int) -> Embedding:
    """Coordinates from the top-k positive eigenpairs of the centered Gram.

    Columns are zero-padded when fewer than k positive eigenvalues exist.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= k <= n - 1:
        raise DimensionError(f"k={k} outside [1, {n - 1}]")
    B = double_centered_gram(D)
    lam, V = np.linalg.eigh(B)  # ascending
    order = np.argsort(-lam)
    lam = lam[order]
    V = _fix_signs(V[:, order])
    zero_band = ZERO_EIG_REL * np.max(np.abs(lam), initial=0.0)
    positive = lam > zero_band
    n_pos = int(np.count_nonzero(positive))
    m = min(k, n_pos)
    X = np.zeros((n, k))
    if m:
        X[:, :m] = V[:, :m] * np.sqrt(lam[:m])
    return Embedding(X=X, method="classical", k=k, eigenvalues=lam)


def stress_value(D: np.ndarray, X: np.ndarray,
                 weights: np.ndarray | None = None) -> float:
    """Raw stress sigma(X) against D (strict upper triangle)."""
    d = pairwise_distances(X)
    resid = (D - d) ** 2
    if weights is not None:
        resid = weights * resid
    iu = np.triu_indices(D.shape[0], k=1)
    return float(np.sum(resid[iu]))


def _check_weights(W: np.ndarray, n: int) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise DimensionError("weight matrix shape does not match D")
    if np.max(np.abs(W - W.T), initial=0.0) > SYMMETRY_TOL:
        raise NonSymmetric("weight matrix is not symmetric")
    if np.max(np.abs(np.diag(W)), initial=0.0) > SYMMETRY_TOL:
        raise NonSymmetric("weight matrix diagonal is not zero")
    if np.min(W, initial=0.0) < 0.0:
        raise NonSymmetric("weight matrix has negative entries")
    return W


def metric_mds(D: np.ndarray, k: int,
               cfg: SmacofConfig | None = None) -> Embedding:
    """SMACOF majorization from a classical-MDS (default) or random start.

    The stress sequence is nonincreasing by construction; this is asserted
    every iteration.  Stops on relative stress decrease below cfg.tol.
    """
    cfg = cfg or SmacofConfig()
    D = check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= k <= n - 1:
        raise DimensionError(f"k={k} outside [1, {n - 1}]")
    if cfg.weights is not None:
        W = _check_weights(cfg.weights, n)
        V = np.diag(W.sum(axis=1)) - W
        V_pinv = np.linalg.pinv(V)
    else:
        W = None
        V_pinv = None  # unit weights: V+ B X reduces to B X / n

    if cfg.init == "classical":
        X = classical_mds(D, k).X.copy()
    elif cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        X = rng.standard_normal((n, k)) * (np.max(D) or 1.0) / np.sqrt(n)
    else:
        raise DimensionError(f"unknown init {cfg.init!r}")

    history = [stress_value(D, X, W)]
    for _ in range(cfg.max_iter):
        d = pairwise_distances(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0.0, D / np.where(d > 0.0, d, 1.0), 0.0)
        if W is not None:
            ratio = W * ratio
        B = -ratio
        np.fill_diagonal(B, 0.0)
        np.fill_diagonal(B, -B.sum(axis=1))
        if V_pinv is None:
            X_new = (B @ X) / n
        else:
            X_new = V_pinv @ (B @ X)
        s_new = stress_value(D, X_new, W)
        s_old = history[-1]
        assert s_new <= s_old * (1 + 1e-12) + 1e-15, "stress increased"
        history.append(s_new)
        X = X_new
        if s_old == 0.0 or (s_old - s_new) <= cfg.tol * s_old:
            break
    return Embedding(X=X, method="metric", k=k, stress=history[-1],
                     stress_history=np.asarray(history))


def embedding_fidelity(D: np.ndarray, emb: Embedding) -> float:
    """Pearson correlation of embedded vs input distances (upper triangle)."""
    D = check_distance_matrix(D)
    if emb.n != D.shape[0]:
        raise DimensionError("embedding size does not match distance matrix")
    iu = np.triu_indices(D.shape[0], k=1)
    a = pairwise_distances(emb.X)[iu]
    b = D[iu]
    if a.size < 2 or np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateInput("correlation undefined on constant distances")
    return float(np.corrcoef(a, b)[0, 1])


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # full signed spectrum, descending
    n_positive: int
    cumulative_shares: np.ndarray  # top-m share over positive sum, m=1..n_positive

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "n_positive": self.n_positive,
            "cumulative_shares": self.cumulative_shares.tolist(),
        }


def spectrum_report(emb: Embedding) -> SpectrumReport:
    """Positive-eigenvalue count and cumulative variance shares."""
    if emb.method != "classical" or emb.eigenvalues is None:
        raise MethodMismatch("spectrum available for classical embeddings only")
    lam = emb.eigenvalues
    zero_band = ZERO_EIG_REL * np.max(np.abs(lam), initial=0.0)
    pos = lam[lam > zero_band]
    if pos.size:
        shares = np.cumsum(pos) / pos.sum()
    else:
        shares = np.zeros(0)
    return SpectrumReport(eigenvalues=lam, n_positive=int(pos.size),
                          cumulative_shares=shares)


def fidelity_sweep(D: np.ndarray, ks: list[int],
                   cfg: SmacofConfig | None = None) -> dict:
    """Fidelity-vs-dimension curves for both methods (plot-ready)."""
    out = {"k": [], "classical": [], "metric": []}
    for k in ks:
        out["k"].append(int(k))
        out["classical"].append(embedding_fidelity(D, classical_mds(D, k)))
        out["metric"].append(embedding_fidelity(D, metric_mds(D, k, cfg)))
    return out
