"""Gaussian mixture density, sampling, EM fitting and model selection.

Densities are evaluated through Cholesky factors and log-sum-exp; the
fitter is plain EM with k-means++ initialization, per-component ridge
regularization and BIC-based component-count selection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CollapsedComponent, DimensionError, InvalidSpec, NonSPD, TooFewSamples

GMM_SCHEMA_VERSION = 1

WEIGHT_FLOOR = 1e-8
REG_SCALE = 1e-6  # eigenvalue floor = REG_SCALE * pooled trace / D
REG_FLOOR = 1e-10  # keeps degenerate (single-point) components solvable
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, D)
    covariances: np.ndarray  # (M, D, D)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sig = np.asarray(self.covariances, dtype=float)
        if mu.ndim != 2:
            raise DimensionError("means must be an M x D matrix")
        M, D = mu.shape
        if w.shape != (M,) or sig.shape != (M, D, D):
            raise DimensionError("weights/covariances shapes inconsistent with means")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidSpec("mixture weights must sum to 1")
        if np.any(w < WEIGHT_FLOOR):
            raise CollapsedComponent("mixture weight below floor")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", sig)
        object.__setattr__(self, "_chol", _cholesky_factors(sig))

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]


def _cholesky_factors(covariances: np.ndarray) -> tuple[np.ndarray, ...]:
    factors = []
    for m, sigma in enumerate(covariances):
        if np.max(np.abs(sigma - sigma.T)) > 1e-9:
            raise NonSPD(f"covariance {m} is not symmetric")
        try:
            factors.append(np.linalg.cholesky(sigma))
        except np.linalg.LinAlgError as exc:
            raise NonSPD(f"covariance {m} is not positive definite") from exc
    return tuple(factors)


def _component_log_pdfs(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """(n, M) log N(x_n; mu_m, sigma_m)."""
    n, D = X.shape
    out = np.empty((n, model.n_components))
    for m in range(model.n_components):
        L = model._chol[m]
        diff = X - model.means[m]
        ysol = np.linalg.solve(L, diff.T)
        quad = np.sum(ysol * ysol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, m] = -0.5 * (D * LOG_2PI + logdet + quad)
    return out


def gmm_log_density(model: GmmModel, x) -> np.ndarray | float:
    """Log mixture density via log-sum-exp; scalar for a single point."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != model.dimension:
        raise DimensionError("point dimension does not match model")
    log_pdfs = _component_log_pdfs(model, X) + np.log(model.weights)
    peak = np.max(log_pdfs, axis=1, keepdims=True)
    out = peak[:, 0] + np.log(np.sum(np.exp(log_pdfs - peak), axis=1))
    return float(out[0]) if np.ndim(x) == 1 else out


def gmm_density(model: GmmModel, x) -> np.ndarray | float:
    """Mixture density on the linear scale."""
    return np.exp(gmm_log_density(model, x))


def gmm_sample(model: GmmModel, n: int, seed) -> np.ndarray:
    """Draw n points; component by weight, then Cholesky transform."""
    if n < 1:
        raise DimensionError("sample count must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comps = rng.choice(model.n_components, size=n, p=model.weights)
    normals = rng.standard_normal((n, model.dimension))
    out = np.empty((n, model.dimension))
    for m in range(model.n_components):
        mask = comps == m
        if np.any(mask):
            out[mask] = model.means[m] + normals[mask] @ model._chol[m].T
    return out


# --- fitting ---------------------------------------------------------------

@dataclass(frozen=True)
class GmmFitConfig:
    max_iter: int = 200
    tol: float = 1e-7  # relative log-likelihood improvement stop
    seed: int = 0


@dataclass(frozen=True)
class GmmFit:
    model: GmmModel
    log_likelihood: float
    bic: float
    n_iter: int
    ll_history: np.ndarray


def _kmeans_pp_centers(X: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    for _ in range(M - 1):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0.0:
            centers.append(X[int(rng.integers(n))])
        else:
            centers.append(X[int(rng.choice(n, p=d2 / total))])
    return np.asarray(centers)


def _covariance_floor(X: np.ndarray) -> float:
    """Eigenvalue floor for one fit, from the pooled per-column scatter.

    Fixed once per fit so the feasible covariance family never shrinks
    between iterations, which keeps EM monotone.
    """
    D = X.shape[1]
    return max(REG_SCALE * float(np.var(X, axis=0).sum()) / D, REG_FLOOR)


def _regularized(cov: np.ndarray, floor: float) -> np.ndarray:
    # spectral floor: the exact M-step maximizer over {sigma >= floor*I},
    # so regularization cannot push the log-likelihood downhill (an
    # additive ridge can, in collapsed directions)
    w, U = np.linalg.eigh((cov + cov.T) / 2.0)
    return (U * np.maximum(w, floor)) @ U.T


def _n_params(M: int, D: int) -> int:
    return (M - 1) + M * D + M * D * (D + 1) // 2


def gmm_fit(samples: np.ndarray, M: int,
            cfg: GmmFitConfig | None = None) -> GmmFit:
    """EM fit with a per-iteration monotone log-likelihood assertion.

    Components whose weight collapses below the floor are pruned and the
    fit restarts with one component fewer.
    """
    cfg = cfg or GmmFitConfig()
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise DimensionError("samples must be an n x D matrix")
    if not np.all(np.isfinite(X)):
        raise DimensionError("samples must be finite")
    n, D = X.shape
    if M < 1:
        raise DimensionError("component count must be at least 1")
    if n < M * (D + 1):
        raise TooFewSamples(f"need at least {M * (D + 1)} samples for M={M}")

    rng = np.random.default_rng(cfg.seed)
    floor = _covariance_floor(X)
    centers = _kmeans_pp_centers(X, M, rng)
    # hard-assignment initialization
    d2 = np.stack([np.sum((X - c) ** 2, axis=1) for c in centers])
    assign = np.argmin(d2, axis=0)
    weights = np.empty(M)
    means = np.empty((M, D))
    covs = np.empty((M, D, D))
    for m in range(M):
        members = X[assign == m] if np.any(assign == m) else centers[m][None, :]
        weights[m] = max(len(members), 1)
        means[m] = members.mean(axis=0)
        diff = members - means[m]
        covs[m] = _regularized(diff.T @ diff / len(members), floor)
    weights /= weights.sum()

    model = GmmModel(weights, means, covs)
    history = []
    for it in range(cfg.max_iter):
        log_pdfs = _component_log_pdfs(model, X) + np.log(model.weights)
        peak = np.max(log_pdfs, axis=1, keepdims=True)
        log_norm = peak[:, 0] + np.log(np.sum(np.exp(log_pdfs - peak), axis=1))
        ll = float(np.sum(log_norm))
        if history:
            assert ll >= history[-1] - 1e-8 * max(1.0, abs(history[-1])), \
                "log-likelihood decreased"
        converged = bool(history) and abs(ll - history[-1]) <= cfg.tol * abs(history[-1])
        history.append(ll)
        if converged:
            break
        resp = np.exp(log_pdfs - log_norm[:, None])
        nk = resp.sum(axis=0)
        # a component below D+1 effective members cannot support its own
        # covariance (it would ride on the floor and overfit), so it is
        # starved out along with weight-collapsed ones
        if np.any(nk / n < WEIGHT_FLOOR) or np.any(nk < D + 1):
            if M == 1:
                raise CollapsedComponent("single component collapsed")
            return gmm_fit(samples, M - 1, cfg)
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        covs = np.empty((M, D, D))
        for m in range(M):
            diff = X - means[m]
            covs[m] = _regularized((resp[:, m, None] * diff).T @ diff / nk[m],
                                   floor)
        model = GmmModel(weights, means, covs)

    ll = history[-1]
    bic = -2.0 * ll + _n_params(M, D) * np.log(n)
    return GmmFit(model=model, log_likelihood=ll, bic=float(bic),
                  n_iter=len(history), ll_history=np.asarray(history))


def select_components(samples: np.ndarray, M_max: int,
                      cfg: GmmFitConfig | None = None) -> int:
    """Smallest-BIC component count among the feasible M = 1..M_max."""
    if M_max < 1:
        raise DimensionError("M_max must be at least 1")
    X = np.asarray(samples, dtype=float)
    n, D = X.shape
    best_m = None
    best_bic = np.inf
    for M in range(1, M_max + 1):
        if n < M * (D + 1):
            break
        fit = gmm_fit(X, M, cfg)
        if fit.bic < best_bic - 1e-12:  # ties resolve to the smaller M
            best_bic = fit.bic
            best_m = M
    if best_m is None:
        raise TooFewSamples("not enough samples for a single component")
    return best_m


# --- serialization ---------------------------------------------------------

def gmm_to_dict(model: GmmModel) -> dict:
    return {
        "schema_version": GMM_SCHEMA_VERSION,
        "dimension": model.dimension,
        "n_components": model.n_components,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
    }


def gmm_from_dict(doc: dict) -> GmmModel:
    return GmmModel(
        weights=np.asarray(doc["weights"], dtype=float),
        means=np.asarray(doc["means"], dtype=float),
        covariances=np.asarray(doc["covariances"], dtype=float),
    )


def gmm_to_json(model: GmmModel) -> str:
    return json.dumps(gmm_to_dict(model), indent=2)
