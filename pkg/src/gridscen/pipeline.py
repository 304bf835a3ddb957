"""Stability-aware clustering, typical-scenario selection, and prediction.

Scenarios are clustered by K-means on their standardized stability
indices, each cluster's system-level characteristics get a Gaussian
mixture fit, and the member at the mixture density peak becomes the
cluster's typical scenario. New operating points are assigned to the
cluster with the smallest weight-averaged Mahalanobis distance to the
mixture components and inherit the cluster's stability label, giving a
two-stage (stable/unstable, then voltage-only/coupled) screening
prediction without running a simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular
from scipy.spatial.distance import cdist, pdist

from .errors import (
    DimensionError, LengthMismatch, NonFinite, NonSPD, TooFewScenarios,
    UnfittedSet,
)
from .gmm import (
    GmmFitConfig, GmmModel, _covariance_floor, _kmeans_pp_centers,
    _regularized, gmm_density, gmm_fit, gmm_from_dict, gmm_to_dict,
    select_components,
)

PIPELINE_SCHEMA_VERSION = 1

KMEANS_RESTARTS = 20
KMEANS_MAX_ITER = 300
K_AUTO_RANGE = (2, 6)
MIN_GMM_MEMBERS = 10  # smaller clusters fall back to a single component
DEFAULT_M_MAX = 3
COVERAGE_THRESHOLD = 0.2  # of the max pairwise standardized distance
STD_FLOOR = 1e-12  # constant columns standardize to zero, not NaN

# index-profile thresholds behind the stability label map
TSI_UNSTABLE = 0.0  # tsi below this means rotor-angle involvement
V_SEVERITY_UNSTABLE = 0.5  # p.u. * s of integrated voltage depression

LABEL_STABLE = "stable"
LABEL_VOLTAGE = "voltage"
LABEL_COUPLED = "coupled"
# severity order; majority-vote ties resolve to the earlier (more severe) one
LABELS = (LABEL_COUPLED, LABEL_VOLTAGE, LABEL_STABLE)

STAGE1_POSITIVE = "unstable"
STAGE2_POSITIVE = LABEL_COUPLED


def _standardize_params(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def _check_matrix(X, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"{what} must be an n x d matrix")
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"{what} contains non-finite entries")
    return X


# --- stability labels ------------------------------------------------------

def scenario_label(v_severity: float, tsi: float) -> str:
    """Three-class label from the raw index pair.

    Rotor-angle involvement (tsi < 0) dominates: such scenarios are the
    stage-2 positive class whether or not voltage also collapsed.
    """
    if tsi < TSI_UNSTABLE:
        return LABEL_COUPLED
    if v_severity > V_SEVERITY_UNSTABLE:
        return LABEL_VOLTAGE
    return LABEL_STABLE


def labels_from_indices(indices: np.ndarray) -> tuple[str, ...]:
    """Per-row labels from an index matrix (v_severity, tsi, ... columns)."""
    X = _check_matrix(indices, "index matrix")
    if X.shape[1] < 2:
        raise DimensionError("index matrix needs v_severity and tsi columns")
    return tuple(scenario_label(v, t) for v, t in zip(X[:, 0], X[:, 1]))


def index_matrix(indices: Sequence) -> np.ndarray:
    """n x 3 clustering-feature matrix from StabilityIndices records."""
    return np.array([[ix.v_severity, ix.tsi, ix.rocof] for ix in indices],
                    dtype=float)


# --- K-means on standardized indices ---------------------------------------

@dataclass(frozen=True)
class ClusterModel:
    k: int
    assignments: np.ndarray  # (n,) ints in [0, k)
    centroids: np.ndarray  # (k, d) in standardized index space
    index_mean: np.ndarray  # (d,)
    index_std: np.ndarray  # (d,)
    silhouette: float  # 0.0 for the diagnostic k=1 case
    inertia: float

    def __post_init__(self):
        assign = np.asarray(self.assignments, dtype=int)
        cent = np.asarray(self.centroids, dtype=float)
        mean = np.asarray(self.index_mean, dtype=float)
        std = np.asarray(self.index_std, dtype=float)
        if self.k < 1:
            raise DimensionError("cluster count must be at least 1")
        if cent.shape != (self.k, mean.shape[0]) or std.shape != mean.shape:
            raise DimensionError("centroid/standardization shapes inconsistent")
        if assign.ndim != 1 or assign.min(initial=0) < 0 or \
                assign.max(initial=0) >= self.k:
            raise DimensionError("assignments must lie in [0, k)")
        if np.any(np.bincount(assign, minlength=self.k) == 0):
            raise DimensionError("every cluster must be nonempty")
        if np.any(std <= 0.0):
            raise DimensionError("index standard deviations must be positive")
        if not (np.isfinite(self.silhouette) and -1.0 <= self.silhouette <= 1.0):
            raise NonFinite("silhouette score outside [-1, 1]")
        object.__setattr__(self, "assignments", assign)
        object.__setattr__(self, "centroids", cent)
        object.__setattr__(self, "index_mean", mean)
        object.__setattr__(self, "index_std", std)

    @property
    def n_scenarios(self) -> int:
        return self.assignments.shape[0]

    def members(self, c: int) -> np.ndarray:
        if not 0 <= c < self.k:
            raise DimensionError("cluster id out of range")
        return np.flatnonzero(self.assignments == c)

    def standardize(self, indices: np.ndarray) -> np.ndarray:
        X = _check_matrix(indices, "index matrix")
        if X.shape[1] != self.index_mean.shape[0]:
            raise DimensionError("index matrix column count mismatch")
        return (X - self.index_mean) / self.index_std


def _lloyd(Z: np.ndarray, k: int,
           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    n = Z.shape[0]
    centers = _kmeans_pp_centers(Z, k, rng)
    assign = np.full(n, -1)
    for _ in range(KMEANS_MAX_ITER):
        d2 = cdist(Z, centers, "sqeuclidean")
        new_assign = np.argmin(d2, axis=1)
        own = d2[np.arange(n), new_assign]
        for c in range(k):  # reseed empty clusters from the worst-fit point
            if not np.any(new_assign == c):
                sizes = np.bincount(new_assign, minlength=k)
                donors = np.flatnonzero(sizes[new_assign] > 1)
                far = donors[np.argmax(own[donors])]
                new_assign[far] = c
                own[far] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centers = np.stack([Z[assign == c].mean(axis=0) for c in range(k)])
    inertia = float(np.sum(np.sum((Z - centers[assign]) ** 2, axis=1)))
    return assign, centers, inertia


def _kmeans_best(Z: np.ndarray, k: int, seed: int,
                 restarts: int) -> tuple[np.ndarray, np.ndarray, float]:
    rng = np.random.default_rng([seed, k])
    runs = [_lloyd(Z, k, rng) for _ in range(restarts)]
    inertias = [r[2] for r in runs]
    best = runs[int(np.argmin(inertias))]
    assert best[2] <= min(inertias) + 1e-12  # argmin contract
    return best


def silhouette_score(Z: np.ndarray, assign: np.ndarray, k: int) -> float:
    """Mean silhouette; singleton clusters contribute 0 by convention."""
    n = Z.shape[0]
    if k < 2 or n <= k:
        return 0.0
    D = cdist(Z, Z)
    sizes = np.bincount(assign, minlength=k)
    # (n, k) sums of distances to each cluster
    sums = np.stack([D[:, assign == c].sum(axis=1) for c in range(k)], axis=1)
    s = np.zeros(n)
    for i in range(n):
        c = assign[i]
        if sizes[c] == 1:
            continue
        a = sums[i, c] / (sizes[c] - 1)
        other = [sums[i, q] / sizes[q] for q in range(k) if q != c]
        b = min(other)
        denom = max(a, b)
        if denom > 0.0:
            s[i] = (b - a) / denom
    return float(s.mean())


def cluster_scenarios(indices: np.ndarray, k: int | None = None, *,
                      seed: int = 0,
                      restarts: int = KMEANS_RESTARTS) -> ClusterModel:
    """K-means (k-means++ init, best of `restarts`) on standardized indices.

    With k=None the cluster count maximizing the silhouette over
    K_AUTO_RANGE is chosen (ties to the smaller k). Seeds derive from
    (seed, k), so the auto choice and a direct call with the chosen k
    return identical models.
    """
    X = _check_matrix(indices, "index matrix")
    n = X.shape[0]
    if n < 2:
        raise TooFewScenarios("need at least 2 scenarios to cluster")
    mean, std = _standardize_params(X)
    Z = (X - mean) / std

    if k is None:
        if n < 3:
            raise TooFewScenarios("need at least 3 scenarios to choose k")
        best_k, best_sil, best_run = None, -np.inf, None
        for kk in range(K_AUTO_RANGE[0], min(K_AUTO_RANGE[1], n - 1) + 1):
            run = _kmeans_best(Z, kk, seed, restarts)
            sil = silhouette_score(Z, run[0], kk)
            if sil > best_sil + 1e-12:
                best_k, best_sil, best_run = kk, sil, run
        assign, centers, inertia = best_run
        k, sil = best_k, best_sil
    else:
        if k < 1:
            raise DimensionError("cluster count must be at least 1")
        if n < k:
            raise TooFewScenarios(f"{n} scenarios cannot fill {k} clusters")
        assign, centers, inertia = _kmeans_best(Z, k, seed, restarts)
        sil = silhouette_score(Z, assign, k)

    return ClusterModel(k=k, assignments=assign, centroids=centers,
                        index_mean=mean, index_std=std,
                        silhouette=sil, inertia=inertia)


# --- typical-scenario set --------------------------------------------------

@dataclass(frozen=True)
class TypicalScenarioSet:
    clusters: ClusterModel
    gmms: tuple[GmmModel, ...]  # per cluster, over standardized characteristics
    labels: tuple[str, ...]  # per-cluster stability label
    char_mean: np.ndarray  # (d,) shared standardization
    char_std: np.ndarray
    typical_ids: tuple[int, ...] | None = None  # scenario row per cluster
    coverage: tuple[float, ...] | None = None

    def __post_init__(self):
        mean = np.asarray(self.char_mean, dtype=float)
        std = np.asarray(self.char_std, dtype=float)
        k = self.clusters.k
        if len(self.gmms) != k or len(self.labels) != k:
            raise DimensionError("need one GMM and one label per cluster")
        if mean.ndim != 1 or std.shape != mean.shape or np.any(std <= 0.0):
            raise DimensionError("characteristic standardization malformed")
        for g in self.gmms:
            if g.dimension != mean.shape[0]:
                raise DimensionError("GMM dimension mismatch")
        for lab in self.labels:
            if lab not in LABELS:
                raise DimensionError(f"unknown stability label {lab!r}")
        if self.typical_ids is not None:
            ids = tuple(int(i) for i in self.typical_ids)
            if len(ids) != k:
                raise DimensionError("need one typical scenario per cluster")
            for c, i in enumerate(ids):
                if not 0 <= i < self.clusters.n_scenarios or \
                        self.clusters.assignments[i] != c:
                    raise DimensionError(
                        f"typical scenario {i} is not a member of cluster {c}")
            object.__setattr__(self, "typical_ids", ids)
        if self.coverage is not None:
            if self.typical_ids is None:
                raise DimensionError("coverage requires typical scenarios")
            cov = tuple(float(r) for r in self.coverage)
            if len(cov) != k or any(not 0.0 <= r <= 1.0 for r in cov):
                raise DimensionError("coverage rates must lie in [0, 1]")
            object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "char_mean", mean)
        object.__setattr__(self, "char_std", std)
        object.__setattr__(self, "gmms", tuple(self.gmms))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def fitted(self) -> bool:
        return self.typical_ids is not None

    def standardize(self, chars: np.ndarray) -> np.ndarray:
        X = np.asarray(chars, dtype=float)
        return (X - self.char_mean) / self.char_std


def _moment_model(Z: np.ndarray) -> GmmModel:
    # clusters too small for EM get the single-Gaussian moment fit
    mu = Z.mean(axis=0)
    diff = Z - mu
    cov = _regularized(diff.T @ diff / Z.shape[0], _covariance_floor(Z))
    return GmmModel(weights=np.ones(1), means=mu[None, :],
                    covariances=cov[None, :, :])


def _majority_label(member_labels: Sequence[str]) -> str:
    counts = {lab: 0 for lab in LABELS}
    for lab in member_labels:
        counts[lab] += 1
    return max(LABELS, key=counts.__getitem__)  # ties to the severe end


def fit_cluster_gmms(clusters: ClusterModel, chars: np.ndarray,
                     indices: np.ndarray, *,
                     m_max: int = DEFAULT_M_MAX,
                     cfg: GmmFitConfig | None = None) -> TypicalScenarioSet:
    """Per-cluster GMM over globally standardized characteristics.

    Clusters below MIN_GMM_MEMBERS are forced to a single component;
    below d+1 members even EM is skipped for a direct moment fit. The
    cluster stability label (majority member label, ties severe) is
    recorded here for prediction-time use.
    """
    X = _check_matrix(chars, "characteristic matrix")
    n = clusters.n_scenarios
    if X.shape[0] != n:
        raise LengthMismatch("characteristic rows != clustered scenarios")
    labels = labels_from_indices(indices)
    if len(labels) != n:
        raise LengthMismatch("index rows != clustered scenarios")

    mean, std = _standardize_params(X)
    Z = (X - mean) / std
    d = Z.shape[1]
    gmms, cluster_labels = [], []
    for c in range(clusters.k):
        members = clusters.members(c)
        Zc = Z[members]
        if len(members) >= max(MIN_GMM_MEMBERS, d + 1):
            M = select_components(Zc, m_max, cfg)
            gmms.append(gmm_fit(Zc, M, cfg).model)
        elif len(members) >= d + 1:
            gmms.append(gmm_fit(Zc, 1, cfg).model)
        else:
            gmms.append(_moment_model(Zc))
        cluster_labels.append(_majority_label([labels[i] for i in members]))

    return TypicalScenarioSet(clusters=clusters, gmms=tuple(gmms),
                              labels=tuple(cluster_labels),
                              char_mean=mean, char_std=std)


def select_typical(ts: TypicalScenarioSet,
                   chars: np.ndarray) -> tuple[int, ...]:
    """Density-peak member of each cluster; exact ties go to the lowest id."""
    X = _check_matrix(chars, "characteristic matrix")
    if X.shape[0] != ts.clusters.n_scenarios:
        raise LengthMismatch("characteristic rows != clustered scenarios")
    Z = ts.standardize(X)
    ids = []
    for c in range(ts.clusters.k):
        members = ts.clusters.members(c)
        dens = np.asarray(gmm_density(ts.gmms[c], Z[members]))
        ids.append(int(members[int(np.argmax(dens))]))  # first max = lowest id
    return tuple(ids)


def coverage_rate(ts: TypicalScenarioSet, chars: np.ndarray,
                  threshold: float = COVERAGE_THRESHOLD) -> np.ndarray:
    """Fraction of all scenarios within `threshold` of each typical one.

    Distances live in the shared standardized characteristic space and
    are normalized by the max pairwise distance over the full set, so
    the threshold is dimensionless. A fully degenerate set (all vectors
    identical) counts as fully covered.
    """
    if not ts.fitted:
        raise UnfittedSet("select typical scenarios before computing coverage")
    X = _check_matrix(chars, "characteristic matrix")
    if X.shape[0] != ts.clusters.n_scenarios:
        raise LengthMismatch("characteristic rows != clustered scenarios")
    if threshold < 0.0:
        raise DimensionError("coverage threshold must be nonnegative")
    Z = ts.standardize(X)
    dmax = float(pdist(Z).max()) if Z.shape[0] > 1 else 0.0
    rates = np.empty(ts.clusters.k)
    for c, t in enumerate(ts.typical_ids):
        d = np.sqrt(np.sum((Z - Z[t]) ** 2, axis=1))
        if dmax <= 0.0:
            rates[c] = 1.0
        else:
            rates[c] = float(np.mean(d / dmax <= threshold))
    return rates


def typify(indices: np.ndarray, chars: np.ndarray, k: int | None = None, *,
           seed: int = 0, threshold: float = COVERAGE_THRESHOLD,
           m_max: int = DEFAULT_M_MAX,
           cfg: GmmFitConfig | None = None) -> TypicalScenarioSet:
    """Cluster, fit, select, and cover in one deterministic pass."""
    X = _check_matrix(indices, "index matrix")
    C = _check_matrix(chars, "characteristic matrix")
    if X.shape[0] != C.shape[0]:
        raise LengthMismatch("index rows != characteristic rows")
    clusters = cluster_scenarios(X, k, seed=seed)
    ts = fit_cluster_gmms(clusters, C, X, m_max=m_max, cfg=cfg)
    ts = replace(ts, typical_ids=select_typical(ts, C))
    cov = coverage_rate(ts, C, threshold)
    return replace(ts, coverage=tuple(float(r) for r in cov))


# --- Mahalanobis prediction ------------------------------------------------

def mahalanobis(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """sqrt((x-mu)' cov^-1 (x-mu)) via a Cholesky solve."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if x.shape != mean.shape or cov.shape != (x.shape[0], x.shape[0]):
        raise DimensionError("point/component shapes inconsistent")
    if not np.allclose(cov, cov.T, atol=1e-10 * max(1.0, np.abs(cov).max())):
        raise NonSPD("covariance matrix is not symmetric")
    try:
        factor = cho_factor(cov, lower=True)
    except LinAlgError as exc:
        raise NonSPD("covariance matrix is not positive definite") from exc
    y = solve_triangular(factor[0], x - mean, lower=True)
    return float(np.sqrt(y @ y))


def weighted_mahalanobis(x: np.ndarray, model: GmmModel) -> float:
    """Mixture-weight average of the per-component Mahalanobis distances."""
    return float(sum(
        w * mahalanobis(x, model.means[m], model.covariances[m])
        for m, w in enumerate(model.weights)))


@dataclass(frozen=True)
class Prediction:
    cluster: int
    label: str
    stage1: str  # "stable" | "unstable"
    stage2: str | None  # None when stable, else "voltage" | "coupled"
    distances: np.ndarray  # weighted Mahalanobis to each cluster


def predict_stability(x: np.ndarray, ts: TypicalScenarioSet) -> Prediction:
    """Assign x (raw characteristic vector) to the nearest cluster.

    Nearest = smallest weighted Mahalanobis distance to the cluster GMM
    in the set's standardized space; the cluster's recorded label yields
    the two stage labels.
    """
    if not ts.fitted:
        raise UnfittedSet("finalize the typical-scenario set before predicting")
    x = np.asarray(x, dtype=float)
    if x.shape != ts.char_mean.shape:
        raise DimensionError("characteristic vector length mismatch")
    if not np.all(np.isfinite(x)):
        raise NonFinite("characteristic vector contains non-finite entries")
    z = (x - ts.char_mean) / ts.char_std
    d = np.array([weighted_mahalanobis(z, g) for g in ts.gmms])
    c = int(np.argmin(d))
    label = ts.labels[c]
    stage1 = LABEL_STABLE if label == LABEL_STABLE else STAGE1_POSITIVE
    stage2 = None if label == LABEL_STABLE else label
    return Prediction(cluster=c, label=label, stage1=stage1, stage2=stage2,
                      distances=d)


def predict_batch(chars: np.ndarray,
                  ts: TypicalScenarioSet) -> tuple[Prediction, ...]:
    X = _check_matrix(chars, "characteristic matrix")
    return tuple(predict_stability(row, ts) for row in X)


# --- two-stage evaluation --------------------------------------------------

@dataclass(frozen=True)
class PredictionReport:
    predicted_labels: tuple[str, ...]
    true_labels: tuple[str, ...]
    predicted_clusters: tuple[int, ...] | None
    stage1_confusion: np.ndarray  # 2x2, rows=truth (neg,pos), cols=pred
    stage2_confusion: np.ndarray
    stage1_precision: float | None  # None marks a zero denominator
    stage1_recall: float | None
    stage2_precision: float | None
    stage2_recall: float | None

    def __post_init__(self):
        n = len(self.true_labels)
        if len(self.predicted_labels) != n:
            raise LengthMismatch("prediction/truth lengths differ")
        if self.predicted_clusters is not None and \
                len(self.predicted_clusters) != n:
            raise LengthMismatch("cluster/truth lengths differ")
        for conf in (self.stage1_confusion, self.stage2_confusion):
            c = np.asarray(conf, dtype=int)
            if c.shape != (2, 2) or c.sum() != n or np.any(c < 0):
                raise DimensionError("confusion counts must total n")
        for v in (self.stage1_precision, self.stage1_recall,
                  self.stage2_precision, self.stage2_recall):
            if v is not None and not 0.0 <= v <= 1.0:
                raise DimensionError("precision/recall must lie in [0, 1]")
        object.__setattr__(self, "stage1_confusion",
                           np.asarray(self.stage1_confusion, dtype=int))
        object.__setattr__(self, "stage2_confusion",
                           np.asarray(self.stage2_confusion, dtype=int))

    @property
    def n_scenarios(self) -> int:
        return len(self.true_labels)

    def summary(self) -> str:
        def pct(v):
            return "undefined" if v is None else f"{100.0 * v:.2f}%"

        rows = [
            ("stage", "positive", "precision", "recall"),
            ("1: stability", STAGE1_POSITIVE,
             pct(self.stage1_precision), pct(self.stage1_recall)),
            ("2: instability mode", STAGE2_POSITIVE,
             pct(self.stage2_precision), pct(self.stage2_recall)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
            for r in rows)


def _binary_metrics(pred_pos: np.ndarray, true_pos: np.ndarray):
    tp = int(np.sum(pred_pos & true_pos))
    fp = int(np.sum(pred_pos & ~true_pos))
    fn = int(np.sum(~pred_pos & true_pos))
    tn = int(np.sum(~pred_pos & ~true_pos))
    conf = np.array([[tn, fp], [fn, tp]])
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return conf, precision, recall


def evaluate_predictions(pred: Sequence, truth: Sequence[str]) -> PredictionReport:
    """Stage-wise precision/recall with unstable and coupled as positives.

    `pred` may hold Prediction objects or bare label strings; both
    stages are one-vs-rest over all scenarios, and any metric with an
    empty denominator is reported as None rather than NaN.
    """
    if len(pred) != len(truth):
        raise LengthMismatch("prediction/truth lengths differ")
    pred_labels = tuple(getattr(p, "label", p) for p in pred)
    clusters = tuple(p.cluster for p in pred) \
        if pred and all(hasattr(p, "cluster") for p in pred) else None
    for lab in (*pred_labels, *truth):
        if lab not in LABELS:
            raise DimensionError(f"unknown stability label {lab!r}")
    p = np.asarray(pred_labels)
    t = np.asarray(tuple(truth))
    c1, prec1, rec1 = _binary_metrics(p != LABEL_STABLE, t != LABEL_STABLE)
    c2, prec2, rec2 = _binary_metrics(p == LABEL_COUPLED, t == LABEL_COUPLED)
    return PredictionReport(
        predicted_labels=pred_labels, true_labels=tuple(truth),
        predicted_clusters=clusters,
        stage1_confusion=c1, stage2_confusion=c2,
        stage1_precision=prec1, stage1_recall=rec1,
        stage2_precision=prec2, stage2_recall=rec2)


# --- serialization ---------------------------------------------------------

def cluster_to_dict(model: ClusterModel) -> dict:
    return {
        "k": model.k,
        "assignments": model.assignments.tolist(),
        "centroids": model.centroids.tolist(),
        "index_mean": model.index_mean.tolist(),
        "index_std": model.index_std.tolist(),
        "silhouette": model.silhouette,
        "inertia": model.inertia,
    }


def cluster_from_dict(doc: dict) -> ClusterModel:
    return ClusterModel(
        k=int(doc["k"]),
        assignments=np.asarray(doc["assignments"], dtype=int),
        centroids=np.asarray(doc["centroids"], dtype=float),
        index_mean=np.asarray(doc["index_mean"], dtype=float),
        index_std=np.asarray(doc["index_std"], dtype=float),
        silhouette=float(doc["silhouette"]),
        inertia=float(doc["inertia"]))


def set_to_dict(ts: TypicalScenarioSet) -> dict:
    if not ts.fitted or ts.coverage is None:
        raise UnfittedSet("only finalized typical-scenario sets serialize")
    return {
        "schema_version": PIPELINE_SCHEMA_VERSION,
        "clusters": cluster_to_dict(ts.clusters),
        "gmms": [gmm_to_dict(g) for g in ts.gmms],
        "labels": list(ts.labels),
        "char_mean": ts.char_mean.tolist(),
        "char_std": ts.char_std.tolist(),
        "typical_ids": list(ts.typical_ids),
        "coverage": list(ts.coverage),
    }


def set_from_dict(doc: dict) -> TypicalScenarioSet:
    return TypicalScenarioSet(
        clusters=cluster_from_dict(doc["clusters"]),
        gmms=tuple(gmm_from_dict(g) for g in doc["gmms"]),
        labels=tuple(doc["labels"]),
        char_mean=np.asarray(doc["char_mean"], dtype=float),
        char_std=np.asarray(doc["char_std"], dtype=float),
        typical_ids=tuple(int(i) for i in doc["typical_ids"]),
        coverage=tuple(float(r) for r in doc["coverage"]))


def set_to_json(ts: TypicalScenarioSet) -> str:
    return json.dumps(set_to_dict(ts), indent=2)


def report_to_dict(report: PredictionReport) -> dict:
    return {
        "n_scenarios": report.n_scenarios,
        "predicted_labels": list(report.predicted_labels),
        "true_labels": list(report.true_labels),
        "predicted_clusters": None if report.predicted_clusters is None
        else list(report.predicted_clusters),
        "stage1": {
            "positive": STAGE1_POSITIVE,
            "confusion": report.stage1_confusion.tolist(),
            "precision": report.stage1_precision,
            "recall": report.stage1_recall,
        },
        "stage2": {
            "positive": STAGE2_POSITIVE,
            "confusion": report.stage2_confusion.tolist(),
            "precision": report.stage2_precision,
            "recall": report.stage2_recall,
        },
    }
