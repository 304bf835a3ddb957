"""Raster fields on the 2-D electrical coordinate plane and the derived
system-level characteristic vector.

Nodal quantities are deposited onto a G x G grid with a Gaussian kernel
whose width is measured in cells, so the fields (and everything computed
from them) are invariant to uniform rescaling of the coordinates.  Two
field comparisons are provided: an infinity-norm of the unit-mass
normalized difference, and a global single-window SSIM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import Embedding
from .errors import DimensionError, GridMismatch, NonFinite, SkippedScenario
from .network import NetworkModel, PowerFlowSolution

KERNEL_TRUNCATION = 4.0  # in standard deviations

FIELD_TAGS = ("P_G", "P_L", "Q_G", "Q_L", "P_re", "P_sync", "J")

# fixed column order of the characteristic vector
CHARACTERISTIC_COLUMNS = (
    "pg_pl_norm", "pg_pl_ssim",
    "qg_ql_norm", "qg_ql_ssim",
    "pre_qg_ssim",
    "j_pl_ssim",
    "psync_pre_norm", "psync_pre_ssim",
)


@dataclass(frozen=True)
class RasterField:
    grid: np.ndarray  # (G, G); [ix, iy] indexing
    bbox: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    resolution: int
    tag: str


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    # dynamic range; None = max cell value across the two fields
    dynamic_range: float | None = None


@dataclass(frozen=True)
class RasterConfig:
    resolution: int = 32
    bandwidth_factor: float = 1.5
    bbox: tuple[float, float, float, float] | None = None
    ssim: SsimParams = field(default_factory=SsimParams)


def _coords(embedding) -> np.ndarray:
    X = embedding.X if isinstance(embedding, Embedding) else np.asarray(embedding, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DimensionError("rasterization needs at least 2 embedding columns")
    return X[:, :2]


def bounding_box(embedding, padding: float = 0.05) -> tuple[float, float, float, float]:
    """Coordinate extents padded by a fraction of the span per axis."""
    X = _coords(embedding)
    out = []
    for axis in range(2):
        lo = float(np.min(X[:, axis]))
        hi = float(np.max(X[:, axis]))
        span = hi - lo
        if span == 0.0:
            lo, hi = lo - 0.5, hi + 0.5
        else:
            lo, hi = lo - padding * span, hi + padding * span
        out.extend((lo, hi))
    return tuple(out)


def rasterize(embedding, values, resolution: int = 32,
              bandwidth_factor: float = 1.5,
              bbox: tuple[float, float, float, float] | None = None,
              tag: str = "") -> RasterField:
    """Deposit per-node values onto the grid with a Gaussian kernel.

    The kernel standard deviation is bandwidth_factor cells, truncated at
    4 sigma and renormalized per node, so total grid mass equals the sum
    of the nodal values exactly.
    """
    X = _coords(embedding)
    vals = np.asarray(values, dtype=float)
    if vals.shape != (X.shape[0],):
        raise DimensionError("one nodal value per embedded node required")
    if not np.all(np.isfinite(vals)):
        raise NonFinite("nodal values must be finite")
    G = int(resolution)
    if G < 4:
        raise DimensionError("grid resolution must be at least 4")
    if bandwidth_factor <= 0:
        raise DimensionError("bandwidth factor must be positive")
    if bbox is None:
        bbox = bounding_box(X)
    xmin, xmax, ymin, ymax = bbox
    wx = (xmax - xmin) / G
    wy = (ymax - ymin) / G
    if wx <= 0 or wy <= 0:
        raise DimensionError("bounding box has non-positive extent")

    grid = np.zeros((G, G))
    sigma = bandwidth_factor
    reach = KERNEL_TRUNCATION * sigma
    centers = np.arange(G) + 0.5
    for (x, y), v in zip(X, vals):
        if v == 0.0:
            continue
        u = (x - xmin) / wx  # continuous cell coordinates
        w = (y - ymin) / wy
        i0 = max(int(np.floor(u - reach)), 0)
        i1 = min(int(np.ceil(u + reach)) + 1, G)
        j0 = max(int(np.floor(w - reach)), 0)
        j1 = min(int(np.ceil(w + reach)) + 1, G)
        if i0 >= i1 or j0 >= j1:
            i0 = i1 = j0 = j1 = 0  # handled by the zero-mass fallback
        du = centers[i0:i1] - u
        dv = centers[j0:j1] - w
        r2 = du[:, None] ** 2 + dv[None, :] ** 2
        kernel = np.where(np.sqrt(r2) <= reach,
                          np.exp(-r2 / (2.0 * sigma * sigma)), 0.0)
        total = kernel.sum()
        if total <= 0.0:
            # kernel underflowed or node outside the box: nearest cell
            ci = min(max(int(np.floor(u)), 0), G - 1)
            cj = min(max(int(np.floor(w)), 0), G - 1)
            grid[ci, cj] += v
        else:
            grid[i0:i1, j0:j1] += v * kernel / total
    return RasterField(grid=grid, bbox=tuple(float(b) for b in bbox),
                       resolution=G, tag=tag)


def _check_pair(a: RasterField, b: RasterField) -> None:
    if a.resolution != b.resolution or a.grid.shape != b.grid.shape:
        raise GridMismatch("raster resolutions differ")
    if a.bbox != b.bbox:
        raise GridMismatch("raster bounding boxes differ")


def _unit_mass(grid: np.ndarray) -> np.ndarray:
    total = grid.sum()
    if total == 0.0:
        return np.zeros_like(grid)
    return grid / total


def norm_matching(a: RasterField, b: RasterField) -> float:
    """Max-abs-cell difference of the unit-mass normalized fields."""
    _check_pair(a, b)
    diff = _unit_mass(a.grid) - _unit_mass(b.grid)
    return float(np.max(np.abs(diff), initial=0.0))


def ssim(a: RasterField, b: RasterField, params: SsimParams | None = None) -> float:
    """Global single-window structural similarity of the two fields."""
    _check_pair(a, b)
    params = params or SsimParams()
    g1 = a.grid.ravel()
    g2 = b.grid.ravel()
    L = params.dynamic_range
    if L is None:
        L = max(float(g1.max(initial=0.0)), float(g2.max(initial=0.0)))
    if L <= 0.0:
        L = 1.0
    c1 = (params.k1 * L) ** 2
    c2 = (params.k2 * L) ** 2
    mu1 = g1.mean()
    mu2 = g2.mean()
    var1 = np.mean((g1 - mu1) ** 2)
    var2 = np.mean((g2 - mu2) ** 2)
    cov = np.mean((g1 - mu1) * (g2 - mu2))
    return float(((2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2))
                 / ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)))


# --- nodal quantity extraction --------------------------------------------

def nodal_quantities(net: NetworkModel, pf: PowerFlowSolution | None,
                     use_dispatch_fallback: bool = False) -> dict[str, np.ndarray]:
    """Per-bus arrays (MW / MVAr / s) for the seven raster quantities.

    Reactive generation comes from the power-flow solution; with
    ``use_dispatch_fallback`` the dispatch setpoints stand in (for
    non-converged scenarios).  Q_L excludes bus shunt compensation.
    """
    n = net.n_bus
    index = net.bus_index()
    out = {tag: np.zeros(n) for tag in FIELD_TAGS}
    solved = pf is not None and pf.converged and not use_dispatch_fallback
    for gi, g in enumerate(net.generators):
        i = index[g.bus]
        p = pf.gen_p[gi] if solved else g.p_set
        q = pf.gen_q[gi] if solved else g.q_set
        out["P_G"][i] += p
        out["Q_G"][i] += q
        if g.kind == "renewable":
            out["P_re"][i] += p
        else:
            out["P_sync"][i] += p
            out["J"][i] += g.inertia * g.p_max / net.base_mva
    for ld in net.loads:
        i = index[ld.bus]
        out["P_L"][i] += ld.p
        out["Q_L"][i] += ld.q
    if net.hvdc is not None:
        out["P_L"][index[net.hvdc.bus]] += net.hvdc.p_delivered
    return out


def raster_fields(net: NetworkModel, pf: PowerFlowSolution | None, embedding,
                  cfg: RasterConfig | None = None,
                  use_dispatch_fallback: bool = False) -> dict[str, RasterField]:
    cfg = cfg or RasterConfig()
    bbox = cfg.bbox if cfg.bbox is not None else bounding_box(embedding)
    quantities = nodal_quantities(net, pf, use_dispatch_fallback)
    return {
        tag: rasterize(embedding, quantities[tag], cfg.resolution,
                       cfg.bandwidth_factor, bbox=bbox, tag=tag)
        for tag in FIELD_TAGS
    }


def compute_characteristics(net: NetworkModel, pf: PowerFlowSolution,
                            embedding, cfg: RasterConfig | None = None,
                            allow_dispatch_fallback: bool = False) -> np.ndarray:
    """The 8-entry characteristic vector (CHARACTERISTIC_COLUMNS order).

    Raises SkippedScenario for a non-converged power flow unless the
    dispatch-setpoint fallback is explicitly allowed.
    """
    cfg = cfg or RasterConfig()
    fallback = False
    if pf is None or not pf.converged:
        if not allow_dispatch_fallback:
            raise SkippedScenario("power flow did not converge")
        fallback = True
    f = raster_fields(net, pf, embedding, cfg, use_dispatch_fallback=fallback)
    p = cfg.ssim
    return np.array([
        norm_matching(f["P_G"], f["P_L"]),
        ssim(f["P_G"], f["P_L"], p),
        norm_matching(f["Q_G"], f["Q_L"]),
        ssim(f["Q_G"], f["Q_L"], p),
        ssim(f["P_re"], f["Q_G"], p),
        ssim(f["J"], f["P_L"], p),
        norm_matching(f["P_sync"], f["P_re"]),
        ssim(f["P_sync"], f["P_re"], p),
    ])
