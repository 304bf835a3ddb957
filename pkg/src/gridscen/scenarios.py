"""Uncertainty parameters and batch scenario generation.

A scenario is one realization of the uncertain operating parameters
(renewable penetration, load scale, HVDC transfer) mapped to dispatch
overrides and solved as a power flow.  Parameter vectors come from two
pooled sources: samples of a mixture model over the parameter space, and
an orthogonal-array design mapped to bound-interior quantiles (one run
per array row; the design size is fixed by the level/factor geometry).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import levels_to_quantiles, orthogonal_array
from .errors import InvalidSpec
from .gmm import GmmModel, gmm_from_dict, gmm_sample, gmm_to_dict
from .network import (
    DispatchOverrides, NetworkModel, PowerFlowSolution, solve_power_flow,
)

SPEC_SCHEMA_VERSION = 1

PARAMETER_ROLES = (
    "renewable_penetration",  # fraction of scaled active load served by renewables
    "active_load_scale",
    "reactive_load_scale",
    "hvdc_power",  # MW delivered
)


@dataclass(frozen=True)
class UncertaintyParameter:
    name: str
    role: str
    lower: float
    upper: float
    # positional indices of the affected generators/loads; None = all of
    # the role's natural targets
    targets: tuple[int, ...] | None = None


@dataclass(frozen=True)
class UncertaintySpec:
    parameters: tuple[UncertaintyParameter, ...]
    parameter_gmm: GmmModel | None = None

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if not names:
            raise InvalidSpec("at least one parameter required")
        if len(names) != len(set(names)):
            raise InvalidSpec("parameter names must be unique")
        roles = [p.role for p in self.parameters]
        if len(roles) != len(set(roles)):
            raise InvalidSpec("one parameter per role")
        for p in self.parameters:
            if p.role not in PARAMETER_ROLES:
                raise InvalidSpec(f"unknown parameter role {p.role!r}")
            if not (np.isfinite(p.lower) and np.isfinite(p.upper)):
                raise InvalidSpec(f"{p.name}: bounds must be finite")
            if not p.lower < p.upper:
                raise InvalidSpec(f"{p.name}: lower bound must be below upper")
        if self.parameter_gmm is not None and \
                self.parameter_gmm.dimension != len(self.parameters):
            raise InvalidSpec("parameter mixture dimension does not match")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    def bounds(self) -> np.ndarray:
        return np.array([[p.lower, p.upper] for p in self.parameters])

    def role_index(self) -> dict[str, int]:
        return {p.role: i for i, p in enumerate(self.parameters)}


@dataclass(frozen=True)
class ScenarioSample:
    id: int
    params: np.ndarray
    overrides: DispatchOverrides
    pf: PowerFlowSolution
    provenance: str  # "gmm" | "orthogonal"
    clipped: bool = False


# --- JSON interface --------------------------------------------------------

def spec_to_dict(spec: UncertaintySpec) -> dict:
    doc: dict = {
        "schema_version": SPEC_SCHEMA_VERSION,
        "parameters": [
            {"name": p.name, "role": p.role, "lower": p.lower,
             "upper": p.upper,
             "targets": None if p.targets is None else list(p.targets)}
            for p in spec.parameters
        ],
    }
    if spec.parameter_gmm is not None:
        doc["parameter_gmm"] = gmm_to_dict(spec.parameter_gmm)
    return doc


def spec_from_dict(doc: dict) -> UncertaintySpec:
    try:
        params = tuple(
            UncertaintyParameter(
                name=str(p["name"]), role=str(p["role"]),
                lower=float(p["lower"]), upper=float(p["upper"]),
                targets=(None if p.get("targets") is None
                         else tuple(int(t) for t in p["targets"])))
            for p in doc["parameters"]
        )
        gmm = None
        if doc.get("parameter_gmm"):
            gmm = gmm_from_dict(doc["parameter_gmm"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed uncertainty spec: {exc}") from exc
    return UncertaintySpec(parameters=params, parameter_gmm=gmm)


def load_spec(path: str | Path) -> UncertaintySpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec: UncertaintySpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


# --- parameter-to-overrides mapping ---------------------------------------

def params_to_overrides(spec: UncertaintySpec, net: NetworkModel,
                        values: np.ndarray) -> DispatchOverrides:
    """Dispatch overrides realizing one parameter vector.

    Load scales multiply the base P/Q per load.  Renewable penetration is
    the fraction of scaled active load served by renewables, split over
    units by base setpoint (capacity when all setpoints are zero) and
    capped at each unit's p_max.  Non-slack synchronous units scale so
    scheduled generation keeps tracking load + export; the slack absorbs
    the remainder.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (len(spec.parameters),):
        raise InvalidSpec("parameter vector length does not match spec")
    roles = spec.role_index()

    load_ids = list(range(len(net.loads)))
    renew_ids = [i for i, g in net.renewable_generators()]
    sync_ids = [i for i, g in net.synchronous_generators()]
    slack_bus = net.slack_bus

    def targeted(role, default_ids):
        i = roles.get(role)
        if i is None:
            return None, default_ids
        t = spec.parameters[i].targets
        return values[i], (default_ids if t is None else list(t))

    gen_p: dict[int, float] = {}
    load_p: dict[int, float] = {}
    load_q: dict[int, float] = {}
    hvdc_p = None

    a_scale, a_targets = targeted("active_load_scale", load_ids)
    if a_scale is not None:
        for li in a_targets:
            load_p[li] = net.loads[li].p * a_scale
    q_scale, q_targets = targeted("reactive_load_scale", load_ids)
    if q_scale is not None:
        for li in q_targets:
            load_q[li] = net.loads[li].q * q_scale

    if "hvdc_power" in roles:
        if net.hvdc is None:
            raise InvalidSpec("hvdc_power parameter on a network without HVDC")
        hvdc_p = float(values[roles["hvdc_power"]])

    total_load = sum(load_p.get(li, net.loads[li].p) for li in load_ids)
    hvdc_now = hvdc_p if hvdc_p is not None else \
        (net.hvdc.p_delivered if net.hvdc is not None else 0.0)

    pen, pen_targets = targeted("renewable_penetration", renew_ids)
    if pen is not None:
        target_total = pen * total_load
        weights = np.array([net.generators[gi].p_set for gi in pen_targets])
        if weights.sum() <= 0:
            weights = np.array([net.generators[gi].p_max for gi in pen_targets])
        if weights.sum() <= 0:
            weights = np.ones(len(pen_targets))
        weights = weights / weights.sum()
        for w, gi in zip(weights, pen_targets):
            cap = net.generators[gi].p_max
            p = w * target_total
            gen_p[gi] = min(p, cap) if cap > 0 else p
        # rescale the non-slack synchronous fleet to keep scheduled
        # generation tracking the demand change
        renew_now = sum(gen_p.get(gi, net.generators[gi].p_set)
                        for gi in renew_ids)
        base_load = sum(ld.p for ld in net.loads)
        base_hvdc = net.hvdc.p_delivered if net.hvdc is not None else 0.0
        base_renew = sum(net.generators[gi].p_set for gi in renew_ids)
        base_sync = sum(net.generators[gi].p_set for gi in sync_ids
                        if net.generators[gi].bus != slack_bus)
        need = total_load + hvdc_now - renew_now
        base_need = base_load + base_hvdc - base_renew
        if base_sync > 0 and base_need > 0:
            factor = max(need / base_need, 0.0)
            for gi in sync_ids:
                if net.generators[gi].bus != slack_bus:
                    gen_p[gi] = net.generators[gi].p_set * factor

    return DispatchOverrides(gen_p=gen_p, load_p=load_p, load_q=load_q,
                             hvdc_p=hvdc_p)


def clip_to_bounds(spec: UncertaintySpec,
                   params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip parameter rows into the spec bounds; flags mark changed rows."""
    bounds = spec.bounds()
    clipped = np.clip(params, bounds[:, 0], bounds[:, 1])
    flags = np.any(clipped != params, axis=1)
    return clipped, flags


def materialize_scenarios(spec: UncertaintySpec, params: np.ndarray,
                          net: NetworkModel, provenance: str = "gmm",
                          start_id: int = 0,
                          clipped_flags: np.ndarray | None = None) -> list[ScenarioSample]:
    """Solve one power flow per parameter row; nothing is dropped."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[1] != len(spec.parameters):
        raise InvalidSpec("parameter matrix width does not match spec")
    if clipped_flags is None:
        clipped_flags = np.zeros(len(params), dtype=bool)
    out = []
    for row, (vec, was_clipped) in enumerate(zip(params, clipped_flags)):
        overrides = params_to_overrides(spec, net, vec)
        pf = solve_power_flow(net, overrides)
        out.append(ScenarioSample(id=start_id + row, params=vec.copy(),
                                  overrides=overrides, pf=pf,
                                  provenance=provenance,
                                  clipped=bool(was_clipped)))
    return out


def orthogonal_parameters(spec: UncertaintySpec, levels: int) -> np.ndarray:
    """Design matrix mapped to bound-interior quantiles (i + 0.5)/s."""
    A = orthogonal_array(levels, len(spec.parameters))
    Q = levels_to_quantiles(A, levels)
    bounds = spec.bounds()
    return bounds[:, 0] + Q * (bounds[:, 1] - bounds[:, 0])


def generate_scenarios(spec: UncertaintySpec, net: NetworkModel,
                       n_gmm: int, levels: int = 3,
                       seed: int = 0) -> list[ScenarioSample]:
    """Pooled scenario set: one orthogonal-array pass plus n_gmm samples.

    The array contributes its full run count (quantized by the design);
    mixture samples are clipped to bounds and flagged when that happens.
    """
    scenarios: list[ScenarioSample] = []
    if levels >= 2:
        ortho = orthogonal_parameters(spec, levels)
        scenarios.extend(materialize_scenarios(
            spec, ortho, net, provenance="orthogonal"))
    if n_gmm > 0:
        if spec.parameter_gmm is None:
            raise InvalidSpec("mixture sampling requested without a parameter_gmm")
        raw = gmm_sample(spec.parameter_gmm, n_gmm, seed=seed)
        params, flags = clip_to_bounds(spec, raw)
        scenarios.extend(materialize_scenarios(
            spec, params, net, provenance="gmm",
            start_id=len(scenarios), clipped_flags=flags))
    return scenarios
