"""Network data model, impedance/distance matrices and AC power flow.

Buses, branches, generators, loads and an optional HVDC export are read
from a JSON document (see ``load_network``).  All electrical values are in
per-unit on the system MVA base except generator/load powers, which are in
MW / MVAr.  Conventions:

* renewable generators enter the power flow as fixed PQ injections,
  synchronous generators make their bus a PV bus (except the slack);
* the HVDC link is a constant-P negative injection at its sending bus;
* generator transient reactance ``xd_prime`` is on the system base, the
  inertia constant ``inertia`` (s, i.e. MW.s/MVA) is on the machine base
  with the machine rating taken as ``p_max``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidModel, SingularNetwork

NETWORK_SCHEMA_VERSION = 1

# Ybus rows of a network without any shunt path to ground sum to zero and
# the matrix is singular; a small grounding admittance at the slack fixes
# the reference.  The electrical distance is insensitive to its value
# because its double difference Zii + Zjj - Zij - Zji cancels the
# common offset.
GROUNDING_ADMITTANCE = 1e-6
CONDITION_LIMIT = 1e12

PF_TOLERANCE = 1e-8
PF_MAX_ITER = 50


@dataclass(frozen=True)
class Bus:
    id: int
    base_kv: float
    type: str  # "slack" | "PV" | "PQ"
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0  # total line charging susceptance
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    kind: str  # "synchronous" | "renewable"
    p_set: float  # MW
    q_set: float = 0.0  # MVAr (dispatch; fixed for renewables)
    inertia: float = 0.0  # s on machine base; 0 for renewables
    xd_prime: float | None = None  # p.u. system base, synchronous only
    p_max: float = 0.0  # MW, used as the machine MVA rating
    v_set: float = 1.0  # p.u. voltage setpoint for PV/slack buses


@dataclass(frozen=True)
class Load:
    bus: int
    p: float  # MW
    q: float  # MVAr


@dataclass(frozen=True)
class Hvdc:
    bus: int
    p_delivered: float  # MW exported from the AC network


@dataclass(frozen=True)
class NetworkModel:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    hvdc: Hvdc | None = None

    def __post_init__(self):
        validate_network(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.type == "slack")

    def synchronous_generators(self) -> list[tuple[int, Generator]]:
        return [(i, g) for i, g in enumerate(self.generators) if g.kind == "synchronous"]

    def renewable_generators(self) -> list[tuple[int, Generator]]:
        return [(i, g) for i, g in enumerate(self.generators) if g.kind == "renewable"]


def validate_network(net: NetworkModel) -> None:
    """Check the structural invariants; raise InvalidModel on violation."""
    ids = [b.id for b in net.buses]
    if len(ids) != len(set(ids)):
        raise InvalidModel("duplicate bus ids")
    if net.base_mva <= 0:
        raise InvalidModel("base_mva must be positive")
    known = set(ids)
    types = [b.type for b in net.buses]
    for t in types:
        if t not in ("slack", "PV", "PQ"):
            raise InvalidModel(f"unknown bus type {t!r}")
    if types.count("slack") != 1:
        raise InvalidModel("exactly one slack bus required")
    for br in net.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise InvalidModel(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
        if abs(complex(br.r, br.x)) <= 0.0:
            raise InvalidModel(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
    for g in net.generators:
        if g.bus not in known:
            raise InvalidModel(f"generator at unknown bus {g.bus}")
        if g.kind not in ("synchronous", "renewable"):
            raise InvalidModel(f"unknown generator kind {g.kind!r}")
        if g.inertia < 0:
            raise InvalidModel("negative inertia")
        if g.kind == "synchronous" and g.inertia <= 0:
            raise InvalidModel("synchronous generator requires inertia > 0")
        if g.kind == "renewable" and g.inertia != 0:
            raise InvalidModel("renewable generator must have zero inertia")
    for ld in net.loads:
        if ld.bus not in known:
            raise InvalidModel(f"load at unknown bus {ld.bus}")
    if net.hvdc is not None and net.hvdc.bus not in known:
        raise InvalidModel(f"hvdc at unknown bus {net.hvdc.bus}")
    _check_connected(net)


def _check_connected(net: NetworkModel) -> None:
    # Islanded networks are rejected rather than guessing a per-island
    # impedance reference.
    n = net.n_bus
    if n == 0:
        raise InvalidModel("empty network")
    index = net.bus_index()
    adj: list[list[int]] = [[] for _ in range(n)]
    for br in net.branches:
        if not br.in_service:
            continue
        a, b = index[br.from_bus], index[br.to_bus]
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != n:
        raise InvalidModel("network is not connected")


# --- JSON interface --------------------------------------------------------

def network_to_dict(net: NetworkModel) -> dict:
    doc: dict = {
        "schema_version": NETWORK_SCHEMA_VERSION,
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "base_kv": b.base_kv, "type": b.type,
             "shunt_g": b.shunt_g, "shunt_b": b.shunt_b}
            for b in net.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
             "b": br.b, "in_service": br.in_service}
            for br in net.branches
        ],
        "generators": [
            {"bus": g.bus, "kind": g.kind, "p_set": g.p_set, "q_set": g.q_set,
             "inertia": g.inertia, "xd_prime": g.xd_prime, "p_max": g.p_max,
             "v_set": g.v_set}
            for g in net.generators
        ],
        "loads": [{"bus": ld.bus, "p": ld.p, "q": ld.q} for ld in net.loads],
    }
    if net.hvdc is not None:
        doc["hvdc"] = {"bus": net.hvdc.bus, "p_delivered": net.hvdc.p_delivered}
    return doc


def network_from_dict(doc: dict) -> NetworkModel:
    try:
        buses = tuple(
            Bus(id=int(b["id"]), base_kv=float(b["base_kv"]), type=str(b["type"]),
                shunt_g=float(b.get("shunt_g", 0.0)), shunt_b=float(b.get("shunt_b", 0.0)))
            for b in doc["buses"]
        )
        branches = tuple(
            Branch(from_bus=int(br["from"]), to_bus=int(br["to"]),
                   r=float(br["r"]), x=float(br["x"]), b=float(br.get("b", 0.0)),
                   in_service=bool(br.get("in_service", True)))
            for br in doc["branches"]
        )
        generators = tuple(
            Generator(bus=int(g["bus"]), kind=str(g["kind"]),
                      p_set=float(g["p_set"]), q_set=float(g.get("q_set", 0.0)),
                      inertia=float(g.get("inertia", 0.0)),
                      xd_prime=(None if g.get("xd_prime") is None else float(g["xd_prime"])),
                      p_max=float(g.get("p_max", 0.0)),
                      v_set=float(g.get("v_set", 1.0)))
            for g in doc["generators"]
        )
        loads = tuple(
            Load(bus=int(ld["bus"]), p=float(ld["p"]), q=float(ld["q"]))
            for ld in doc["loads"]
        )
        hvdc = None
        if doc.get("hvdc"):
            hvdc = Hvdc(bus=int(doc["hvdc"]["bus"]),
                        p_delivered=float(doc["hvdc"]["p_delivered"]))
        return NetworkModel(base_mva=float(doc["base_mva"]), buses=buses,
                            branches=branches, generators=generators,
                            loads=loads, hvdc=hvdc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed network document: {exc}") from exc


def load_network(path: str | Path) -> NetworkModel:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def bundled_data_path(name: str) -> Path:
    """Path of a JSON document shipped with the package (e.g. "case9")."""
    return Path(__file__).parent / "data" / f"{name}.json"


def bundled_network(name: str) -> NetworkModel:
    return load_network(bundled_data_path(name))


def save_network(net: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n")


# --- admittance / impedance ------------------------------------------------

def build_ybus(net: NetworkModel, skip_branch: int | None = None) -> np.ndarray:
    """Dense complex bus admittance matrix including shunts and charging.

    skip_branch omits one branch by position, for post-outage topologies
    that a validated model cannot represent directly.
    """
    n = net.n_bus
    index = net.bus_index()
    Y = np.zeros((n, n), dtype=complex)
    for bi, br in enumerate(net.branches):
        if not br.in_service or bi == skip_branch:
            continue
        a, b = index[br.from_bus], index[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        yc = 1j * br.b / 2.0
        Y[a, a] += ys + yc
        Y[b, b] += ys + yc
        Y[a, b] -= ys
        Y[b, a] -= ys
    for i, bus in enumerate(net.buses):
        Y[i, i] += complex(bus.shunt_g, bus.shunt_b)
    return Y


def _has_ground_path(net: NetworkModel) -> bool:
    if any(b.shunt_g != 0.0 or b.shunt_b != 0.0 for b in net.buses):
        return True
    return any(br.b != 0.0 for br in net.branches if br.in_service)


def build_impedance_matrix(net: NetworkModel) -> np.ndarray:
    """Bus impedance matrix Z = inv(Ybus), grounded at the slack if needed."""
    Y = build_ybus(net)
    if not _has_ground_path(net):
        slack = net.bus_index()[net.slack_bus]
        Y[slack, slack] += GROUNDING_ADMITTANCE
    if np.linalg.cond(Y) > CONDITION_LIMIT:
        raise SingularNetwork(
            f"Ybus condition number exceeds {CONDITION_LIMIT:g} after grounding")
    Z = np.linalg.inv(Y)
    return Z


def electrical_distance(Z: np.ndarray) -> np.ndarray:
    """Electrical distance D_ab = |Z_aa + Z_bb - Z_ba - Z_ab|."""
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise InvalidModel("impedance matrix must be square")
    diag = np.diag(Z)
    D = np.abs(diag[:, None] + diag[None, :] - Z - Z.T)
    np.fill_diagonal(D, 0.0)
    return D


# --- power flow ------------------------------------------------------------

@dataclass(frozen=True)
class DispatchOverrides:
    """Per-element setpoint overrides applied before a power-flow solve.

    Keys are positional indices into the corresponding NetworkModel list.
    """
    gen_p: dict[int, float] = field(default_factory=dict)  # MW
    gen_q: dict[int, float] = field(default_factory=dict)  # MVAr
    load_p: dict[int, float] = field(default_factory=dict)  # MW
    load_q: dict[int, float] = field(default_factory=dict)  # MVAr
    hvdc_p: float | None = None  # MW

    def to_dict(self) -> dict:
        return {
            "gen_p": {str(k): v for k, v in sorted(self.gen_p.items())},
            "gen_q": {str(k): v for k, v in sorted(self.gen_q.items())},
            "load_p": {str(k): v for k, v in sorted(self.load_p.items())},
            "load_q": {str(k): v for k, v in sorted(self.load_q.items())},
            "hvdc_p": self.hvdc_p,
        }

    @staticmethod
    def from_dict(doc: dict) -> "DispatchOverrides":
        return DispatchOverrides(
            gen_p={int(k): float(v) for k, v in doc.get("gen_p", {}).items()},
            gen_q={int(k): float(v) for k, v in doc.get("gen_q", {}).items()},
            load_p={int(k): float(v) for k, v in doc.get("load_p", {}).items()},
            load_q={int(k): float(v) for k, v in doc.get("load_q", {}).items()},
            hvdc_p=(None if doc.get("hvdc_p") is None else float(doc["hvdc_p"])),
        )


def apply_overrides(net: NetworkModel, overrides: DispatchOverrides | None) -> NetworkModel:
    """Realized network with override setpoints substituted."""
    if overrides is None:
        return net
    gens = list(net.generators)
    for i, p in overrides.gen_p.items():
        gens[i] = replace(gens[i], p_set=p)
    for i, q in overrides.gen_q.items():
        gens[i] = replace(gens[i], q_set=q)
    loads = list(net.loads)
    for i, p in overrides.load_p.items():
        loads[i] = replace(loads[i], p=p)
    for i, q in overrides.load_q.items():
        loads[i] = replace(loads[i], q=q)
    hvdc = net.hvdc
    if overrides.hvdc_p is not None:
        if hvdc is None:
            raise InvalidModel("hvdc override on a network without an HVDC link")
        hvdc = Hvdc(bus=hvdc.bus, p_delivered=overrides.hvdc_p)
    return replace(net, generators=tuple(gens), loads=tuple(loads), hvdc=hvdc)


@dataclass(frozen=True)
class PowerFlowSolution:
    vm: np.ndarray  # p.u. magnitudes, bus order
    va: np.ndarray  # radians, slack at 0
    gen_q: np.ndarray  # MVAr per generator (solution for synchronous, dispatch for renewable)
    gen_p: np.ndarray  # MW per generator (slack picks up the residual)
    converged: bool
    iterations: int
    max_mismatch: float  # p.u.

    def to_dict(self) -> dict:
        return {
            "vm": self.vm.tolist(),
            "va": self.va.tolist(),
            "gen_q": self.gen_q.tolist(),
            "gen_p": self.gen_p.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "max_mismatch": self.max_mismatch,
        }

    @staticmethod
    def from_dict(doc: dict) -> "PowerFlowSolution":
        return PowerFlowSolution(
            vm=np.asarray(doc["vm"], dtype=float),
            va=np.asarray(doc["va"], dtype=float),
            gen_q=np.asarray(doc["gen_q"], dtype=float),
            gen_p=np.asarray(doc["gen_p"], dtype=float),
            converged=bool(doc["converged"]),
            iterations=int(doc["iterations"]),
            max_mismatch=float(doc["max_mismatch"]),
        )


def _bus_arrays(net: NetworkModel):
    """Scheduled injections (p.u.) and effective bus classification."""
    n = net.n_bus
    index = net.bus_index()
    p_sched = np.zeros(n)
    q_sched = np.zeros(n)
    vset = np.ones(n)
    for g in net.generators:
        i = index[g.bus]
        p_sched[i] += g.p_set / net.base_mva
        q_sched[i] += g.q_set / net.base_mva
        if g.kind == "synchronous":
            vset[i] = g.v_set
    for ld in net.loads:
        i = index[ld.bus]
        p_sched[i] -= ld.p / net.base_mva
        q_sched[i] -= ld.q / net.base_mva
    if net.hvdc is not None:
        p_sched[index[net.hvdc.bus]] -= net.hvdc.p_delivered / net.base_mva

    has_sync = np.zeros(n, dtype=bool)
    for g in net.generators:
        if g.kind == "synchronous":
            has_sync[index[g.bus]] = True
    slack = index[net.slack_bus]
    types = np.array([b.type for b in net.buses])
    # A bus declared PV without any synchronous unit has nothing to hold
    # its voltage; it is solved as PQ.
    is_pv = (types == "PV") & has_sync
    is_pv[slack] = False
    return p_sched, q_sched, vset, slack, is_pv


def solve_power_flow(net: NetworkModel,
                     overrides: DispatchOverrides | None = None,
                     tol: float = PF_TOLERANCE,
                     max_iter: int = PF_MAX_ITER) -> PowerFlowSolution:
    """Newton-Raphson AC power flow in polar coordinates.

    Non-convergence is recorded in the solution, not raised: an
    unsolvable operating point is valid scenario data.
    """
    net = apply_overrides(net, overrides)
    n = net.n_bus
    Y = build_ybus(net)
    G, B = Y.real, Y.imag
    p_sched, q_sched, vset, slack, is_pv = _bus_arrays(net)

    pv = np.flatnonzero(is_pv)
    pq = np.flatnonzero(~is_pv & (np.arange(n) != slack))
    pvpq = np.concatenate([pv, pq])

    vm = np.ones(n)
    va = np.zeros(n)
    vm[pv] = vset[pv]
    vm[slack] = vset[slack]

    converged = False
    iterations = 0
    max_mismatch = np.inf
    for iterations in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        dp = p_sched[pvpq] - S.real[pvpq]
        dq = q_sched[pq] - S.imag[pq]
        mism = np.concatenate([dp, dq])
        if mism.size == 0:
            converged = True
            max_mismatch = 0.0
            break
        max_mismatch = float(np.max(np.abs(mism)))
        if not np.isfinite(max_mismatch):
            break
        if max_mismatch <= tol:
            converged = True
            break
        if iterations == max_iter:
            break
        J = _jacobian(G, B, vm, va, pvpq, pq)
        try:
            dx = np.linalg.solve(J, mism)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)):
            break
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]

    gen_p, gen_q = _allocate_generation(net, Y, vm, va, slack)
    return PowerFlowSolution(vm=vm, va=va, gen_q=gen_q, gen_p=gen_p,
                             converged=converged, iterations=iterations,
                             max_mismatch=max_mismatch)


def _jacobian(G, B, vm, va, pvpq, pq):
    """Standard polar power-flow Jacobian [[dP/dθ, dP/dV], [dQ/dθ, dQ/dV]]."""
    n = len(vm)
    V = vm * np.exp(1j * va)
    Y = G + 1j * B
    I = Y @ V
    S = V * np.conj(I)
    # dS/dθ and dS/dVm for all bus pairs
    dS_dth = 1j * np.diag(V) @ np.conj(np.diag(I) - Y @ np.diag(V))
    dS_dvm = np.diag(V) @ np.conj(Y @ np.diag(np.exp(1j * va))) + \
        np.diag(np.conj(I) * np.exp(1j * va))
    npv = len(pvpq)
    J = np.empty((npv + len(pq), npv + len(pq)))
    J[:npv, :npv] = dS_dth.real[np.ix_(pvpq, pvpq)]
    J[:npv, npv:] = dS_dvm.real[np.ix_(pvpq, pq)]
    J[npv:, :npv] = dS_dth.imag[np.ix_(pq, pvpq)]
    J[npv:, npv:] = dS_dvm.imag[np.ix_(pq, pq)]
    return J


def _allocate_generation(net, Y, vm, va, slack):
    """Split solved bus-level generation among the units at each bus.

    Reactive output at PV/slack buses and slack active power are shared
    among the synchronous units in proportion to p_max (equal split when
    all ratings are zero).  Renewables keep their dispatch setpoints.
    """
    n = net.n_bus
    index = net.bus_index()
    V = vm * np.exp(1j * va)
    S = V * np.conj(Y @ V) * net.base_mva  # MW / MVAr net injection
    load_p = np.zeros(n)
    load_q = np.zeros(n)
    for ld in net.loads:
        load_p[index[ld.bus]] += ld.p
        load_q[index[ld.bus]] += ld.q
    if net.hvdc is not None:
        load_p[index[net.hvdc.bus]] += net.hvdc.p_delivered

    gen_p = np.array([g.p_set for g in net.generators], dtype=float)
    gen_q = np.array([g.q_set for g in net.generators], dtype=float)

    sync_at_bus: dict[int, list[int]] = {}
    for gi, g in enumerate(net.generators):
        if g.kind == "synchronous":
            sync_at_bus.setdefault(index[g.bus], []).append(gi)

    for bi, gis in sync_at_bus.items():
        q_total = S.imag[bi] + load_q[bi]
        q_renew = sum(net.generators[gi].q_set for gi, g in
                      enumerate(net.generators)
                      if g.kind == "renewable" and index[g.bus] == bi)
        q_sync = q_total - q_renew
        weights = np.array([max(net.generators[gi].p_max, 0.0) for gi in gis])
        if weights.sum() <= 0:
            weights = np.ones(len(gis))
        weights = weights / weights.sum()
        for w, gi in zip(weights, gis):
            gen_q[gi] = w * q_sync
        if bi == slack:
            p_total = S.real[bi] + load_p[bi]
            p_renew = sum(g.p_set for g in net.generators
                          if g.kind == "renewable" and index[g.bus] == bi)
            p_sync = p_total - p_renew
            for w, gi in zip(weights, gis):
                gen_p[gi] = w * p_sync
    return gen_p, gen_q


def power_flow_residual(net: NetworkModel, sol: PowerFlowSolution,
                        overrides: DispatchOverrides | None = None) -> float:
    """Max scheduled-vs-computed injection mismatch (p.u.) at a solution."""
    net = apply_overrides(net, overrides)
    Y = build_ybus(net)
    p_sched, q_sched, _, slack, is_pv = _bus_arrays(net)
    n = net.n_bus
    pv = np.flatnonzero(is_pv)
    pq = np.flatnonzero(~is_pv & (np.arange(n) != slack))
    V = sol.vm * np.exp(1j * sol.va)
    S = V * np.conj(Y @ V)
    pvpq = np.concatenate([pv, pq])
    dp = p_sched[pvpq] - S.real[pvpq]
    dq = q_sched[pq] - S.imag[pq]
    if len(dp) + len(dq) == 0:
        return 0.0
    return float(np.max(np.abs(np.concatenate([dp, dq]))))


def branch_loading(net: NetworkModel, sol: PowerFlowSolution) -> np.ndarray:
    """Apparent power (MVA) at the from end of each branch."""
    index = net.bus_index()
    V = sol.vm * np.exp(1j * sol.va)
    out = np.zeros(len(net.branches))
    for k, br in enumerate(net.branches):
        if not br.in_service:
            continue
        a, b = index[br.from_bus], index[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        yc = 1j * br.b / 2.0
        i_from = ys * (V[a] - V[b]) + yc * V[a]
        out[k] = abs(V[a] * np.conj(i_from)) * net.base_mva
    return out


def heaviest_loaded_branch(net: NetworkModel, sol: PowerFlowSolution) -> Branch:
    """Most heavily loaded in-service branch whose outage keeps the
    network connected (the natural N-1 fault candidate)."""
    loading = branch_loading(net, sol)
    order = np.argsort(-loading)
    for k in order:
        br = net.branches[k]
        if not br.in_service:
            continue
        reduced = [replace(b, in_service=False) if i == k else b
                   for i, b in enumerate(net.branches)]
        try:
            replace(net, branches=tuple(reduced))
        except InvalidModel:
            continue
        return br
    raise InvalidModel("no branch can be removed without islanding the network")
