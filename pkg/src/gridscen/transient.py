"""Classical-model multi-machine transient simulation and stability indices.

Synchronous machines are constant EMFs behind transient reactance with
swing dynamics, loads become constant admittances at the power-flow
point, renewables and HVDC terminals become constant current injections.
The network is reduced to the machine internal nodes once per topology
phase (pre-fault / faulted / post-clear), so each integration step costs
one small dense matrix-vector product; bus voltages are recovered from
the same algebraic network.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError, InvalidModel, SingularNetwork, SkippedScenario,
)
from .network import (
    NetworkModel, PowerFlowSolution, apply_overrides, build_ybus,
)
from .scenarios import ScenarioSample

FAULT_ADMITTANCE = 1e6 + 0j  # bolted three-phase shunt, p.u.
BLOWUP_LIMIT = 100.0  # p.u. speed deviation; beyond this the trace truncates
VOLTAGE_THRESHOLD = 0.8  # p.u. recovery criterion for severity integral

# worst-case sentinel indices for scenarios whose power flow failed
SENTINEL_V_SEVERITY = 8.0
SENTINEL_TSI = -1.0
SENTINEL_ROCOF = 99.0


@dataclass(frozen=True)
class FaultSpec:
    """Permanent N-1: three-phase fault at the from-bus end of a branch,
    cleared after clearing_time by removing the branch."""
    from_bus: int
    to_bus: int
    t_fault: float = 1.0
    clearing_time: float = 0.1

    def __post_init__(self):
        if self.clearing_time <= 0.0:
            raise InvalidModel("fault clearing time must be positive")
        if self.t_fault < 0.0:
            raise InvalidModel("fault apply time must be nonnegative")


@dataclass(frozen=True)
class TransientConfig:
    h: float = 0.005  # s
    horizon: float = 10.0  # s
    f_nominal: float = 50.0  # Hz

    def __post_init__(self):
        if self.h <= 0.0 or self.horizon <= self.h:
            raise ConfigError("need 0 < h < horizon")
        if self.f_nominal <= 0.0:
            raise ConfigError("nominal frequency must be positive")


@dataclass(frozen=True)
class TransientTrace:
    t: np.ndarray  # uniform grid, s
    delta: np.ndarray  # n_steps x n_machine rotor angles, rad
    omega: np.ndarray  # n_steps x n_machine speed deviations, p.u.
    vm: np.ndarray  # n_steps x n_bus voltage magnitudes, p.u.
    freq: np.ndarray  # COI frequency, Hz
    machine_gens: tuple[int, ...]  # generator positions of the machines
    t_fault: float | None  # None for a no-fault run
    blown_up: bool = False

    def __post_init__(self):
        nt = len(self.t)
        if not (len(self.delta) == len(self.omega) == len(self.vm)
                == len(self.freq) == nt):
            raise InvalidModel("trace arrays disagree on step count")
        if nt >= 2:
            dt = np.diff(self.t)
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
                raise InvalidModel("trace time grid is not uniform")

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class StabilityIndices:
    v_severity: float  # p.u.*s, >= 0
    tsi: float  # (-1, 1]
    rocof: float  # Hz/s, >= 0
    pf_converged: bool

    def __post_init__(self):
        vals = (self.v_severity, self.tsi, self.rocof)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidModel("stability indices must be finite")
        if self.v_severity < 0.0 or self.rocof < 0.0:
            raise InvalidModel("v_severity and rocof must be nonnegative")
        if not -1.0 <= self.tsi <= 1.0:
            raise InvalidModel("tsi out of (-1, 1]")

    def as_row(self) -> list[float]:
        return [self.v_severity, self.tsi, self.rocof,
                float(self.pf_converged)]


SENTINEL_INDICES = StabilityIndices(
    v_severity=SENTINEL_V_SEVERITY, tsi=SENTINEL_TSI,
    rocof=SENTINEL_ROCOF, pf_converged=False)

INDEX_COLUMNS = ("v_severity", "tsi", "rocof", "pf_converged")


@dataclass(frozen=True)
class _PhaseNetwork:
    """Affine map from machine EMF phasors to bus voltages, one topology."""
    v_of_e: np.ndarray  # n_bus x n_machine
    v_fixed: np.ndarray  # n_bus
    term_of_e: np.ndarray  # n_machine x n_machine rows at machine terminals
    term_fixed: np.ndarray  # n_machine


@dataclass(frozen=True)
class ClassicalModel:
    machine_gens: tuple[int, ...]
    machine_buses: np.ndarray  # bus positions
    inertia: np.ndarray  # H on system base, s
    y_gen: np.ndarray  # complex 1/(j x'd)
    emf: np.ndarray  # |E'| p.u.
    delta0: np.ndarray  # rad
    p_mech: np.ndarray = field(default=None)  # set to P_e(delta0)
    phases: dict = field(default_factory=dict)  # "pre" | "fault" | "post"

    def electrical_power(self, phase: str, delta: np.ndarray) -> np.ndarray:
        ph: _PhaseNetwork = self.phases[phase]
        e = self.emf * np.exp(1j * delta)
        vt = ph.term_of_e @ e + ph.term_fixed
        ig = self.y_gen * (e - vt)
        return (e * np.conj(ig)).real

    def bus_voltages(self, phase: str, delta: np.ndarray) -> np.ndarray:
        ph: _PhaseNetwork = self.phases[phase]
        e = self.emf * np.exp(1j * delta)
        return np.abs(ph.v_of_e @ e + ph.v_fixed)


def _find_branch(net: NetworkModel, fault: FaultSpec) -> int:
    for bi, br in enumerate(net.branches):
        if (br.in_service and br.from_bus == fault.from_bus
                and br.to_bus == fault.to_bus):
            return bi
    raise InvalidModel(
        f"no in-service branch {fault.from_bus}-{fault.to_bus} to fault")


def _connected_without(net: NetworkModel, skip: int) -> bool:
    adj: dict[int, set[int]] = {b.id: set() for b in net.buses}
    for bi, br in enumerate(net.branches):
        if br.in_service and bi != skip:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    seen = {net.buses[0].id}
    stack = [net.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == net.n_bus


def _phase_network(y_eff: np.ndarray, machine_pos: np.ndarray,
                   y_gen: np.ndarray, i_fixed: np.ndarray) -> _PhaseNetwork:
    n = y_eff.shape[0]
    rhs = np.zeros((n, len(machine_pos) + 1), dtype=complex)
    rhs[machine_pos, np.arange(len(machine_pos))] = y_gen
    rhs[:, -1] = i_fixed
    try:
        sol = np.linalg.solve(y_eff, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularNetwork(f"transient network is singular: {exc}")
    if not np.all(np.isfinite(sol)):
        raise SingularNetwork("transient network solve produced non-finite "
                              "voltages")
    v_of_e = sol[:, :-1]
    v_fixed = sol[:, -1]
    return _PhaseNetwork(v_of_e=v_of_e, v_fixed=v_fixed,
                         term_of_e=v_of_e[machine_pos],
                         term_fixed=v_fixed[machine_pos])


def prepare_classical_model(net: NetworkModel, pf: PowerFlowSolution,
                            fault: FaultSpec | None) -> ClassicalModel:
    """Initialize machine internals from a converged power flow and build
    the algebraic network for each topology phase."""
    if not pf.converged:
        raise SkippedScenario("power flow did not converge")
    index = net.bus_index()
    v0 = pf.vm * np.exp(1j * pf.va)

    gens = []
    for gi, g in enumerate(net.generators):
        if g.kind != "synchronous":
            continue
        if g.inertia <= 0.0 or g.xd_prime is None or g.xd_prime <= 0.0:
            raise InvalidModel(
                f"synchronous generator {gi} needs positive inertia and "
                "xd_prime for transient simulation")
        gens.append(gi)
    if not gens:
        raise InvalidModel("no synchronous machines to simulate")
    machine_pos = np.array([index[net.generators[gi].bus] for gi in gens])
    h_sys = np.array([net.generators[gi].inertia
                      * net.generators[gi].p_max / net.base_mva
                      for gi in gens])
    if np.any(h_sys <= 0.0):
        raise InvalidModel("machine inertia vanishes on the system base")
    y_gen = np.array([1.0 / (1j * net.generators[gi].xd_prime)
                      for gi in gens])

    # internal EMFs from the power-flow operating point
    s_mach = (pf.gen_p[gens] + 1j * pf.gen_q[gens]) / net.base_mva
    vt0 = v0[machine_pos]
    i0 = np.conj(s_mach) / np.conj(vt0)
    e0 = vt0 + i0 / y_gen
    emf = np.abs(e0)
    delta0 = np.angle(e0)

    # constant-impedance loads and constant-current converter injections
    y_load = np.zeros(net.n_bus, dtype=complex)
    for ld in net.loads:
        bi = index[ld.bus]
        s = complex(ld.p, ld.q) / net.base_mva
        y_load[bi] += np.conj(s) / (pf.vm[bi] ** 2)
    i_fixed = np.zeros(net.n_bus, dtype=complex)
    for gi, g in enumerate(net.generators):
        if g.kind == "synchronous":
            continue
        bi = index[g.bus]
        s = (pf.gen_p[gi] + 1j * pf.gen_q[gi]) / net.base_mva
        i_fixed[bi] += np.conj(s) / np.conj(v0[bi])
    if net.hvdc is not None:
        bi = index[net.hvdc.bus]
        s = -net.hvdc.p_delivered / net.base_mva
        i_fixed[bi] += np.conj(s) / np.conj(v0[bi])

    def assemble(y_net):
        y = y_net.copy()
        y[np.diag_indices_from(y)] += y_load
        y[machine_pos, machine_pos] += y_gen
        return y

    y_pre = assemble(build_ybus(net))
    phases = {"pre": _phase_network(y_pre, machine_pos, y_gen, i_fixed)}
    if fault is not None:
        br = _find_branch(net, fault)
        if not _connected_without(net, br):
            raise InvalidModel("clearing the fault would island the network")
        y_flt = y_pre.copy()
        fb = index[fault.from_bus]
        y_flt[fb, fb] += FAULT_ADMITTANCE
        phases["fault"] = _phase_network(y_flt, machine_pos, y_gen, i_fixed)
        y_post = assemble(build_ybus(net, skip_branch=br))
        phases["post"] = _phase_network(y_post, machine_pos, y_gen, i_fixed)

    model = ClassicalModel(machine_gens=tuple(gens),
                           machine_buses=machine_pos, inertia=h_sys,
                           y_gen=y_gen, emf=emf, delta0=delta0,
                           phases=phases)
    # mechanical power balances the pre-fault electrical power exactly, so
    # the no-fault trajectory is a fixed point of the integrator
    object.__setattr__(model, "p_mech",
                       model.electrical_power("pre", delta0))
    return model


def simulate_network(net: NetworkModel, pf: PowerFlowSolution,
                     fault: FaultSpec | None,
                     cfg: TransientConfig | None = None,
                     perturb_delta: np.ndarray | None = None,
                     perturb_omega: np.ndarray | None = None) -> TransientTrace:
    """RK4 integration of the swing equations on a fixed grid.

    perturb_delta / perturb_omega offset the initial state, which is the
    way to exercise free oscillations without a fault.
    """
    cfg = cfg or TransientConfig()
    model = prepare_classical_model(net, pf, fault)
    m = len(model.machine_gens)
    omega_s = 2.0 * np.pi * cfg.f_nominal

    if fault is None:
        t_on, t_off = np.inf, np.inf
    else:
        t_on = fault.t_fault
        t_off = fault.t_fault + fault.clearing_time

    def phase_of(t: float) -> str:
        if t < t_on:
            return "pre"
        if t < t_off:
            return "fault"
        return "post"

    def deriv(phase, delta, omega):
        pe = model.electrical_power(phase, delta)
        return omega * omega_s, (model.p_mech - pe) / (2.0 * model.inertia)

    n_steps = int(round(cfg.horizon / cfg.h)) + 1
    t_grid = np.arange(n_steps) * cfg.h
    delta = model.delta0.copy()
    omega = np.zeros(m)
    if perturb_delta is not None:
        delta = delta + np.asarray(perturb_delta, dtype=float)
    if perturb_omega is not None:
        omega = omega + np.asarray(perturb_omega, dtype=float)

    deltas = np.empty((n_steps, m))
    omegas = np.empty((n_steps, m))
    vms = np.empty((n_steps, net.n_bus))
    deltas[0], omegas[0] = delta, omega
    vms[0] = model.bus_voltages(phase_of(0.0), delta)
    blown = False
    last = n_steps - 1
    h = cfg.h
    for k in range(1, n_steps):
        # one topology per step, decided by the step start; fault and
        # clearing switches land between steps when aligned to the grid
        ph = phase_of(t_grid[k - 1])
        kd1, ko1 = deriv(ph, delta, omega)
        kd2, ko2 = deriv(ph, delta + h / 2 * kd1, omega + h / 2 * ko1)
        kd3, ko3 = deriv(ph, delta + h / 2 * kd2, omega + h / 2 * ko2)
        kd4, ko4 = deriv(ph, delta + h * kd3, omega + h * ko3)
        delta = delta + h / 6 * (kd1 + 2 * kd2 + 2 * kd3 + kd4)
        omega = omega + h / 6 * (ko1 + 2 * ko2 + 2 * ko3 + ko4)
        deltas[k], omegas[k] = delta, omega
        vms[k] = model.bus_voltages(phase_of(t_grid[k]), delta)
        if np.max(np.abs(omega)) > BLOWUP_LIMIT:
            blown = True
            last = k
            break

    n_kept = last + 1
    h_total = model.inertia.sum()
    freq = cfg.f_nominal * (1.0 + omegas[:n_kept] @ model.inertia / h_total)
    return TransientTrace(t=t_grid[:n_kept], delta=deltas[:n_kept],
                          omega=omegas[:n_kept], vm=vms[:n_kept], freq=freq,
                          machine_gens=model.machine_gens,
                          t_fault=None if fault is None else fault.t_fault,
                          blown_up=blown)


def simulate_transient(scenario: ScenarioSample, net: NetworkModel,
                       fault: FaultSpec | None,
                       cfg: TransientConfig | None = None) -> TransientTrace:
    """Simulate one generated scenario on its own dispatch and topology."""
    if not scenario.pf.converged:
        raise SkippedScenario(
            f"scenario {scenario.id}: power flow did not converge")
    net2 = apply_overrides(net, scenario.overrides)
    return simulate_network(net2, scenario.pf, fault, cfg)


# --- indices ---------------------------------------------------------------

def voltage_severity(trace: TransientTrace, load_buses: np.ndarray,
                     window: float = 10.0,
                     aggregate: str = "max") -> float:
    """Integral of the voltage sag below 0.8 p.u. after the fault.

    Per load bus, trapezoidal integral of max(0, 0.8 - V(t)) over
    [t_fault, t_fault + window] truncated at the trace horizon; aggregated
    over load buses with max (default) or sum.
    """
    if aggregate not in ("max", "sum"):
        raise ConfigError("aggregate must be 'max' or 'sum'")
    load_buses = np.asarray(load_buses, dtype=int)
    if load_buses.size == 0:
        return 0.0
    start = trace.t_fault if trace.t_fault is not None else 0.0
    mask = (trace.t >= start - 1e-12) & (trace.t <= start + window + 1e-12)
    if mask.sum() < 2:
        return 0.0
    sag = np.maximum(0.0, VOLTAGE_THRESHOLD - trace.vm[mask][:, load_buses])
    areas = np.trapezoid(sag, trace.t[mask], axis=0)
    return float(areas.max() if aggregate == "max" else areas.sum())


def tsi(trace: TransientTrace) -> float:
    """Transient stability index (pi - d)/(pi + d) from the maximum
    pairwise rotor-angle separation d over the trace, in radians."""
    m = trace.delta.shape[1]
    if m < 2:
        warnings.warn("single synchronous machine: TSI fixed at 1.0")
        return 1.0
    unwrapped = np.unwrap(trace.delta, axis=0)
    sep = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            sep = max(sep, float(np.max(np.abs(unwrapped[:, i]
                                               - unwrapped[:, j]))))
    return (np.pi - sep) / (np.pi + sep)


def rocof(trace: TransientTrace, window: float = 0.5) -> float:
    """Max sliding-window |df/dt| of COI frequency after the fault, Hz/s."""
    if window <= 0.0:
        raise ConfigError("rocof window must be positive")
    k = int(round(window / trace.h))
    if k < 1:
        raise ConfigError("rocof window is shorter than the time step")
    start = trace.t_fault if trace.t_fault is not None else 0.0
    f = trace.freq
    n = len(f)
    if n <= k:
        return 0.0
    i0 = int(np.searchsorted(trace.t, start - 1e-12))
    diffs = np.abs(f[i0 + k:] - f[i0:n - k])
    if diffs.size == 0:
        return 0.0
    return float(diffs.max() / (k * trace.h))


def trace_indices(trace: TransientTrace, net: NetworkModel,
                  severity_aggregate: str = "max") -> StabilityIndices:
    """Bundle the three indices of a converged-scenario trace."""
    index = net.bus_index()
    load_buses = np.array(sorted({index[ld.bus] for ld in net.loads}),
                          dtype=int)
    return StabilityIndices(
        v_severity=voltage_severity(trace, load_buses,
                                    aggregate=severity_aggregate),
        tsi=tsi(trace),
        rocof=rocof(trace),
        pf_converged=True)


def scenario_indices(scenario: ScenarioSample, net: NetworkModel,
                     fault: FaultSpec | None,
                     cfg: TransientConfig | None = None) -> StabilityIndices:
    """Simulate one scenario; non-converged power flows get the sentinel."""
    if not scenario.pf.converged:
        return SENTINEL_INDICES
    net2 = apply_overrides(net, scenario.overrides)
    trace = simulate_network(net2, scenario.pf, fault, cfg)
    return trace_indices(trace, net2)


def _batch_worker(args) -> StabilityIndices:
    scenario, net, fault, cfg = args
    return scenario_indices(scenario, net, fault, cfg)


def default_workers() -> int:
    """Worker count from GRIDSCEN_WORKERS, default 1 (serial)."""
    raw = os.environ.get("GRIDSCEN_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"GRIDSCEN_WORKERS={raw!r} is not an integer")
    if workers < 1:
        raise ConfigError("GRIDSCEN_WORKERS must be >= 1")
    return workers


def run_batch(scenarios: list[ScenarioSample], net: NetworkModel,
              fault: FaultSpec | None, cfg: TransientConfig | None = None,
              workers: int | None = None) -> list[StabilityIndices]:
    """Indices for every scenario, in input order; sentinels for skipped.

    Scenario simulations are independent; workers > 1 fans them out over
    a process pool.
    """
    workers = default_workers() if workers is None else workers
    jobs = [(s, net, fault, cfg) for s in scenarios]
    if workers == 1 or len(jobs) <= 1:
        return [_batch_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_batch_worker, jobs,
                             chunksize=max(1, len(jobs) // (4 * workers))))
