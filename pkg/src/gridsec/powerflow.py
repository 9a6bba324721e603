"""Newton-Raphson AC power flow and a stepwise load-scaling PV-curve tracer.

The solver works in polar coordinates on the full complex bus-admittance
matrix. Non-convergence is an outcome, not an exception: downstream
screening treats a diverged post-contingency solve as an Insecure label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError
from .model import BusKind, NetworkCase, reschedule_generation, scale_loads


@dataclass
class SolveOptions:
    tolerance: float = 1e-8  # per-unit power mismatch
    max_iter: int = 20
    enforce_q_limits: bool = True
    start: tuple | None = None  # optional (v_mag, v_ang) warm start
    trace_file: str | None = None  # per-iteration mismatch log


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray  # per-unit, by bus position
    v_ang: np.ndarray  # radians
    p_from: np.ndarray  # MW, by branch position (0 for out-of-service)
    q_from: np.ndarray  # MVar
    p_to: np.ndarray
    q_to: np.ndarray
    i_from: np.ndarray  # per-unit current magnitude at the from end
    i_to: np.ndarray
    p_inj: np.ndarray  # MW net injection per bus (gen - load)
    q_inj: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float  # per-unit
    q_limited: tuple = ()  # (bus position, pinned Q_gen pu) pairs
    diagnostic: str = ""

    def bus_voltage(self, case, bus_id):
        pos = case.bus_index()[bus_id]
        return self.v_mag[pos], self.v_ang[pos]


@dataclass
class PvCurve:
    points: list  # (load_scale, v_mag at the monitored bus), converged only
    nose_scale: float  # last converged multiplier
    monitored_bus: int


def build_ybus(case: NetworkCase) -> np.ndarray:
    """Dense complex bus-admittance matrix; standard pi model with the
    off-nominal tap on the from side."""
    n = len(case.buses)
    idx = case.bus_index()
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 1j * br.b_shunt / 2.0
        tap = br.tap
        y[f, f] += (ys + bc) / (tap * tap)
        y[t, t] += ys + bc
        y[f, t] += -ys / tap
        y[t, f] += -ys / tap
    return y


def _bus_arrays(case: NetworkCase):
    """Per-bus spec: complex injection (pu), kinds, setpoints, Q-gen bounds."""
    n = len(case.buses)
    idx = case.bus_index()
    p = np.zeros(n)
    q = np.zeros(n)
    qmin = np.zeros(n)
    qmax = np.zeros(n)
    has_gen = np.zeros(n, dtype=bool)
    for g in case.generators:
        if not g.in_service:
            continue
        i = idx[g.bus]
        p[i] += g.p_mw
        qmin[i] += g.q_min
        qmax[i] += g.q_max
        has_gen[i] = True
    p_load = np.zeros(n)
    q_load = np.zeros(n)
    for l in case.loads:
        i = idx[l.bus]
        p_load[i] += l.p_mw
        q_load[i] += l.q_mvar
    s_spec = ((p - p_load) + 1j * (0.0 - q_load)) / case.base_mva
    kinds = np.array([b.kind for b in case.buses], dtype=object)
    vset = np.array([b.v_setpoint if b.v_setpoint is not None else 1.0 for b in case.buses])
    return s_spec, kinds, vset, qmin / case.base_mva, qmax / case.base_mva, q_load / case.base_mva, has_gen


def calc_injections(ybus, v):
    """Complex bus power injections S = V conj(Y V) in per-unit."""
    return v * np.conj(ybus @ v)


def mismatch_vector(ybus, v, s_spec, pvpq, pq):
    """Stacked [dP at PV+PQ; dQ at PQ] for the current complex voltages."""
    ds = calc_injections(ybus, v) - s_spec
    return np.concatenate([ds[pvpq].real, ds[pq].imag])


def jacobian(ybus, v, pvpq, pq):
    """Analytic polar Jacobian of the mismatch vector."""
    ibus = ybus @ v
    diag_v = np.diag(v)
    diag_i = np.diag(ibus)
    diag_vn = np.diag(v / np.abs(v))
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    ds_dvm = diag_v @ np.conj(ybus @ diag_vn) + np.conj(diag_i) @ diag_vn
    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def _branch_flows(case, v):
    nb = len(case.branches)
    idx = case.bus_index()
    p_f = np.zeros(nb)
    q_f = np.zeros(nb)
    p_t = np.zeros(nb)
    q_t = np.zeros(nb)
    i_f = np.zeros(nb)
    i_t = np.zeros(nb)
    for k, br in enumerate(case.branches):
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 1j * br.b_shunt / 2.0
        tap = br.tap
        i_from = (ys + bc) / (tap * tap) * v[f] - ys / tap * v[t]
        i_to = (ys + bc) * v[t] - ys / tap * v[f]
        s_from = v[f] * np.conj(i_from) * case.base_mva
        s_to = v[t] * np.conj(i_to) * case.base_mva
        p_f[k], q_f[k] = s_from.real, s_from.imag
        p_t[k], q_t[k] = s_to.real, s_to.imag
        i_f[k] = abs(i_from)
        i_t[k] = abs(i_to)
    return p_f, q_f, p_t, q_t, i_f, i_t


def _finish(case, ybus, v, converged, iterations, max_mismatch, q_limited, diagnostic=""):
    s = calc_injections(ybus, v) * case.base_mva
    p_f, q_f, p_t, q_t, i_f, i_t = _branch_flows(case, v)
    return PowerFlowSolution(
        v_mag=np.abs(v),
        v_ang=np.angle(v),
        p_from=p_f, q_from=q_f, p_to=p_t, q_to=q_t,
        i_from=i_f, i_to=i_t,
        p_inj=s.real, q_inj=s.imag,
        converged=converged,
        iterations=iterations,
        max_mismatch=float(max_mismatch),
        q_limited=tuple(q_limited),
        diagnostic=diagnostic,
    )


def solve_powerflow(case: NetworkCase, options: SolveOptions | None = None) -> PowerFlowSolution:
    """Newton-Raphson solve with optional PV->PQ reactive-limit switching.

    Returns a solution object in all cases; check ``converged``. The slack
    bus keeps angle 0 and its setpoint magnitude throughout.
    """
    opts = options or SolveOptions()
    if opts.tolerance <= 0:
        raise ValueError("tolerance must be positive")
    ybus = build_ybus(case)
    s_spec, kinds, vset, qg_min, qg_max, q_load, has_gen = _bus_arrays(case)
    n = len(case.buses)

    kinds = kinds.copy()
    s_spec = s_spec.copy()
    if opts.start is not None:
        vm = np.array(opts.start[0], dtype=float).copy()
        va = np.array(opts.start[1], dtype=float).copy()
    else:
        vm = np.ones(n)
        va = np.zeros(n)
    pv_or_slack = [i for i in range(n) if kinds[i] is not BusKind.PQ]
    vm[pv_or_slack] = vset[pv_or_slack]
    slack = next(i for i in range(n) if kinds[i] is BusKind.SLACK)
    va = va - va[slack]

    q_limited = []
    trace_rows = []
    iterations = 0
    converged = False
    diagnostic = ""
    for iteration in range(opts.max_iter + 1):
        v = vm * np.exp(1j * va)
        pvpq = [i for i in range(n) if kinds[i] is not BusKind.SLACK]
        pq = [i for i in range(n) if kinds[i] is BusKind.PQ]

        if opts.enforce_q_limits and iteration >= 1:
            # One switch check per iteration: pin any PV bus whose generators
            # would have to exceed their reactive capability.
            s_calc = calc_injections(ybus, v)
            switched = False
            for i in range(n):
                if kinds[i] is not BusKind.PV or not has_gen[i]:
                    continue
                q_gen = s_calc[i].imag + q_load[i]
                if q_gen > qg_max[i] + 1e-9:
                    pinned = qg_max[i]
                elif q_gen < qg_min[i] - 1e-9:
                    pinned = qg_min[i]
                else:
                    continue
                kinds[i] = BusKind.PQ
                s_spec[i] = s_spec[i].real + 1j * (pinned - q_load[i])
                q_limited.append((i, pinned))
                switched = True
            if switched:
                pvpq = [i for i in range(n) if kinds[i] is not BusKind.SLACK]
                pq = [i for i in range(n) if kinds[i] is BusKind.PQ]

        f = mismatch_vector(ybus, v, s_spec, pvpq, pq)
        max_mis = float(np.max(np.abs(f))) if f.size else 0.0
        trace_rows.append((iteration, max_mis))
        if not np.isfinite(max_mis):
            diagnostic = "non-finite mismatch"
            break
        if max_mis <= opts.tolerance:
            converged = True
            iterations = iteration
            break
        if iteration == opts.max_iter:
            diagnostic = f"mismatch {max_mis:.3e} after {opts.max_iter} iterations"
            iterations = iteration
            break
        jac = jacobian(ybus, v, pvpq, pq)
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            diagnostic = "singular Jacobian"
            iterations = iteration
            break
        npvpq = len(pvpq)
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        iterations = iteration + 1

    if opts.trace_file:
        with open(opts.trace_file, "w", encoding="utf-8") as fh:
            fh.write("iteration,max_mismatch\n")
            for it, mis in trace_rows:
                fh.write(f"{it},{mis:.16e}\n")

    v = vm * np.exp(1j * va)
    last_mis = trace_rows[-1][1] if trace_rows else np.inf
    return _finish(case, ybus, v, converged, iterations, last_mis, q_limited, diagnostic)


def recompute_max_mismatch(case: NetworkCase, solution: PowerFlowSolution) -> float:
    """Independent mismatch recomputation from the returned voltages.

    Uses the solution's recorded effective bus types (Q-limited PV buses are
    PQ with the pinned reactive output).
    """
    ybus = build_ybus(case)
    s_spec, kinds, _, _, _, q_load, _ = _bus_arrays(case)
    kinds = kinds.copy()
    s_spec = s_spec.copy()
    for i, pinned in solution.q_limited:
        kinds[i] = BusKind.PQ
        s_spec[i] = s_spec[i].real + 1j * (pinned - q_load[i])
    n = len(case.buses)
    pvpq = [i for i in range(n) if kinds[i] is not BusKind.SLACK]
    pq = [i for i in range(n) if kinds[i] is BusKind.PQ]
    v = solution.v_mag * np.exp(1j * solution.v_ang)
    f = mismatch_vector(ybus, v, s_spec, pvpq, pq)
    return float(np.max(np.abs(f))) if f.size else 0.0


def total_losses_mw(solution: PowerFlowSolution) -> float:
    return float(np.sum(solution.p_from + solution.p_to))


def trace_pv_curve(
    case: NetworkCase,
    monitored_bus: int,
    step: float,
    options: SolveOptions | None = None,
    max_scale: float = 50.0,
) -> PvCurve:
    """Stepwise load-scaling PV curve at one bus.

    Loads are scaled uniformly by 1.0, 1.0+step, ...; the extra demand is
    rescheduled across non-slack generators capacity-proportionally (slack
    absorbs anything beyond their limits). Tracing stops at the first
    non-converged solve; that previous multiplier is the nose.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    opts = options or SolveOptions()
    pos = case.bus_index()[monitored_bus]
    base_p, _ = case.total_load()
    points = []
    warm = None
    scale = 1.0
    while scale <= max_scale + 1e-12:
        scaled = scale_loads(case, scale)
        scaled = reschedule_generation(scaled, (scale - 1.0) * base_p, strict=False)
        step_opts = SolveOptions(
            tolerance=opts.tolerance,
            max_iter=opts.max_iter,
            enforce_q_limits=opts.enforce_q_limits,
            start=warm,
        )
        sol = solve_powerflow(scaled, step_opts)
        if not sol.converged:
            break
        points.append((scale, float(sol.v_mag[pos])))
        warm = (sol.v_mag, sol.v_ang)
        scale = round(scale + step, 12)
    if not points:
        raise InfeasibleError("base case infeasible")
    return PvCurve(points=points, nose_scale=points[-1][0], monitored_bus=monitored_bus)
