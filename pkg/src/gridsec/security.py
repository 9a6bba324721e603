"""Voltage performance index, configuration categorization, and N-1 screening.

A configuration is one branch outage. Configurations whose voltage
performance index stays at or below 0.1 are negligible; above that they are
split by flow impact: under 200 MW of worst-branch active-flow change they
are topology changes (TCs, folded into the operating condition itself), at
200 MW or more they are critical system contingencies (CSCs) that decide the
Secure/Insecure label.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import GridSecError, IslandingError
from .model import NetworkCase, apply_outage
from .powerflow import PowerFlowSolution, SolveOptions, solve_powerflow

PIV_THRESHOLD = 0.1
TC_FLOW_DELTA_MW = 200.0


class Category(enum.Enum):
    NEGLIGIBLE = "Negligible"
    TC = "TC"
    CSC = "CSC"


class Label(enum.Enum):
    SECURE = "Secure"
    INSECURE = "Insecure"


@dataclass(frozen=True)
class PivConfig:
    weights: float | tuple = 1.0  # scalar or per-bus
    exponent: int = 1  # n; the index uses power 2n
    dv_limit: float | tuple = 0.05  # acceptable per-bus deviation, per-unit

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError("exponent must be >= 1")
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("weights must be non-negative")
        if np.any(np.asarray(self.dv_limit) <= 0):
            raise ValueError("dv_limit must be positive")


@dataclass(frozen=True)
class OperatingLimits:
    v_min: float = 0.90
    v_max: float = 1.10
    loading_limit: float = 1.0  # fraction of branch mva_rating

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")


@dataclass(frozen=True)
class Violation:
    kind: str  # low-voltage | high-voltage | overload
    element: str  # "bus 7" or a branch label
    value: float
    limit: float


@dataclass
class ConfigurationAssessment:
    configuration: str  # branch outage label
    pi_v: float
    max_flow_delta_mw: float
    category: Category


@dataclass
class ContingencyResult:
    contingency: str
    converged: bool
    islanded: bool
    violations: tuple
    secure: bool


@dataclass
class ScreenResult:
    label: Label
    details: list  # ContingencyResult per contingency, in list order
    first_failure: str | None = None


def _check_solutions(pre, post):
    if not pre.converged or not post.converged:
        raise GridSecError("performance index needs converged pre and post solutions")
    if pre.v_mag.shape != post.v_mag.shape:
        raise GridSecError("pre and post solutions have different bus counts")


def compute_piv(pre: PowerFlowSolution, post: PowerFlowSolution, cfg: PivConfig | None = None) -> float:
    """Weighted even-power sum of post-vs-pre voltage deviations.

    Each bus contributes (w/2n) * (dV / dV_lim)^(2n).
    """
    cfg = cfg or PivConfig()
    _check_solutions(pre, post)
    n_bus = pre.v_mag.shape[0]
    w = np.broadcast_to(np.asarray(cfg.weights, dtype=float), (n_bus,))
    dv_lim = np.broadcast_to(np.asarray(cfg.dv_limit, dtype=float), (n_bus,))
    ratio = (post.v_mag - pre.v_mag) / dv_lim
    return float(np.sum(w / (2 * cfg.exponent) * ratio ** (2 * cfg.exponent)))


def max_flow_delta_mw(pre: PowerFlowSolution, post: PowerFlowSolution, post_case: NetworkCase) -> float:
    """Largest per-branch |active flow change| in MW, over branches still in
    service after the configuration change."""
    in_service = np.array([br.in_service for br in post_case.branches])
    delta = np.abs(post.p_from - pre.p_from)
    return float(np.max(delta[in_service])) if in_service.any() else 0.0


def categorize(pi_v: float, flow_delta_mw: float) -> Category:
    """Pure decision rule on (PI_V, flow delta); boundary at PI_V == 0.1 is
    Negligible, at exactly 200 MW is CSC."""
    if pi_v <= PIV_THRESHOLD:
        return Category.NEGLIGIBLE
    if flow_delta_mw < TC_FLOW_DELTA_MW:
        return Category.TC
    return Category.CSC


def classify_configuration(
    pre: PowerFlowSolution,
    post: PowerFlowSolution,
    post_case: NetworkCase,
    configuration: str,
    cfg: PivConfig | None = None,
) -> ConfigurationAssessment:
    pi_v = compute_piv(pre, post, cfg)
    delta = max_flow_delta_mw(pre, post, post_case)
    return ConfigurationAssessment(
        configuration=configuration,
        pi_v=pi_v,
        max_flow_delta_mw=delta,
        category=categorize(pi_v, delta),
    )


def check_limits(
    solution: PowerFlowSolution,
    case: NetworkCase,
    limits: OperatingLimits | None = None,
) -> list:
    """All bus-voltage and branch-loading violations; empty means secure."""
    limits = limits or OperatingLimits()
    if not solution.converged:
        raise GridSecError("limit check needs a converged solution")
    violations = []
    for pos, bus in enumerate(case.buses):
        vm = float(solution.v_mag[pos])
        if vm < limits.v_min:
            violations.append(Violation("low-voltage", f"bus {bus.id}", vm, limits.v_min))
        elif vm > limits.v_max:
            violations.append(Violation("high-voltage", f"bus {bus.id}", vm, limits.v_max))
    for k, br in enumerate(case.branches):
        if not br.in_service:
            continue
        s_from = float(np.hypot(solution.p_from[k], solution.q_from[k]))
        s_to = float(np.hypot(solution.p_to[k], solution.q_to[k]))
        loading = max(s_from, s_to) / br.mva_rating
        if loading > limits.loading_limit:
            violations.append(
                Violation("overload", f"branch {br.label()}", loading, limits.loading_limit)
            )
    return violations


def run_contingency_screen(
    case: NetworkCase,
    csc_list,
    limits: OperatingLimits | None = None,
    options: SolveOptions | None = None,
) -> ScreenResult:
    """Label one operating condition against a list of branch outages.

    Secure iff every contingency converges with no limit violations.
    Islanding outages are Insecure without a solve attempt. A listed branch
    that is already out of service in this OC's topology is skipped.
    """
    csc_list = list(csc_list)
    if not csc_list:
        raise GridSecError("no contingencies configured")
    limits = limits or OperatingLimits()
    details = []
    first_failure = None
    for spec in csc_list:
        name = spec if isinstance(spec, str) else case.branches[spec].label()
        index = case.find_branch(spec) if isinstance(spec, str) else spec
        if not case.branches[index].in_service:
            continue  # outage already part of the OC topology
        try:
            outaged = apply_outage(case, index)
        except IslandingError:
            details.append(ContingencyResult(name, False, True, (), False))
            first_failure = first_failure or name
            continue
        sol = solve_powerflow(outaged, options)
        if not sol.converged:
            details.append(ContingencyResult(name, False, False, (), False))
            first_failure = first_failure or name
            continue
        violations = tuple(check_limits(sol, outaged, limits))
        ok = not violations
        details.append(ContingencyResult(name, True, False, violations, ok))
        if not ok:
            first_failure = first_failure or name
    label = Label.INSECURE if first_failure else Label.SECURE
    return ScreenResult(label=label, details=details, first_failure=first_failure)


def parse_contingency_list(text: str) -> list:
    """One branch outage label per line, '#' comments allowed."""
    specs = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            specs.append(line)
    return specs


def screen_configurations(
    case: NetworkCase,
    config_specs,
    cfg: PivConfig | None = None,
    options: SolveOptions | None = None,
) -> list:
    """Assess and categorize a list of candidate branch outages at the base
    operating point; results sorted by descending PI_V."""
    base = solve_powerflow(case, options)
    if not base.converged:
        raise GridSecError("base case did not converge")
    assessments = []
    for spec in config_specs:
        index = case.find_branch(spec)
        try:
            outaged = apply_outage(case, index)
        except IslandingError:
            assessments.append(
                ConfigurationAssessment(spec, float("inf"), float("inf"), Category.CSC)
            )
            continue
        post = solve_powerflow(outaged, options)
        if not post.converged:
            assessments.append(
                ConfigurationAssessment(spec, float("inf"), float("inf"), Category.CSC)
            )
            continue
        assessments.append(classify_configuration(base, post, outaged, spec, cfg))
    return sorted(assessments, key=lambda a: -a.pi_v)
