import numpy as np
import pytest

from gridsec.errors import GridSecError
from gridsec.model import apply_outage, scale_loads
from gridsec.powerflow import solve_powerflow
from gridsec.security import (
    Category,
    Label,
    OperatingLimits,
    PivConfig,
    categorize,
    check_limits,
    classify_configuration,
    compute_piv,
    max_flow_delta_mw,
    parse_contingency_list,
    run_contingency_screen,
    screen_configurations,
)


class FakeSolution:
    converged = True

    def __init__(self, v_mag):
        self.v_mag = np.asarray(v_mag, dtype=float)


def test_piv_zero_when_voltages_unchanged():
    pre = FakeSolution([1.0, 0.97, 1.02])
    assert compute_piv(pre, pre, PivConfig()) == pytest.approx(0.0, abs=1e-12)


def test_piv_unit_deviation_closed_form():
    # one bus moved by exactly dv_limit: contribution w/(2n) * 1 = 0.5
    pre = FakeSolution([1.0, 1.0])
    post = FakeSolution([1.0, 0.95])
    assert compute_piv(pre, post, PivConfig()) == pytest.approx(0.5, abs=1e-12)


def test_piv_sum_of_contributions():
    # deviations of 1x and 2x the limit: 0.5 * (1 + 4) = 2.5
    pre = FakeSolution([1.0, 1.0])
    post = FakeSolution([0.95, 1.10])
    assert compute_piv(pre, post, PivConfig()) == pytest.approx(2.5, abs=1e-12)


def test_piv_permutation_invariance():
    rng = np.random.default_rng(3)
    pre = rng.uniform(0.95, 1.05, 12)
    post = pre + rng.uniform(-0.06, 0.06, 12)
    perm = rng.permutation(12)
    a = compute_piv(FakeSolution(pre), FakeSolution(post), PivConfig())
    b = compute_piv(FakeSolution(pre[perm]), FakeSolution(post[perm]), PivConfig())
    assert a == pytest.approx(b, abs=1e-12)


def test_piv_exponent_scaling():
    # doubling every deviation multiplies each term by 2^(2n)
    rng = np.random.default_rng(4)
    pre = rng.uniform(0.98, 1.02, 6)
    dev = rng.uniform(-0.02, 0.02, 6)
    for n in (1, 2, 3):
        cfg = PivConfig(exponent=n)
        small = compute_piv(FakeSolution(pre), FakeSolution(pre + dev), cfg)
        big = compute_piv(FakeSolution(pre), FakeSolution(pre + 2 * dev), cfg)
        assert big == pytest.approx(small * 2 ** (2 * n), rel=1e-9)


def test_piv_weights():
    pre = FakeSolution([1.0, 1.0])
    post = FakeSolution([0.95, 0.95])
    cfg = PivConfig(weights=np.array([2.0, 0.0]))
    assert compute_piv(pre, post, cfg) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("piv,flow,expected", [
    (0.05, 0.0, Category.NEGLIGIBLE),
    (0.1, 1000.0, Category.NEGLIGIBLE),     # boundary: not strictly above
    (0.10000001, 0.0, Category.TC),
    (0.5, 199.999, Category.TC),
    (0.5, 200.0, Category.CSC),             # boundary: at threshold -> CSC
    (0.5, 350.0, Category.CSC),
    (0.0, 400.0, Category.NEGLIGIBLE),      # flow alone never promotes
])
def test_categorize_decision_table(piv, flow, expected):
    assert categorize(piv, flow) is expected


def test_classify_configuration_on_network(case68):
    pre = solve_powerflow(case68)
    spec = "47-53"
    idx = next(k for k, b in enumerate(case68.branches) if b.label() == spec)
    post_case = apply_outage(case68, idx)
    post = solve_powerflow(post_case)
    assert pre.converged and post.converged
    result = classify_configuration(pre, post, post_case, spec, PivConfig())
    assert result.pi_v > 0.1
    assert result.category in (Category.TC, Category.CSC)
    assert result.max_flow_delta_mw == pytest.approx(
        max_flow_delta_mw(pre, post, post_case))


def test_check_limits_clean(case9):
    sol = solve_powerflow(case9)
    violations = check_limits(sol, case9, OperatingLimits())
    assert violations == []


def test_check_limits_flags_voltage(case9):
    sol = solve_powerflow(case9)
    tight = OperatingLimits(v_min=0.90, v_max=1.02)
    violations = check_limits(sol, case9, tight)
    assert any(v.kind == "high-voltage" for v in violations)


def test_check_limits_flags_loading(case9):
    sol = solve_powerflow(case9)
    tight = OperatingLimits(loading_limit=0.2)
    violations = check_limits(sol, case9, tight)
    assert any(v.kind == "overload" for v in violations)


def test_screen_islanding_is_insecure(case2):
    result = run_contingency_screen(case2, ["1-2"], OperatingLimits())
    assert result.label is Label.INSECURE
    assert result.first_failure == "1-2"
    assert result.details[0].islanded


def test_screen_light_nine_bus_secure(case9):
    light = scale_loads(case9, 0.8)
    result = run_contingency_screen(light, ["4-5", "7-8", "6-9"], OperatingLimits())
    assert result.label is Label.SECURE


def test_screen_base_nine_bus_insecure(case9):
    result = run_contingency_screen(case9, ["4-5", "7-8", "6-9"], OperatingLimits())
    assert result.label is Label.INSECURE
    assert result.first_failure


def test_screen_monotone_in_contingency_set(case9):
    """Removing contingencies can only weaken the screen."""
    full = run_contingency_screen(case9, ["4-5", "7-8", "6-9"], OperatingLimits())
    failing = full.first_failure.split()[0] if full.first_failure else None
    reduced = [c for c in ("4-5", "7-8", "6-9") if c != "4-5"]
    partial = run_contingency_screen(case9, reduced, OperatingLimits())
    if partial.label is Label.INSECURE:
        assert full.label is Label.INSECURE


def test_screen_requires_contingencies(case9):
    with pytest.raises(GridSecError, match="no contingencies"):
        run_contingency_screen(case9, [], OperatingLimits())


def test_screen_stressed_68_bus(case68):
    stressed = scale_loads(case68, 1.05)
    csc = ["18-49", "21-22", "30-61", "36-61", "40-41", "40-48", "41-42", "67-68"]
    result = run_contingency_screen(stressed, csc, OperatingLimits())
    assert result.label in (Label.SECURE, Label.INSECURE)
    assert len(result.details) >= 1


def test_parse_contingency_list():
    text = "# comment\n17-43\n\n54-55  # trailing note\n"
    assert parse_contingency_list(text) == ["17-43", "54-55"]


def test_screen_configurations_ranked(case68, tc_and_csc_lines):
    rows = screen_configurations(case68, tc_and_csc_lines, PivConfig())
    pivs = [r.pi_v for r in rows]
    assert pivs == sorted(pivs, reverse=True)
    assert len(rows) == len(tc_and_csc_lines)


@pytest.fixture(scope="module")
def tc_and_csc_lines():
    from tests.conftest import TC_LINES, CSC_LINES

    return TC_LINES + CSC_LINES
