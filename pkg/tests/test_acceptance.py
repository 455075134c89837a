import pytest

from relaytherm.core.errors import ConfigurationError, NonDifferentiablePoint
from relaytherm.services import acceptance, poincare, stability


def test_unknown_check_is_rejected():
    with pytest.raises(ConfigurationError):
        acceptance.run_suite(["identities", "no_such_check"])


def test_identities_check_passes():
    (record,) = acceptance.run_suite(["identities"])
    assert record.passed
    assert record.measured["H0_plus_F"] <= 1e-13


def test_det_identity_check_passes():
    record = acceptance.check_det_identity(n_cases=40)
    assert record.passed
    assert record.measured["cases"] == 40.0


def test_det_identity_check_full_seed_zero_batch():
    # includes large-s cases where ||A|| is far below round-off
    record = acceptance.check_det_identity(seed=0)
    assert record.passed, record.detail
    assert record.measured["cases"] == 200.0


def test_jacobian_check_counts_non_differentiable_solutions(monkeypatch):
    def fake_fd(system, sol, eps=None):
        if sol.s < 0.3:
            raise NonDifferentiablePoint("switching structure changes under perturbation of coordinate 1")
        A = stability.matrix_A(system, sol.s)
        return A @ A

    monkeypatch.setattr(poincare, "guiding_jacobian_fd", fake_fd)
    record = acceptance.check_jacobian()
    assert record.passed, record.detail
    assert record.measured["non_differentiable"] >= 1.0
    assert record.measured["solutions"] >= 1.0
    assert "not differentiable" in record.detail


def test_jacobian_check_fails_without_comparable_solution(monkeypatch):
    def fake_fd(system, sol, eps=None):
        raise NonDifferentiablePoint("grazing switch under perturbation of coordinate 1")

    monkeypatch.setattr(poincare, "guiding_jacobian_fd", fake_fd)
    record = acceptance.check_jacobian()
    assert not record.passed
    assert "no transversal solution to check" in record.detail


def test_small_s_solution_sits_at_target():
    sol = acceptance.small_s_solution(acceptance.rod(4.0), s_target=0.05)
    assert sol.valid
    assert sol.s == pytest.approx(0.05, abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize(
    "name",
    [
        "bifurcation_diagram_m0_2",
        "bifurcation_diagram_m0_3_2",
        "stability_threshold",
        "det_identity",
        "jacobian_agreement",
        "periodicity_symmetry",
        "guided_contraction",
        "guiding_invariance",
        "rate_measurement",
        "truncation_convergence",
    ],
)
def test_acceptance_check(name):
    (record,) = acceptance.run_suite([name])
    assert record.passed, record.detail
