import numpy as np
import pytest

from baroflow.eos import (
    IsentropicLaw,
    IsentropicPlusLinearLaw,
    TabulatedLaw,
    check_structure,
    load_tabulated_csv,
)
from baroflow.errors import DomainError, StructureError


def test_pressure_closed_forms():
    law = IsentropicLaw(a=1.0, gamma=2.0)
    assert law.pressure(0.0) == 0.0
    assert law.pressure(1.5) == pytest.approx(2.25, rel=1e-14)
    mixed = IsentropicPlusLinearLaw(a=2.0, gamma=1.4, b=0.5)
    assert mixed.pressure(1.0) == pytest.approx(2.5, rel=1e-14)


def test_negative_density_rejected():
    law = IsentropicLaw()
    with pytest.raises(DomainError):
        law.pressure(-0.1)
    with pytest.raises(DomainError):
        law.potential(np.array([0.5, -1.0]))


def test_potential_closed_form_and_vacuum():
    law = IsentropicLaw(a=1.0, gamma=2.0)
    assert law.potential(2.0) == pytest.approx(4.0, rel=1e-14)
    assert law.potential(0.0) == 0.0
    assert IsentropicPlusLinearLaw(a=1.0, gamma=2.0, b=0.3).potential(0.0) == 0.0


def test_defining_identity_by_finite_differences():
    h = 1e-5
    for law in (
        IsentropicLaw(a=1.0, gamma=2.0),
        IsentropicLaw(a=0.7, gamma=1.4),
        IsentropicPlusLinearLaw(a=1.0, gamma=1.7, b=0.4),
    ):
        for rho in np.linspace(0.2, 5.0, 100):
            dP = (law.potential(rho + h) - law.potential(rho - h)) / (2 * h)
            residual = dP * rho - law.potential(rho) - law.pressure(rho)
            assert abs(residual) < 1e-6


def test_potential_second_is_dp_over_rho():
    law = IsentropicLaw(a=1.3, gamma=1.8)
    rho = np.linspace(0.1, 4.0, 50)
    assert np.allclose(
        law.potential_second(rho), law.pressure_derivative(rho) / rho, rtol=1e-12
    )


def test_relative_potential_examples():
    law = IsentropicLaw(a=1.0, gamma=2.0)
    assert law.relative_potential(1.7, 1.7) == pytest.approx(0.0, abs=1e-14)
    assert law.relative_potential(2.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert law.relative_potential(0.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DomainError):
        law.relative_potential(1.0, 0.0)


def test_relative_potential_nonnegative_on_random_pairs():
    rng = np.random.default_rng(0)
    for law in (IsentropicLaw(1.0, 2.0), IsentropicLaw(0.5, 1.4),
                IsentropicPlusLinearLaw(1.0, 2.0, 0.5)):
        rho = rng.uniform(0.0, 8.0, 10000)
        rho_t = rng.uniform(1e-3, 8.0, 10000)
        vals = law.relative_potential(rho, rho_t)
        assert vals.min() >= -1e-12


@pytest.mark.parametrize("gamma", [1.4, 2.0, 3.0])
def test_check_structure_isentropic(gamma):
    report = check_structure(IsentropicLaw(a=1.0, gamma=gamma), sample_count=200)
    assert report.passed, report.messages


def test_check_structure_custom_constants():
    report = check_structure(IsentropicLaw(a=1.0, gamma=1.4, a_lower=2.5, a_upper=2.5))
    assert report.passed
    assert report.coercivity_exponent == pytest.approx(1.4)


def test_check_structure_flags_linear_pressure():
    # p(rho) = rho has gamma = 1: the potential quadrature diverges at vacuum
    # and the upper convexity / coercivity of the hypotheses fail.
    rho = np.geomspace(1e-3, 1e3, 400)
    law = TabulatedLaw(rho, rho, a_lower=1.0, a_upper=1.0)
    assert not law.vacuum_integrable
    with pytest.raises(StructureError):
        law.potential(2.0)
    report = check_structure(law, sample_count=150)
    assert not report.passed
    assert not report.vacuum_integrable
    assert not (report.convex_upper and report.coercive)


def test_tabulated_matches_closed_form():
    law = IsentropicLaw(a=1.0, gamma=2.0)
    rho = np.geomspace(1e-3, 20.0, 400)
    # non-degenerate structural constants: at a_lower = a_upper = 1/(gamma-1)
    # the convexity margin is exactly zero and interpolation noise decides
    tab = TabulatedLaw(rho, law.pressure(rho), a_lower=0.8, a_upper=1.25)
    sample = np.linspace(0.05, 15.0, 60)
    assert np.allclose(tab.pressure(sample), law.pressure(sample), rtol=1e-6)
    assert np.allclose(tab.potential(sample), law.potential(sample), rtol=1e-6)
    report = check_structure(tab, sample_count=120)
    assert report.monotone and report.convex_lower and report.convex_upper


def test_tabulated_interpolation_is_monotone():
    rng = np.random.default_rng(1)
    rho = np.geomspace(0.01, 10.0, 40)
    law = TabulatedLaw(rho, 2.0 * rho**1.7, a_lower=1.0, a_upper=1.5)
    fine = np.geomspace(0.011, 9.9, 2000)
    p = law.pressure(fine)
    assert np.all(np.diff(p) > 0)
    assert law.pressure_derivative(rng.uniform(0.1, 9, 5)).min() > 0


def test_coercivity_fit_positive():
    law = IsentropicLaw(a=0.5, gamma=1.4)
    report = check_structure(law, sample_count=300)
    assert report.coercivity_constant > 0


def test_extended_law_core_passes_structure():
    law = IsentropicPlusLinearLaw(a=1.0, gamma=2.0, b=0.7)
    assert check_structure(law.core()).passed
    # the +b*rho extension deliberately leaves the two-sided convexity frame
    report = check_structure(law)
    assert not report.convex_upper


def test_csv_loading(tmp_path):
    law = IsentropicLaw(a=2.0, gamma=1.5)
    rho = np.geomspace(1e-2, 5.0, 200)
    path = tmp_path / "table.csv"
    lines = ["rho,p"] + [f"{r},{p}" for r, p in zip(rho, law.pressure(rho))]
    path.write_text("\n".join(lines) + "\n")
    tab = load_tabulated_csv(path, a_lower=2.0, a_upper=2.0)
    assert tab.pressure(1.0) == pytest.approx(2.0, rel=1e-5)
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,1.0\n0.5,2.0\n2.0,3.0\n")
    with pytest.raises(StructureError):
        load_tabulated_csv(bad)
