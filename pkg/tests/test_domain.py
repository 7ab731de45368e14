import numpy as np
import pytest

from baroflow.domain import (
    BoundaryData,
    Domain,
    SineBasis,
    build_basis,
    decompose_boundary,
    project,
)
from baroflow.errors import ConfigurationError


def test_boundary_decomposition_uniform_flow():
    dom = Domain((1.0, 1.0), 17)
    data = BoundaryData(dom, ["1", "0"], "1")
    part = decompose_boundary(dom, data)
    assert np.all(part.labels["left"] == -1)
    assert np.all(part.labels["right"] == 1)
    assert np.all(part.labels["top"] == 0)
    assert np.all(part.labels["bottom"] == 0)


def test_boundary_decomposition_zero_flow():
    dom = Domain((1.0, 1.0), 9)
    data = BoundaryData(dom, ["0", "0"], "1")
    part = decompose_boundary(dom, data)
    assert not part.inflow_nodes and not part.outflow_nodes
    assert len(part.wall_nodes) == sum(lab.size for lab in part.labels.values())


def test_boundary_decomposition_pointwise_sign_oracle():
    dom = Domain((1.0, 1.0), 13)
    data = BoundaryData(dom, ["x1 - 0.5", "0"], "1")
    part = decompose_boundary(dom, data)
    for edge in dom.edges:
        u1 = edge.x1 - 0.5
        ubn = u1 * edge.normal[0]
        expected = np.where(np.abs(ubn) <= 1e-12, 0, np.sign(ubn)).astype(int)
        assert np.array_equal(part.labels[edge.name], expected)


def test_single_mode_normalization_on_pi_square():
    dom = Domain((np.pi, np.pi), 33)
    basis = build_basis(dom, 1)
    w1 = basis.values[0]
    # w1 is (sin x1 sin x2, 0) normalized by 2/pi
    assert w1[16, 16, 0] == pytest.approx(2.0 / np.pi, rel=1e-12)
    assert np.all(w1[..., 1] == 0.0)
    norm = dom.integrate(np.einsum("xya,xya->xy", w1, w1))
    assert norm == pytest.approx(1.0, abs=1e-10)


def test_gram_matrix_identity():
    dom = Domain((1.0, 1.0), 17)  # m - 1 = 16 >= 4 * max mode (k <= 2 for n = 8)
    basis = build_basis(dom, 8)
    gram = basis.gram()
    assert np.max(np.abs(gram - np.eye(8))) < 1e-10


def test_boundary_trace_exact_zero():
    dom = Domain((1.0, 2.0), 13)
    basis = build_basis(dom, 8)
    assert basis.boundary_trace_max() == 0.0


def test_projection_examples():
    dom = Domain((1.0, 1.0), 21)
    basis = build_basis(dom, 6)
    coeffs = project(basis, basis.values[3])
    expected = np.zeros(6)
    expected[3] = 1.0
    assert np.allclose(coeffs, expected, atol=1e-10)

    field = 2.0 * basis.values[0] + 3.0 * basis.values[1]
    assert np.allclose(project(basis, field), [2, 3, 0, 0, 0, 0], atol=1e-10)

    # a gradient of a pure cosine product is L2-orthogonal to the sine span
    ortho = np.stack(
        [np.cos(np.pi * dom.X1) * np.cos(np.pi * dom.X2), np.zeros(dom.shape)],
        axis=-1,
    )
    # remove the sine-expandable part: cos*cos has zero overlap with sin*sin
    assert np.max(np.abs(project(basis, ortho))) < 1e-10


def test_mode_ordering_deterministic():
    dom = Domain((1.0, 1.0), 33)
    basis = build_basis(dom, 8)
    assert basis.modes == [
        (1, 1, 0),
        (1, 1, 1),
        (1, 2, 0),
        (1, 2, 1),
        (2, 1, 0),
        (2, 1, 1),
        (1, 3, 0),
        (1, 3, 1),
    ]


def test_basis_size_limited_by_resolution():
    dom = Domain((1.0, 1.0), 5)
    with pytest.raises(ConfigurationError):
        build_basis(dom, 64)


def test_quadrature_exactness_for_sine_products():
    dom = Domain((1.0, 1.0), 33)
    basis = build_basis(dom, 12)
    # every pairwise product integrates to its closed form (orthonormality)
    gram = basis.gram()
    assert np.max(np.abs(gram - np.eye(12))) < 1e-10


def test_edge_quadrature_linear_exactness():
    dom = Domain((1.0, 2.0), 17)
    data = BoundaryData(dom, ["1", "0"], "1")
    # int over the left edge of (a + b x2) * (u_B . n) dS, u_B . n = -1
    a, b = 0.7, 1.3
    values = a + b * dom.X2
    left_only = data.boundary_integral(values, where="in")
    exact = -(a * 2.0 + b * 2.0**2 / 2.0)
    assert left_only == pytest.approx(exact, abs=1e-10)
    out = data.boundary_integral(values, where="out")
    assert out == pytest.approx(a * 2.0 + b * 2.0, abs=1e-10)


def test_discrete_divergence_theorem_exact():
    rng = np.random.default_rng(5)
    dom = Domain((1.3, 0.7), (19, 23))
    f = rng.standard_normal(dom.shape)
    g = rng.standard_normal(dom.shape)
    # SBP pairing: sum W (f dx(g) + g dx(f)) equals the boundary trapezoid
    lhs = dom.integrate(f * dom.dx1(g) + g * dom.dx1(f))
    rhs = float(np.sum(dom.w2 * (f[-1, :] * g[-1, :] - f[0, :] * g[0, :])))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))
    lhs2 = dom.integrate(f * dom.dx2(g) + g * dom.dx2(f))
    rhs2 = float(np.sum(dom.w1 * (f[:, -1] * g[:, -1] - f[:, 0] * g[:, 0])))
    assert lhs2 == pytest.approx(rhs2, abs=1e-12 * max(1.0, abs(rhs2)))


def test_divergence_of_product_equals_boundary_flux():
    rng = np.random.default_rng(6)
    dom = Domain((1.0, 1.0), 15)
    f1 = rng.standard_normal(dom.shape)
    f2 = rng.standard_normal(dom.shape)
    total = dom.integrate(dom.dx1(f1) + dom.dx2(f2))
    flux = float(
        np.sum(dom.w2 * (f1[-1, :] - f1[0, :])) + np.sum(dom.w1 * (f2[:, -1] - f2[:, 0]))
    )
    assert total == pytest.approx(flux, abs=1e-12)
