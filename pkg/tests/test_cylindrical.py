import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirichlet_wiener.basis import PathSample, schauder_1d, synthesize_path, synthesize_values
from dirichlet_wiener.cylindrical import (
    CylindricalFunction,
    Polynomial,
    carre_du_champ,
    directional_derivatives,
    dirichlet_energy,
    gradient_pairing,
)
from dirichlet_wiener.errors import DivergentSeriesError
from dirichlet_wiener.spectral import EigenvalueSequence
from dirichlet_wiener.weight import TrigWeight

ONE = EigenvalueSequence.constant()
LIN = EigenvalueSequence.power(1.0)


class TestParse:
    def test_polynomial(self):
        F = CylindricalFunction.parse("2*x1(1/2)^2 - x1(1) + 3")
        path = synthesize_path([0.0, 2.0], 1)
        assert F.times == (0.5, 1.0)
        assert F(path) == pytest.approx(2 * 1.0 - 0.0 + 3)

    def test_multidimensional(self):
        F = CylindricalFunction.parse("x1(1)*x2(1)", d=2)
        path = synthesize_path([2.0, 3.0], 0, d=2)
        assert F(path) == pytest.approx(6.0)

    def test_class_tags(self):
        assert CylindricalFunction.parse("x1(3/4)").class_tag == "Y"
        assert CylindricalFunction.parse("x1(1/3)").class_tag == "Z"

    def test_errors(self):
        with pytest.raises(ValueError):
            CylindricalFunction.parse("x2(1)", d=1)
        with pytest.raises(ValueError):
            CylindricalFunction.parse("y(1)")
        with pytest.raises(ValueError):
            CylindricalFunction((0.5, 0.25), Polynomial.constant(0.0, 2))

    def test_arithmetic(self):
        a = CylindricalFunction.parse("x1(1/2) + 0*x1(1)")
        b = CylindricalFunction.parse("x1(1) + 0*x1(1/2)")
        path = synthesize_path([1.0, 1.0], 2)
        assert (a * b)(path) == pytest.approx(a(path) * b(path))
        assert (a - b + 1)(path) == pytest.approx(a(path) - b(path) + 1)


class TestPolynomial:
    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
    def test_derivatives_by_finite_difference(self, xs):
        p = Polynomial({(2, 1): 1.5, (0, 3): -1.0, (1, 0): 2.0}, 2)
        x = np.array(xs)
        h = 1e-6
        fd = [(p(x + h * e) - p(x - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(fd, p.gradient(x), atol=1e-5)
        fdh = [(p.gradient(x + h * e) - p.gradient(x - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(fdh, p.hessian(x), atol=1e-5)


class TestGradient:
    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75, 1.0])
    def test_evaluation_functional(self, s):
        F = CylindricalFunction.coordinate(s)
        path = synthesize_path(np.arange(8.0), 3)
        for i in range(1, 9):
            assert gradient_pairing(F, path, i) == pytest.approx(schauder_1d(i, s))

    def test_constant(self):
        F = CylindricalFunction.constant(4.0)
        assert all(gradient_pairing(F, PathSample.zero(3), i) == 0 for i in range(1, 9))

    def test_chain_rule_example(self):
        F = CylindricalFunction.parse("x1(1)^2")
        path = synthesize_path([2.0], 1)
        assert gradient_pairing(F, path, 1) == pytest.approx(4.0)
        assert directional_derivatives(F, path, 1) == pytest.approx((4.0, 2.0))
        assert directional_derivatives(CylindricalFunction.coordinate(1.0), path, 1) == pytest.approx((1.0, 0.0))

    @given(st.integers(1, 16), st.lists(st.floats(-2, 2), min_size=16, max_size=16))
    def test_central_differences(self, i, coeffs):
        F = CylindricalFunction.parse("x1(1/4)^3 - 2*x1(1/2)*x1(1) + x1(3/8)^2")
        c = np.array(coeffs)
        e = np.zeros(16)
        e[i - 1] = 1.0
        t = 1e-4
        up = F(synthesize_path(c + t * e, 4))
        dn = F(synthesize_path(c - t * e, 4))
        first, second = directional_derivatives(F, synthesize_path(c, 4), i)
        assert (up - dn) / (2 * t) == pytest.approx(first, abs=1e-6)
        mid = F(synthesize_path(c, 4))
        assert (up - 2 * mid + dn) / t**2 == pytest.approx(second, abs=1e-3)


class TestEnergy:
    def test_endpoint_is_exact(self):
        F = CylindricalFunction.coordinate(1.0)
        est = dirichlet_energy(F, F, ONE, samples=500)
        assert est.value == pytest.approx(1.0, abs=1e-14) and est.stderr == pytest.approx(0.0, abs=1e-14)

    def test_constant(self):
        F = CylindricalFunction.constant(2.0)
        assert dirichlet_energy(F, F, ONE, samples=100).value == 0.0

    def test_midpoint_linear_rule(self):
        F = CylindricalFunction.coordinate(0.5)
        assert dirichlet_energy(F, F, LIN, samples=100).value == pytest.approx(0.75, abs=1e-14)

    def test_gaussian_moment(self):
        # E(x(1), x(1)^2) = E[2 gamma(1)] = 0
        F = CylindricalFunction.coordinate(1.0)
        G = CylindricalFunction.parse("x1(1)^2")
        est = dirichlet_energy(F, G, ONE, samples=20_000, level=4)
        assert abs(est.value) <= 3 * est.stderr

    def test_weighted_matches_importance_oracle(self):
        # with phi the energy of x(1) is E_nu[phi] ~ 1
        F = CylindricalFunction.coordinate(1.0)
        est = dirichlet_energy(F, F, ONE, TrigWeight(), samples=20_000, level=6)
        assert abs(est.value - 1.0) <= 3 * est.stderr

    def test_class_z_needs_convergence(self):
        F = CylindricalFunction.coordinate("1/3")
        with pytest.raises(DivergentSeriesError):
            dirichlet_energy(F, F, EigenvalueSequence.power(1.5), samples=10)
        est = dirichlet_energy(F, F, ONE, samples=10, level=10)
        assert est.value == pytest.approx(1 / 3, abs=1e-3)
        assert est.tail_bound >= abs(est.value - 1 / 3)

    def test_threads_do_not_change_result(self):
        F = CylindricalFunction.parse("x1(1/2)*x1(1)")
        a = dirichlet_energy(F, F, ONE, TrigWeight(), samples=20_000, level=4, threads=1)
        b = dirichlet_energy(F, F, ONE, TrigWeight(), samples=20_000, level=4, threads=3)
        assert a == b


class TestCarreDuChamp:
    def test_examples(self):
        tau = synthesize_path([0.3, -1.0], 2)
        assert carre_du_champ(CylindricalFunction.coordinate(1.0), tau, ONE) == pytest.approx(2.0)
        assert carre_du_champ(CylindricalFunction.constant(1.0), tau, ONE) == 0.0
        assert carre_du_champ(CylindricalFunction.coordinate(0.5), tau, LIN) == pytest.approx(1.5)

    def test_parseval_identity(self):
        F = CylindricalFunction.coordinate("3/8")
        assert carre_du_champ(F, PathSample.zero(3), ONE) == pytest.approx(2 * 3 / 8)
