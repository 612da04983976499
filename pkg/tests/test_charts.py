import dataclasses

import numpy as np
import pytest

from intrinsicfilter import charts as C
from intrinsicfilter.montecarlo import order_fit

RNG = np.random.default_rng(20260810)

FLAT = C.make_chart("flat", dim=2)
SPHERE = C.make_chart("sphere-stereo")
HALF = C.make_chart("poincare-half-plane")
WARPED = C.make_chart("warped-r2")

CURVED = [SPHERE, HALF, WARPED]
ALL_CHARTS = [FLAT] + CURVED


def random_point(chart, rng):
    if chart.name == "poincare-half-plane":
        return np.array([rng.uniform(-1, 1), rng.uniform(0.5, 2.0)])
    return rng.uniform(-0.8, 0.8, size=2)


def orthonormal_pair(chart, x, rng):
    g = chart.metric(x)
    frame = np.linalg.cholesky(np.linalg.inv(g))
    return frame[:, 0], frame[:, 1]


class TestCovariantDerivative:
    def test_flat_reduces_to_ordinary_derivative(self):
        y, yp = np.array([0.1, 0.2]), np.array([1.0, -0.5])
        V, Vp = np.array([0.3, 0.4]), np.array([-0.2, 0.7])
        assert np.allclose(C.covariant_derivative(FLAT, y, yp, V, Vp), Vp)

    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_parallel_condition_gives_zero(self, chart):
        rng = np.random.default_rng(1)
        y = random_point(chart, rng)
        yp = rng.normal(size=2)
        V = rng.normal(size=2)
        Vp = -np.einsum("kij,i,j->k", chart.connector(y), V, yp)
        out = C.covariant_derivative(chart, y, yp, V, Vp)
        assert np.allclose(out, 0.0, atol=1e-14)

    def test_half_plane_hand_computed_christoffels(self):
        # at (0, 1): G^1_{12} = -1, G^2_{11} = 1, G^2_{22} = -1 from the
        # Levi-Civita formula for g = diag(1/x2^2, 1/x2^2)
        y = np.array([0.0, 1.0])
        out = C.covariant_derivative(
            HALF, y, np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.zeros(2)
        )
        assert np.allclose(out, [0.0, 1.0], atol=1e-14)

    def test_domain_error(self):
        with pytest.raises(C.ChartDomainError):
            C.covariant_derivative(HALF, np.array([0.0, -1.0]), np.zeros(2), np.zeros(2), np.zeros(2))


class TestCurvature:
    def test_flat_vanishes(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            u, v, w = rng.normal(size=(3, 2))
            assert np.allclose(C.curvature(FLAT, np.zeros(2), u, v, w), 0.0)

    @pytest.mark.parametrize("chart", ALL_CHARTS, ids=lambda c: c.name)
    def test_alternating_in_first_two_slots(self, chart):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = random_point(chart, rng)
            u, v, w = rng.normal(size=(3, 2))
            Ruv = C.curvature(chart, x, u, v, w)
            Rvu = C.curvature(chart, x, v, u, w)
            assert np.array_equal(Ruv, -Rvu)
            assert np.array_equal(C.curvature(chart, x, u, u, w), np.zeros(2))

    def test_sphere_constant_curvature_closed_form_fd_connector(self):
        # evaluate with finite-difference DGamma at h=1e-5 and compare to the
        # constant-curvature closed form consistent with this R convention:
        # R(u, v)w = <u, w> v - <v, w> u on the unit sphere.
        fd_sphere = dataclasses.replace(SPHERE, connector_gradient=None)
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = random_point(fd_sphere, rng)
            u, v = orthonormal_pair(fd_sphere, x, rng)
            got = C.curvature(fd_sphere, x, u, v, v)
            assert np.allclose(got, -u, atol=1e-6)
            g = fd_sphere.metric(x)

            def ip(a, b):
                return a @ g @ b

            w = rng.normal(size=2)
            expect = ip(u, w) * v - ip(v, w) * u
            assert np.allclose(C.curvature(fd_sphere, x, u, v, w), expect, atol=1e-6)

    @pytest.mark.parametrize(
        "chart,expected", [(SPHERE, 1.0), (HALF, -1.0)], ids=["sphere", "half-plane"]
    )
    def test_sectional_curvature(self, chart, expected):
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = random_point(chart, rng)
            u, v = orthonormal_pair(chart, x, rng)
            assert abs(C.sectional_curvature(chart, x, u, v) - expected) < 1e-6

    def test_warped_sectional_curvature_varies(self):
        # K = -1/(1 + x1^2)^2 for g = diag(1, 1 + x1^2)
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = random_point(WARPED, rng)
            u, v = orthonormal_pair(WARPED, x, rng)
            expected = -1.0 / (1.0 + x[0] ** 2) ** 2
            assert abs(C.sectional_curvature(WARPED, x, u, v) - expected) < 1e-8

    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_first_bianchi_identity(self, chart):
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = random_point(chart, rng)
            u, v, w = rng.normal(size=(3, 2))
            total = (
                C.curvature(chart, x, u, v, w)
                + C.curvature(chart, x, v, w, u)
                + C.curvature(chart, x, w, u, v)
            )
            assert np.max(np.abs(total)) < 1e-9


class TestExpLogTaylor:
    def test_flat_exact(self):
        y, v = np.array([0.1, -0.3]), np.array([0.5, 0.2])
        assert np.allclose(C.exp_taylor(FLAT, y, v, 0.7), y + 0.7 * v)
        z = np.array([0.4, 0.1])
        assert np.allclose(C.log_taylor(FLAT, y, z), z - y)

    def test_identity_cases(self):
        y, v = np.array([0.2, 1.4]), np.array([0.3, -0.1])
        assert np.allclose(C.exp_taylor(HALF, y, v, 0.0), y)
        assert np.allclose(C.log_taylor(HALF, y, y), 0.0)

    def test_half_plane_matches_integrated_geodesic_at_small_t(self):
        y, v = np.array([0.0, 1.0]), np.array([0.0, 1.0])
        t = 0.1
        exact, _ = C.geodesic_integrate(HALF, y, v, t, steps=10_000)
        err = np.linalg.norm(C.exp_taylor(HALF, y, v, t) - exact)
        assert err < 1e-4

    @pytest.mark.parametrize("chart", [SPHERE, HALF], ids=lambda c: c.name)
    def test_exp_taylor_fourth_order(self, chart):
        rng = np.random.default_rng(8)
        y = random_point(chart, rng)
        v = np.array([0.8, 0.6])
        ts = [0.2, 0.1, 0.05, 0.025]
        errs = []
        for t in ts:
            exact, _ = C.geodesic_integrate(chart, y, v, t, steps=4096)
            errs.append(np.linalg.norm(C.exp_taylor(chart, y, v, t) - exact))
        fit = order_fit(ts, errs)
        assert 3.7 <= fit.slope <= 4.3

    @pytest.mark.parametrize("chart", [SPHERE, HALF], ids=lambda c: c.name)
    def test_log_exp_roundtrip_fourth_order(self, chart):
        rng = np.random.default_rng(9)
        y = random_point(chart, rng)
        direction = np.array([0.6, -0.8])
        scales = [0.2, 0.1, 0.05, 0.025]
        errs = []
        for s in scales:
            v = s * direction
            z = C.exp_taylor(chart, y, v, 1.0)
            errs.append(np.linalg.norm(C.log_taylor(chart, y, z) - v))
        fit = order_fit(scales, errs)
        assert 3.7 <= fit.slope <= 4.3


class TestGeodesicIntegrate:
    def test_flat_machine_precision(self):
        y, v = np.array([0.3, -0.2]), np.array([1.2, 0.5])
        end, vel = C.geodesic_integrate(FLAT, y, v, 0.9, steps=16)
        assert np.allclose(end, y + 0.9 * v, atol=1e-15)
        assert np.allclose(vel, v, atol=1e-15)

    def test_sphere_energy_conservation(self):
        rng = np.random.default_rng(10)
        y = random_point(SPHERE, rng)
        u, _ = orthonormal_pair(SPHERE, y, rng)
        speed0 = SPHERE.norm(y, u)
        for t in (0.25, 0.5, 1.0):
            end, vel = C.geodesic_integrate(SPHERE, y, u, t, steps=1000)
            assert abs(SPHERE.norm(end, vel) - speed0) < 1e-10

    def test_half_plane_closed_form_semicircle(self):
        # unit-speed geodesic from (0, 1) with velocity (1, 0) follows
        # (tanh s, sech s)
        end, vel = C.geodesic_integrate(HALF, np.array([0.0, 1.0]), np.array([1.0, 0.0]), 1.0, steps=2048)
        expected = np.array([np.tanh(1.0), 1.0 / np.cosh(1.0)])
        assert np.allclose(end, expected, atol=1e-10)

    def test_domain_exit_reports_step(self):
        with pytest.raises(C.ChartDomainError, match="step"):
            C.geodesic_integrate(HALF, np.array([0.0, 0.05]), np.array([0.0, -1.0]), 1.0, steps=64)

    def test_batched_agrees_with_loop(self):
        rng = np.random.default_rng(11)
        ys = np.stack([random_point(SPHERE, rng) for _ in range(5)])
        vs = 0.3 * rng.normal(size=(5, 2))
        ends, vels = C.geodesic_integrate(SPHERE, ys, vs, 1.0, steps=64)
        for i in range(5):
            e, w = C.geodesic_integrate(SPHERE, ys[i], vs[i], 1.0, steps=64)
            assert np.array_equal(ends[i], e)
            assert np.array_equal(vels[i], w)


class TestLogNewton:
    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_inverts_integrated_exponential(self, chart):
        rng = np.random.default_rng(12)
        y = random_point(chart, rng)
        v = 0.4 * rng.normal(size=2)
        z, _ = C.geodesic_integrate(chart, y, v, 1.0, steps=512)
        got = C.log_newton(chart, y, z, steps=512, tol=1e-13)
        assert np.allclose(got, v, atol=1e-10)

    def test_flat_shortcut(self):
        y = np.array([0.1, 0.2])
        z = np.array([[0.4, 0.0], [0.3, 0.9]])
        assert np.allclose(C.log_newton(FLAT, y, z), z - y)


class TestParallelTransport:
    def test_flat_unchanged(self):
        path = np.linspace(0, 1, 50)[:, None] * np.array([1.0, 2.0])
        v = np.array([0.3, -0.7])
        assert np.allclose(C.parallel_transport_integrate(FLAT, path, v), v)

    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_norm_conservation(self, chart):
        rng = np.random.default_rng(13)
        y = random_point(chart, rng)
        u, w = orthonormal_pair(chart, y, rng)
        path = C.geodesic_path(chart, y, 0.8 * u + 0.1 * w, 1.0, steps=1000)
        out = C.parallel_transport_integrate(chart, path, w, substeps=2)
        assert abs(chart.norm(path[-1], out) - chart.norm(y, w)) < 1e-10

    def test_sphere_right_angled_triangle_holonomy(self):
        # triangle with vertices (1,0,0), (0,1,0), (0,0,-1) on the unit
        # sphere: three right angles, area pi/2.  Gauss-Bonnet: transport
        # around the loop rotates vectors by pi/2.
        m = 1200
        s = np.linspace(0.0, np.pi / 2.0, m)

        def project(P):
            return np.stack([P[..., 0] / (1 - P[..., 2]), P[..., 1] / (1 - P[..., 2])], axis=-1)

        arc_ab = project(np.stack([np.cos(s), np.sin(s), np.zeros(m)], axis=-1))
        arc_bc = project(np.stack([np.zeros(m), np.cos(s), -np.sin(s)], axis=-1))
        arc_ca = project(np.stack([np.sin(s), np.zeros(m), -np.cos(s)], axis=-1))

        start = arc_ab[0]
        g0 = SPHERE.metric(start)
        v0 = np.array([0.3, 0.4])
        v = C.parallel_transport_integrate(SPHERE, arc_ab, v0, substeps=2)
        v = C.parallel_transport_integrate(SPHERE, arc_bc, v, substeps=2)
        v = C.parallel_transport_integrate(SPHERE, arc_ca, v, substeps=2)

        n0 = SPHERE.norm(start, v0)
        n1 = SPHERE.norm(start, v)
        assert abs(n1 - n0) < 1e-6
        cos_angle = (v0 @ g0 @ v) / (n0 * n1)
        assert abs(cos_angle) < 1e-5  # rotated by pi/2


class TestConnectorDerivative:
    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_fd_matches_analytic(self, chart):
        rng = np.random.default_rng(14)
        fd_chart = dataclasses.replace(chart, connector_gradient=None)
        for _ in range(10):
            x = random_point(chart, rng)
            v = rng.normal(size=2)
            assert np.allclose(
                fd_chart.connector_derivative(x, v),
                chart.connector_derivative(x, v),
                atol=1e-6,
            )

    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_symmetry_and_linearity(self, chart):
        rng = np.random.default_rng(15)
        x = random_point(chart, rng)
        v, w = rng.normal(size=(2, 2))
        d = chart.connector_derivative(x, v)
        assert np.allclose(d, np.swapaxes(d, -1, -2), atol=1e-12)
        lhs = chart.connector_derivative(x, 2.0 * v + 0.5 * w)
        rhs = 2.0 * d + 0.5 * chart.connector_derivative(x, w)
        assert np.allclose(lhs, rhs, atol=1e-10)


class TestMetricCompatibility:
    @pytest.mark.parametrize("chart", CURVED, ids=lambda c: c.name)
    def test_product_rule_along_curve(self, chart):
        # d/dt <U, V>_g = <DU/dt, V> + <U, DV/dt> for the Levi-Civita
        # connector, checked by central differences on a polynomial curve
        rng = np.random.default_rng(16)
        y0 = random_point(chart, rng)
        yp = 0.3 * rng.normal(size=2)
        a_u, b_u = rng.normal(size=2), 0.2 * rng.normal(size=2)
        a_v, b_v = rng.normal(size=2), 0.2 * rng.normal(size=2)

        def curve(t):
            return y0 + t * yp

        def U(t):
            return a_u + t * b_u

        def V(t):
            return a_v + t * b_v

        def inner(t):
            g = chart.metric(curve(t))
            return U(t) @ g @ V(t)

        h = 1e-6
        lhs = (inner(h) - inner(-h)) / (2 * h)
        DU = C.covariant_derivative(chart, y0, yp, U(0.0), b_u)
        DV = C.covariant_derivative(chart, y0, yp, V(0.0), b_v)
        g = chart.metric(y0)
        rhs = DU @ g @ V(0.0) + U(0.0) @ g @ DV
        assert abs(lhs - rhs) < 1e-7


class TestChartRegistry:
    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown chart"):
            C.make_chart("nope")

    def test_linear_reparametrization_consistency(self):
        T = np.array([[1.2, 0.3], [-0.2, 0.9]])
        reparam = C.linear_reparametrization(SPHERE, T)
        rng = np.random.default_rng(17)
        x = random_point(SPHERE, rng)
        v = 0.3 * rng.normal(size=2)
        end, _ = C.geodesic_integrate(SPHERE, x, v, 1.0, steps=256)
        end_t, _ = C.geodesic_integrate(reparam, T @ x, T @ v, 1.0, steps=256)
        assert np.allclose(T @ end, end_t, atol=1e-12)
