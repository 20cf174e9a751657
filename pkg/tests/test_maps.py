import numpy as np
import pytest

from harmap import fixtures
from harmap.grid_field import Grid
from harmap.maps import (ExpressionMetric, GridMetric, TorusMap, energy, identity_to, pd_nodes_ok,
                         pullback_metric, second_fundamental_form, tension, tension_residual,
                         theorem1_residual)


def conformal_codomain(m, amp=0.1):
    e = f"exp({2 * amp}*sin(x1))"
    upper = {f"{i + 1}{j + 1}": (e if i == j else "0") for i in range(m) for j in range(i, m)}
    return ExpressionMetric.from_upper(m, upper)


class TestCodomainMetrics:
    def test_from_upper_requires_all_components(self):
        with pytest.raises(ValueError, match="missing"):
            ExpressionMetric.from_upper(2, {"11": "1", "22": "1"})

    def test_rejects_lower_triangle(self):
        with pytest.raises(ValueError, match="upper-triangle"):
            ExpressionMetric.from_upper(2, {"11": "1", "12": "0", "22": "1", "21": "0"})

    def test_rejects_non_periodic_component(self):
        with pytest.raises(ValueError):
            ExpressionMetric.from_upper(2, {"11": "1 + x1", "12": "0", "22": "1"})

    def test_expression_christoffel_closed_form(self):
        # [DERIVED] Gammabar^k_ij = delta_ki v_j + delta_kj v_i - delta_ij v_k for e^{2v} delta, v = 0.1 sin x1
        cod = conformal_codomain(3)
        pts = np.array([[0.4, 2.0], [1.0, -1.0], [3.0, 0.5]])
        dv = np.array([0.1 * np.cos(pts[0]), np.zeros(2), np.zeros(2)])
        eye = np.eye(3)
        want = (np.einsum("ki,j...->kij...", eye, dv) + np.einsum("kj,i...->kij...", eye, dv)
                - np.einsum("ij,k...->kij...", eye, dv))
        assert np.abs(cod.christoffel(pts) - want).max() < 1e-14

    def test_grid_metric_interpolates_off_nodes(self, conf2):
        gm = GridMetric(conf2)
        pts = np.array([[0.123, 5.0], [2.2, 0.9]])
        want = conformal_codomain(2).values(pts)
        assert np.abs(gm.values(pts) - want).max() < 1e-10

    def test_grid_metric_without_interpolation(self, conf2):
        gm = GridMetric(conf2, interpolate=False)
        assert gm.values(conf2.grid.coords) is conf2.g
        with pytest.raises(ValueError, match="off its nodes"):
            gm.values(conf2.grid.coords + 0.1)


class TestTorusMap:
    def test_validation(self, flat2):
        cod = ExpressionMetric.flat(2)
        with pytest.raises(ValueError, match="2x2"):
            TorusMap(flat2, cod, np.eye(3, dtype=int))
        with pytest.raises(ValueError, match="integer"):
            TorusMap(flat2, cod, np.array([[1.5, 0], [0, 1]]))
        with pytest.raises(ValueError, match="displacement shape"):
            TorusMap(flat2, cod, np.eye(2, dtype=int), np.zeros((2, 4, 4)))
        noise = np.random.default_rng(0).standard_normal((2,) + flat2.grid.shape)
        with pytest.raises(ValueError, match="resolved"):
            TorusMap(flat2, cod, np.eye(2, dtype=int), noise)

    def test_jacobian_of_linear_map(self, flat2):
        A = np.array([[2, 1], [1, 1]])
        f = TorusMap(flat2, ExpressionMetric.flat(2), A)
        assert np.abs(f.jacobian.J - A[:, :, None, None]).max() == 0.0
        assert f.jacobian.min_singular == pytest.approx(np.linalg.svd(A, compute_uv=False).min())

    def test_degenerate_winding_fails_rank(self, flat2):
        f = TorusMap(flat2, ExpressionMetric.flat(2), np.array([[1, 0], [0, 0]]))
        res = theorem1_residual(f)
        assert not res.rank_ok and not res.converse_harmonic


class TestEnergy:
    def test_identity_anchor(self, flat2, flat3):
        # [ANCHOR] E(id) = n/2 Vol for the identity onto the same metric
        for g in (flat2, flat3):
            e = energy(TorusMap.identity(g, ExpressionMetric.flat(g.dim))).energy
            assert e == pytest.approx(0.5 * g.dim * g.volume, rel=1e-14)

    def test_linear_map(self, flat2):
        # [DERIVED] g* = A^T A, e = trace = 7, E = 7/2 (2 pi)^2
        f = TorusMap(flat2, ExpressionMetric.flat(2), np.array([[2, 1], [1, 1]]))
        assert energy(f).energy == pytest.approx(3.5 * (2 * np.pi) ** 2, rel=1e-14)

    def test_constant_map(self, flat2):
        f = TorusMap(flat2, ExpressionMetric.flat(2), np.zeros((2, 2), dtype=int))
        en = energy(f)
        assert en.energy == 0.0 and en.constant_map

    def test_pullback_of_identity_is_target(self, flat2):
        cod = ExpressionMetric.from_upper(2, {"11": "1 + 0.3*cos(x1)", "12": "0.1*sin(x2)", "22": "2"})
        f = TorusMap.identity(flat2, cod)
        assert np.abs(pullback_metric(f) - cod.values(flat2.grid.coords)).max() < 1e-15

    def test_grid_and_expression_codomains_agree(self, flat2, conf2):
        u = np.array([0.1 * np.sin(flat2.grid.coords[1]), 0.05 * np.cos(flat2.grid.coords[0])])
        a = TorusMap(flat2, conformal_codomain(2), np.eye(2, dtype=int), u)
        b = TorusMap(flat2, GridMetric(conf2), np.eye(2, dtype=int), u)
        assert energy(a).energy == pytest.approx(energy(b).energy, rel=1e-10)

    def test_energy_is_invariant_under_domain_conformal_change_in_2d(self, flat2, conf2):
        cod = ExpressionMetric.from_upper(2, {"11": "1 + 0.3*cos(x1)", "12": "0.1*sin(x2)", "22": "2"})
        u = np.array([0.1 * np.sin(flat2.grid.coords[1]), np.zeros(flat2.grid.shape)])
        e_flat = energy(TorusMap(flat2, cod, np.eye(2, dtype=int), u)).energy
        e_conf = energy(TorusMap(conf2, cod, np.eye(2, dtype=int), u)).energy
        assert e_flat == pytest.approx(e_conf, rel=1e-13)


class TestTension:
    def test_identity_onto_conformal_metric(self, flat2, flat3):
        # [DERIVED] Df_* = Gammabar; its trace vanishes in 2D and equals -dv in 3D
        for g in (flat2, flat3):
            f = TorusMap.identity(g, conformal_codomain(g.dim))
            want = np.zeros((g.dim,) + g.grid.shape)
            if g.dim == 3:
                want[0] = -0.1 * np.cos(g.grid.coords[0])
            assert np.abs(tension(f) - want).max() < 1e-14
            sff = second_fundamental_form(f)
            assert np.abs(sff - conformal_codomain(g.dim).christoffel(g.grid.coords)).max() < 1e-14

    def test_tension_vanishes_for_linear_maps(self, flat2):
        f = TorusMap(flat2, ExpressionMetric.flat(2), np.array([[2, 1], [1, 1]]))
        assert tension_residual(f)[0] == 0.0

    def test_tension_scales_linearly_with_small_displacement(self, flat2):
        x2 = flat2.grid.coords[1]
        vals = []
        for eps in (1e-3, 2e-3):
            u = np.array([eps * np.sin(x2), np.zeros(flat2.grid.shape)])
            vals.append(tension_residual(TorusMap(flat2, ExpressionMetric.flat(2), np.eye(2, dtype=int), u))[0])
        assert vals[1] / vals[0] == pytest.approx(2.0, rel=1e-10)


class TestTheorem1:
    def test_proof_identity_holds_for_non_harmonic_map(self, flat2):
        cod = ExpressionMetric.from_upper(2, {"11": "1 + 0.3*cos(x1)", "12": "0.1*sin(x2)", "22": "1 + 0.2*sin(x1 + x2)"})
        u = np.array([0.1 * np.sin(flat2.grid.coords[1]), 0.05 * np.cos(flat2.grid.coords[0])])
        res = theorem1_residual(TorusMap(flat2, cod, np.eye(2, dtype=int), u))
        assert res.r2_rel <= 1e-7
        assert res.r1_rel > 1e-3
        assert not res.converse_harmonic

    def test_identity_along_harmonic_tensor_is_harmonic(self):
        from conftest import harmonic_directions, metric_fixture
        g = metric_fixture("conformal_t2")
        ph = harmonic_directions("conformal_t2", 2)[0]
        res = theorem1_residual(identity_to(g, g.g + 0.1 * ph))
        assert res.r1_rel <= 1e-7 and res.r2_rel <= 1e-7
        assert res.rank_ok and res.converse_harmonic

    def test_identity_along_non_harmonic_tensor_is_not(self, conf2):
        pert = fixtures.random_field(conf2.grid, np.random.default_rng(11), 2, kmax=2)
        f = identity_to(conf2, conf2.g + 0.1 * pert / np.abs(pert).max())
        res = theorem1_residual(f)
        assert res.r1_rel > 1e-3 and res.r2_rel <= 1e-7
        assert tension_residual(f)[1] > 1e-3

    def test_relative_scale_for_isometry(self, bump3):
        # identity onto the same metric: both sides vanish and stay small relative to grad g*
        res = theorem1_residual(identity_to(bump3, bump3.g))
        assert res.r1_rel <= 1e-7 and res.converse_harmonic


def test_pd_nodes_ok():
    grid = Grid(2, 8)
    g = np.eye(2)[:, :, None, None] * np.ones(grid.shape)
    assert pd_nodes_ok(g, grid)
    g[0, 0, 0, 0] = -1.0
    assert not pd_nodes_ok(g, grid)
