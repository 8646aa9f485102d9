import math

import numpy as np
import pytest

from sphfinsler import curvature as C
from sphfinsler import jet as J
from sphfinsler import oracle as O
from sphfinsler.errors import SingularFrame, ZeroVector
from sphfinsler.metrics import BryantParams, FamilyParams, PhiForm, bryant, euclidean, family, riemann_quadratic


def randers():
    """A non-Riemannian metric with phi in closed form: F = sqrt(|y|^2 + <x,y>^2) + 0.2 <x,y>."""
    return PhiForm(lambda r, s: J.sqrt(1.0 + s * s) + 0.2 * s, name="randers")


def doubled(spec):
    return PhiForm(lambda r, s: 2.0 * spec.phi(r, s), name="doubled")


BRYANT = bryant(BryantParams(c=2.0))


def unit_frame(r, frac, n=2, spec=None):
    x = np.zeros(n)
    y = np.zeros(n)
    x[0] = r
    y[0], y[1] = frac, math.sqrt(1 - frac * frac)
    return C.frame(x, y, spec)


def rel(a, b, floor=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor, 1e-300)


# -- frames ------------------------------------------------------------------------

def test_frame_examples():
    f = C.frame([1, 0], [0, 1])
    assert (f.r, f.u, f.s, f.valid) == (1.0, 1.0, 0.0, True)
    f = C.frame([1, 0], [2, 0])
    assert f.s == 1.0 == f.r and not f.valid
    f = C.frame([3, 4], [0, 2])
    assert (f.r, f.u, f.s) == (5.0, 2.0, 4.0)


def test_frame_errors():
    with pytest.raises(ZeroVector):
        C.frame([0, 0], [1, 0])
    with pytest.raises(ValueError):
        C.frame([1, 0, 0], [1, 0])
    with pytest.raises(SingularFrame):
        C.spray(euclidean(), C.frame([1, 0], [1, 0]))


def test_frame_denominator_guard():
    # U denominator of the Bryant surface vanishes at s*
    star = BRYANT.singular_s(1.0)
    f = C.frame([1.0, 0.0], [star, math.sqrt(1 - star * star)], BRYANT)
    assert not f.valid and "denominator" in f.reason


# -- examples ----------------------------------------------------------------------

def test_euclidean_everything_vanishes():
    spec = euclidean()
    f = C.frame([0.3, 1.1, -0.4], [0.7, 0.2, 0.5])
    pack = C.curvature_pack(spec, f)
    assert pack.spray.P == 0 and pack.spray.Q == 0 and not pack.spray.G.any()
    np.testing.assert_array_equal(pack.g, np.eye(3))
    np.testing.assert_array_equal(pack.g_inv, np.eye(3))
    for t in (pack.B, pack.E, pack.L, pack.J):
        assert np.abs(t).max() == 0
    assert pack.Ric == 0
    d = C.uw(spec, f)
    assert d.U == pytest.approx(f.s, abs=1e-15) and d.W == 0
    report = C.residuals(spec, f)
    assert report.res_weak_berwald == 0 and report.res_flat_flag == 0
    assert report.res_weak_landsberg == 0 and report.res_landsberg_surface == 0


def test_euclidean_ricci_and_K():
    Ric, K = C.ricci(euclidean(), C.frame([1, 0], [0, 1]))
    assert Ric == 0 and K == 0


def test_riemann_metric_example():
    spec = riemann_quadratic()
    f = C.frame([1, 0], [0, 1])
    g, g_inv = C.metric_and_inverse(spec, f)
    np.testing.assert_allclose(g, [[2, 0], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(g_inv, [[0.5, 0], [0, 1]], atol=1e-15)
    sp = C.spray(spec, f)
    assert sp.P == pytest.approx(0, abs=1e-15) and sp.Q == pytest.approx(0.25, rel=1e-15)
    assert np.abs(C.berwald(spec, f)).max() < 1e-10


def test_bryant_spray_and_uw_example():
    f = C.frame([1, 0], [0, 1], BRYANT)
    sp = C.spray(BRYANT, f)
    assert sp.P == pytest.approx(2, rel=1e-15) and sp.Q == pytest.approx(0, abs=1e-15)
    assert C.uw(BRYANT, f).U == pytest.approx(4, rel=1e-12)


def test_bryant_residuals_example():
    f = C.frame([1, 0], [0, 1], BRYANT)
    report = C.residuals(BRYANT, f)
    assert abs(report.res_landsberg_surface) < 1e-9
    assert abs(report.res_flat_flag) < 1e-9
    assert max(abs(v) for v in report.res_flatness_system) < 1e-9
    # (n+1)/3 (3c-1)/sqrt(r^2-s^2) at n=2, c=2, r=1, s=0
    assert report.res_weak_berwald == pytest.approx(5.0, rel=1e-12)


@pytest.mark.parametrize("r,frac", [(0.7, 0.4), (1.3, 0.8), (1.9, 0.1)])
def test_bryant_mean_berwald_scalar(r, frac):
    f = unit_frame(r, frac, spec=BRYANT)
    _, wb = C.mean_berwald(BRYANT, f)
    assert wb == pytest.approx(5.0 / math.sqrt(r * r - f.s * f.s), rel=1e-12)


def test_bryant_flag_curvature_vanishes_everywhere_sampled():
    rng = np.random.default_rng(1)
    for _ in range(25):
        r = rng.uniform(0.5, 2.0)
        f = unit_frame(r, rng.uniform(0.05, 0.9), n=int(rng.integers(2, 4)), spec=BRYANT)
        assert abs(C.residuals(BRYANT, f).res_flat_flag) < 1e-9
        if f.n == 2:
            assert abs(C.ricci(BRYANT, f)[0]) < 1e-9


def test_bryant_berwald_nonzero_in_three_dimensions():
    f = C.frame([1.1, 0.0, 0.2], [0.3, 0.9, -0.4], BRYANT)
    B = C.berwald(BRYANT, f)
    B_fd = O.fd_berwald(BRYANT, f.x, f.y)
    assert np.linalg.norm(B) > 0.1
    assert rel(B, B_fd) < 1e-5


def test_bryant_surface_is_locally_berwald_in_two_dimensions():
    # in 2D the non-Berwald signal lives in the scalar weak-Berwald combination
    f = unit_frame(1.2, 0.4, spec=BRYANT)
    assert np.linalg.norm(C.berwald(BRYANT, f)) < 1e-12
    assert abs(C.mean_berwald(BRYANT, f)[1]) > 1


def test_offset_family_breaks_landsberg():
    spec = family(FamilyParams(f2=1.0, g_offset=0.1))
    worst = 0.0
    for r in (0.6, 1.0, 1.6):
        for frac in (0.2, 0.5, 0.8):
            f = unit_frame(r, frac, spec=spec)
            if f.valid:
                worst = max(worst, abs(C.residuals(spec, f).res_landsberg_surface))
    assert worst > 1e-3


def test_degenerate_metric_keeps_spray_residuals():
    spec = bryant(BryantParams(c=1.0))
    f = unit_frame(1.0, 0.5, spec=spec)
    report = C.residuals(spec, f)
    assert report.res_landsberg_surface is None and report.res_weak_landsberg is None
    assert math.isfinite(report.res_weak_berwald) and abs(report.res_flat_flag) < 1e-9
    with pytest.raises(SingularFrame):
        C.metric_tensor(spec, f)


# -- invariants --------------------------------------------------------------------

SPECS = [riemann_quadratic(), randers(), family(FamilyParams(f2=1.0)), BRYANT]
FRAMES = [([1.0, 0.2], [0.3, 1.1]), ([0.6, -0.5, 0.4], [0.2, 0.9, 0.4]), ([1.2, 0.0], [-0.2, 0.9])]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("x,y", FRAMES)
def test_metric_inverse(spec, x, y):
    f = C.frame(x, y, spec)
    g, g_inv = C.metric_and_inverse(spec, f)
    np.testing.assert_allclose(g @ g_inv, np.eye(f.n), atol=1e-12)
    assert np.all(g == g.T)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("x,y", FRAMES)
def test_homogeneity(spec, x, y):
    f = C.frame(x, y, spec)
    f2 = C.frame(x, 2 * np.asarray(y), spec)
    p, p2 = C.curvature_pack(spec, f), C.curvature_pack(spec, f2)
    kappa = p.spray.scale
    assert rel(p2.g, p.g) < 1e-12
    assert rel(p2.spray.G, 4 * p.spray.G) < 1e-12
    assert rel(p2.B, p.B / 2, kappa * 1e-3) < 1e-12
    assert rel(p2.E, p.E / 2, kappa * 1e-3) < 1e-12


@pytest.mark.parametrize("x,y", FRAMES)
def test_global_scale_invariance(x, y):
    spec = randers()
    big = doubled(spec)
    f = C.frame(x, y)
    p, q = C.curvature_pack(spec, f), C.curvature_pack(big, f)
    for a, b in [(p.spray.P, q.spray.P), (p.spray.Q, q.spray.Q), (p.spray.G, q.spray.G),
                 (p.B, q.B), (p.E, q.E)]:
        assert rel(a, b, 1e-3) < 1e-12
    assert rel(q.g, 4 * p.g) < 1e-12


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_symmetries_and_contractions(spec):
    f = C.frame([0.6, -0.5, 0.4], [0.2, 0.9, 0.4], spec)
    p = C.curvature_pack(spec, f)
    kappa = p.spray.scale
    B, L = p.B, p.L
    for perm in [(0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)]:
        assert np.abs(B - B.transpose(perm)).max() <= 1e-12 * max(np.abs(B).max(), kappa)
    for perm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)]:
        assert np.abs(L - L.transpose(perm)).max() <= 1e-12 * max(np.abs(L).max(), kappa)
    assert np.abs(p.E - p.E.T).max() <= 1e-12 * kappa
    nL = max(np.linalg.norm(L), kappa * 1e-3)
    assert np.linalg.norm(np.einsum("jkl,l->jk", L, f.y)) <= 1e-10 * nL * f.u
    assert np.linalg.norm(p.E @ f.y) <= 1e-10 * max(np.linalg.norm(p.E), kappa * 1e-3) * f.u
    assert abs(p.J @ f.y) <= 1e-12 * max(np.linalg.norm(p.J), kappa * 1e-3) * f.u
    assert rel(p.E, np.einsum("mijm->ij", B), kappa * 1e-3) < 1e-12
    assert rel(p.J, np.einsum("ijk,jk->i", L, p.g_inv), kappa * 1e-3) < 1e-12


def test_landsberg_scalar_relations_as_assembled():
    f = C.frame([0.6, -0.5, 0.4], [0.2, 0.9, 0.4])
    spec = randers()
    _, Ls = C.landsberg(spec, f)
    assert set(Ls) >= {"L1", "L2", "L3", "L4", "L5", "L6"}
    _, J1, J2 = C.mean_landsberg(spec, f)
    assert J2 == pytest.approx(-f.s * J1, rel=1e-15)


def test_randers_is_not_landsberg():
    # sanity: the closed forms do see nonzero Landsberg curvature when it exists
    spec = randers()
    f = C.frame([1.0, 0.2, 0.1], [0.3, 1.1, -0.2])
    L, _ = C.landsberg(spec, f)
    assert np.linalg.norm(L) > 1e-3
    g = C.metric_tensor(spec, f)
    L_fd = O.landsberg_identity(g, O.fd_berwald(spec, f.x, f.y), f.y)
    assert rel(L, L_fd) < 1e-4


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_rotation_equivariance(spec):
    f = C.frame([1.0, 0.2], [0.3, 1.1], spec)
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    fr = C.frame(R @ f.x, R @ f.y, spec)
    a, b = C.curvature_pack(spec, f), C.curvature_pack(spec, fr)
    kappa = a.spray.scale
    for key in ("P", "Q"):
        assert rel(getattr(a.spray, key), getattr(b.spray, key), 1e-3 * kappa) < 1e-12
    assert rel(a.Ric, b.Ric, kappa ** 2 * 1e-3) < 1e-12
    ra, rb = C.residuals(spec, f), C.residuals(spec, fr)
    assert rel(ra.res_weak_berwald, rb.res_weak_berwald, kappa * 1e-3) < 1e-12
    np.testing.assert_allclose(R @ a.spray.G, b.spray.G, rtol=1e-12, atol=1e-14)


def test_rotation_equivariance_three_dimensions():
    rng = np.random.default_rng(5)
    Rm, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    f = C.frame([0.6, -0.5, 0.4], [0.2, 0.9, 0.4], BRYANT)
    fr = C.frame(Rm @ f.x, Rm @ f.y, BRYANT)
    a, b = C.curvature_pack(BRYANT, f), C.curvature_pack(BRYANT, fr)
    B_rot = np.einsum("ia,jb,kc,ld,abcd->ijkl", Rm, Rm, Rm, Rm, a.B)
    assert rel(B_rot, b.B) < 1e-11
    assert rel(Rm @ a.g @ Rm.T, b.g) < 1e-12


# -- frame sharing -------------------------------------------------------------------

def test_frame_data_sharing_matches_fresh_evaluation():
    r, frac = 1.1, 0.45
    f1 = unit_frame(r, frac, spec=BRYANT)
    th = 1.3
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    f2 = C.frame(R @ f1.x, R @ f1.y, BRYANT)
    shared = C.frame_data(BRYANT, f1)
    pack_shared = C.curvature_pack(BRYANT, f2, C.frame_data(BRYANT, f2, shared))
    pack_fresh = C.curvature_pack(BRYANT, f2)
    assert rel(pack_shared.B, pack_fresh.B, 1e-3) < 1e-12
    assert rel(pack_shared.g, pack_fresh.g) < 1e-12
    assert pack_shared.Ric == pytest.approx(pack_fresh.Ric, abs=1e-12)


def test_frame_data_sharing_rejects_other_points():
    a = C.frame_data(BRYANT, unit_frame(1.0, 0.4, spec=BRYANT))
    with pytest.raises(ValueError):
        C.frame_data(BRYANT, unit_frame(1.0, 0.5, spec=BRYANT), a)
    with pytest.raises(ValueError):
        C.frame_data(euclidean(), unit_frame(1.0, 0.4), a)
