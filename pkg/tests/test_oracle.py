import math

import numpy as np
import pytest

from sphfinsler import curvature as C
from sphfinsler import jet as J
from sphfinsler import oracle as O
from sphfinsler.errors import OrderOutOfRange, SingularFrame, StencilCrossesSingularSet
from sphfinsler.metrics import BryantParams, FamilyParams, PhiForm, bryant, euclidean, family, riemann_quadratic

RANDERS = PhiForm(lambda r, s: J.sqrt(1.0 + s * s) + 0.2 * s, name="randers")
BRYANT = bryant(BryantParams(c=2.0))


def rel(a, b, floor=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor, 1e-300)


def test_F_value_examples():
    assert O.F_value(euclidean(), [1, 0], [3, 4]) == 5.0
    assert O.F_value(riemann_quadratic(), [1, 0], [1, 1]) == pytest.approx(math.sqrt(3), rel=1e-15)
    x, y = np.array([0.8, 0.3]), np.array([0.2, 0.9])
    assert O.F_value(BRYANT, x, 2 * y) == pytest.approx(2 * O.F_value(BRYANT, x, y), rel=1e-14)
    with pytest.raises(SingularFrame):
        O.F_value(euclidean(), [0, 0], [1, 0])


def test_euclidean_oracle_vanishes():
    x, y = [0.7, -0.4], [0.3, 0.8]
    assert np.abs(O.fd_spray(euclidean(), x, y)).max() < 1e-9
    assert np.abs(O.fd_berwald(euclidean(), x, y, mode="full")).max() < 1e-7
    assert abs(O.fd_ricci(euclidean(), x, y, mode="full")) < 1e-7
    np.testing.assert_allclose(O.fd_metric(euclidean(), x, y), np.eye(2), atol=1e-8)
    B = O.fd_berwald(euclidean(), x, y, mode="full")
    assert np.abs(O.landsberg_identity(np.eye(2), B, y)).max() < 1e-7


def test_riemann_oracle_examples():
    x, y = np.array([1.0, 0.0]), np.array([0.4, 1.3])
    u2 = y @ y
    G = O.fd_spray(riemann_quadratic(), x, y)
    assert rel(G, u2 * x / 4) < 1e-6
    assert np.abs(O.fd_berwald(riemann_quadratic(), x, y)).max() < 1e-6
    # differencing F itself nests two levels, so a larger step keeps rounding in check
    assert np.abs(O.fd_berwald(riemann_quadratic(), x, y, O.FdSpec(h_rel=1e-4), mode="full")).max() < 1e-6
    f = C.frame(x, y)
    Ric = C.ricci(riemann_quadratic(), f)[0]
    assert O.fd_ricci(riemann_quadratic(), x, y) == pytest.approx(Ric, rel=1e-4)
    assert O.fd_ricci(riemann_quadratic(), x, y, mode="full") == pytest.approx(Ric, rel=1e-4)


def test_bryant_oracle_ricci_vanishes():
    x, y = np.array([1.1, 0.2]), np.array([0.3, 1.0])
    u2 = y @ y
    assert abs(O.fd_ricci(BRYANT, x, y)) < 1e-4 * u2
    assert abs(O.fd_ricci(BRYANT, x, y, mode="full")) < 1e-4 * u2


@pytest.mark.parametrize("spec", [RANDERS, BRYANT, riemann_quadratic()], ids=lambda s: s.name)
def test_oracle_matches_engine(spec):
    x, y = np.array([0.9, 0.3, -0.2]), np.array([0.1, 0.8, 0.5])
    f = C.frame(x, y, spec)
    pack = C.curvature_pack(spec, f)
    kappa = pack.spray.scale
    assert rel(O.fd_metric(spec, x, y), pack.g) < 1e-6
    assert rel(O.fd_spray(spec, x, y), pack.spray.G) < 1e-6
    assert rel(O.fd_berwald(spec, x, y), pack.B, kappa / f.u) < 1e-5
    assert rel(O.fd_ricci(spec, x, y), pack.Ric, f.u ** 2 * kappa ** 2) < 1e-5


def test_landsberg_identity_contraction():
    x, y = np.array([1.0, 0.2, 0.1]), np.array([0.3, 1.1, -0.2])
    # with finite-difference inputs the contraction vanishes only to the FD accuracy of B
    g = O.fd_metric(RANDERS, x, y)
    L = O.landsberg_identity(g, O.fd_berwald(RANDERS, x, y), y)
    assert np.linalg.norm(np.einsum("jkl,l->jk", L, y)) < 1e-5 * np.linalg.norm(L)
    # exact inputs contract to rounding level
    f = C.frame(x, y)
    pack = C.curvature_pack(RANDERS, f)
    L_exact = O.landsberg_identity(pack.g, pack.B, y)
    assert np.linalg.norm(np.einsum("jkl,l->jk", L_exact, y)) < 1e-9 * np.linalg.norm(L_exact)


def test_oracle_homogeneity():
    x, y = np.array([0.9, 0.3]), np.array([0.1, 0.8])
    g1, g2 = O.fd_metric(RANDERS, x, y), O.fd_metric(RANDERS, x, 2 * y)
    assert rel(g2, g1) < 1e-7
    assert rel(O.fd_spray(RANDERS, x, 2 * y), 4 * O.fd_spray(RANDERS, x, y)) < 1e-7
    B1, B2 = O.fd_berwald(RANDERS, x, y), O.fd_berwald(RANDERS, x, 2 * y)
    assert rel(B2, B1 / 2) < 1e-5


def test_convergence_with_step():
    x, y = np.array([0.9, 0.3, -0.2]), np.array([0.1, 0.8, 0.5])
    f = C.frame(x, y)
    B = C.berwald(RANDERS, f)
    errs = [rel(O.fd_berwald(RANDERS, x, y, O.FdSpec(h_rel=h), mode="full"), B) for h in (1e-3, 1e-4, 1e-5)]
    assert errs[1] < errs[0] and errs[2] < errs[1]
    g = C.metric_tensor(RANDERS, f)
    gerr = [rel(O.fd_metric(RANDERS, x, y, O.FdSpec(h_rel=h, richardson=False)), g) for h in (1e-3, 1e-4)]
    assert gerr[1] < gerr[0]


def test_sign_calibration_is_global():
    cal = O.SignCalibrator()
    specs = [RANDERS, BRYANT]
    frames = [([1.0, 0.2, 0.1], [0.3, 1.1, -0.2]), ([0.8, -0.3, 0.2], [0.2, 0.6, 0.9])]
    for spec in specs:
        for x, y in frames:
            f = C.frame(x, y, spec)
            pack = C.curvature_pack(spec, f)
            L_o = O.landsberg_identity(pack.g, O.fd_berwald(spec, f.x, f.y), f.y)
            kappa = pack.spray.scale
            cal.check(pack.L, L_o, 1e-4, kappa * pack.phi ** 2, label=spec.name)
    assert cal.sigma == 1
    assert cal.mismatches == []


def test_sign_calibrator_records_disagreement():
    cal = O.SignCalibrator()
    L = np.ones((2, 2, 2))
    assert cal.check(L, L, 1e-4, 1.0) == 0.0
    assert cal.check(L, -L, 1e-4, 1.0, label="flip") > 1
    assert cal.sigma == 1 and len(cal.mismatches) == 1 and "flip" in cal.mismatches[0]


def test_full_mode_needs_phi_in_r():
    spec = family(FamilyParams(f2=1.0))
    x, y = [1.0, 0.0], [0.3, 0.9]
    with pytest.raises(OrderOutOfRange):
        O.fd_spray(spec, x, y)
    with pytest.raises(OrderOutOfRange):
        O.fd_berwald(spec, x, y, mode="full")
    # semi mode differentiates the closed-form spray and works for families
    B = O.fd_berwald(spec, x, y)
    f = C.frame(x, y, spec)
    assert rel(B, C.berwald(spec, f), 1.0) < 1e-5


def test_stencil_guard():
    with pytest.raises(StencilCrossesSingularSet):
        O.fd_berwald(RANDERS, [1.0, 0.0], [1.0, 1e-3], O.FdSpec(h_rel=1e-2))


@pytest.mark.parametrize("h", [0.0, 1e-9, 0.5])
def test_fd_spec_validation(h):
    with pytest.raises(ValueError):
        O.FdSpec(h_rel=h)


def test_fd_spec_steps_and_modes():
    fd = O.FdSpec(h_rel=1e-6)
    assert fd.step(1) == pytest.approx(1e-6)
    assert fd.step(2, "inner") > fd.step(2) and fd.step(2, "outer") > fd.step(2, "inner")
    with pytest.raises(ValueError):
        fd.step(1, "middle")
    with pytest.raises(ValueError):
        O.fd_berwald(RANDERS, [1.0, 0.0], [0.3, 0.9], mode="off")


def test_derivatives_on_polynomial():
    def f(z):
        return z[:, 0] ** 3 * z[:, 1] ** 2

    z0 = np.array([[1.5, -0.7]])
    out = O.derivatives(f, z0, np.ones((1, 2)), [(0,), (0, 1), (0, 0, 1)], 1e-3)
    np.testing.assert_allclose(out[:, 0], [3 * 1.5 ** 2 * 0.49, 6 * 1.5 ** 2 * -0.7, 12 * 1.5 * -0.7], rtol=1e-6)
