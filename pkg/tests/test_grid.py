import numpy as np
import pytest

from sphfinsler.errors import EmptyGridAfterGuards, ValidationError
from sphfinsler.grid import GridSpec, evaluate_grid, grid_frames, orient
from sphfinsler.metrics import BryantParams, FamilyParams, bryant, euclidean, family

SMALL = GridSpec(r_range=(0.6, 1.8, 4), s_fraction_range=(0.1, 0.8, 4), angle_count=3, seed=11)


def test_defaults():
    g = GridSpec()
    assert g.r_range == (0.5, 2.0, 16) and g.s_fraction_range == (0.05, 0.9, 16)
    assert g.size == 16 * 16 * 4
    np.testing.assert_allclose(g.radii[[0, -1]], [0.5, 2.0])


@pytest.mark.parametrize("kwargs", [
    {"r_range": (2.0, 1.0, 4)}, {"r_range": (0.5, 2.0, 0)}, {"s_fraction_range": (0.1, 1.0, 3)},
    {"angle_count": 0}, {"r_range": (-1.0, 1.0, 3)},
])
def test_validation(kwargs):
    with pytest.raises(ValidationError):
        GridSpec(**kwargs)


def test_orient_realizes_cell():
    x, y = orient(1.3, 0.4, 0.9, 3)
    assert np.linalg.norm(x) == pytest.approx(1.3)
    assert np.linalg.norm(y) == pytest.approx(1.0)
    assert x @ y == pytest.approx(0.4 * 1.3)


def test_frames_are_seeded():
    spec = euclidean()
    a = grid_frames(spec, SMALL, n=3)
    b = grid_frames(spec, SMALL, n=3)
    assert all(np.array_equal(p.frame.x, q.frame.x) and np.array_equal(p.frame.y, q.frame.y) for p, q in zip(a, b))
    for item in a:
        r, frac = SMALL.radii[item.cell[0]], SMALL.fractions[item.cell[1]]
        assert item.frame.r == pytest.approx(r, rel=1e-14) and item.frame.s == pytest.approx(frac * r, rel=1e-12)


def _aggregate(results):
    return [(res.item.cell, res.item.angle_index, res.report.res_weak_berwald, res.report.res_landsberg_surface,
             res.report.res_flat_flag) for res in results if res.valid]


def test_parallel_matches_serial_bitwise():
    spec = bryant(BryantParams(c=2.0))
    serial = _aggregate(evaluate_grid(spec, SMALL, workers=1))
    parallel = _aggregate(evaluate_grid(spec, SMALL, workers=4))
    assert serial == parallel


def test_grid_sharing_matches_independent_frames():
    from sphfinsler.curvature import residuals
    spec = family(FamilyParams(f2=1.0, c1=(0.2,)))
    for res in evaluate_grid(spec, SMALL):
        if res.valid:
            direct = residuals(spec, res.item.frame)
            assert res.report.res_weak_berwald == pytest.approx(direct.res_weak_berwald, rel=1e-12, abs=1e-14)
            assert res.report.res_landsberg_surface == pytest.approx(direct.res_landsberg_surface, abs=1e-12)


def test_empty_grid_after_guards():
    grid = GridSpec(r_range=(1.0, 1.5, 2), s_fraction_range=(0.9999, 0.99995, 2), angle_count=1)
    with pytest.raises(EmptyGridAfterGuards):
        evaluate_grid(euclidean(), grid)
