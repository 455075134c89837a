import math

import pytest
from scipy.optimize import brentq

from relaytherm.config import current_settings, settings_override
from relaytherm.core.errors import ConfigurationError
from relaytherm.models import BifurcationKind, BifurcationPoint, CrossingCheck
from relaytherm.services import bifurcation, periodic


def _nearest(points, kind, s):
    candidates = [p for p in points if p.kind is kind]
    assert candidates, f"no {kind.value} point"
    return min(candidates, key=lambda p: abs(p.s - s))


def test_classify_s_rejects_nonpositive(rod2):
    with pytest.raises(ConfigurationError):
        bifurcation.classify_s(rod2, 0.0)


def test_classify_s_regular_points(rod2):
    assert bifurcation.classify_s(rod2, 1.0) is None  # F < 0
    assert bifurcation.classify_s(rod2, 0.2) is None  # valid, transversal


def test_classify_s_at_F_zero(rod2):
    # F changes sign on the decreasing branch between 0.7 and 0.8
    s0 = brentq(lambda s: periodic.char_F(rod2, s), 0.7, 0.8)
    point = bifurcation.classify_s(rod2, s0)
    assert point is not None
    assert point.kind is BifurcationKind.s0


def test_classify_s_at_switching_tangency(rod2):
    s1 = brentq(lambda s: periodic.char_H_t(rod2, s, s), 0.1, 0.5, xtol=1e-15)
    point = bifurcation.classify_s(rod2, s1)
    assert point is not None
    assert point.kind is BifurcationKind.s1_graze_valid


def test_classify_s_reports_mixed_interior_roots(rod2, monkeypatch):
    # one tangential and one transversal interior root at a point where F > 0
    check = CrossingCheck(valid=False, margin=0.0, tau_set=(0.05, 0.12), grazing=True, endpoint_rate=0.5)
    monkeypatch.setattr(periodic, "first_crossing_check", lambda system, s: check)
    monkeypatch.setattr(periodic, "char_H_t", lambda system, t, s: 0.0 if t == 0.05 else -0.3)
    point = bifurcation.classify_s(rod2, 0.2)
    assert point is not None
    assert point.kind is BifurcationKind.mixed
    assert point.detail.startswith("mixed")
    assert "0.05" in point.detail and "0.12" in point.detail


def test_diagram_row(rod32):
    row = bifurcation.diagram_row(rod32, 0.3)
    assert row.F == pytest.approx(periodic.char_F(rod32, 0.3))
    assert row.valid
    assert not row.grazing


def test_scan_rejects_bad_range(rod2):
    with pytest.raises(ConfigurationError):
        bifurcation.scan_diagram(rod2, 1.0, 0.5, 10)
    with pytest.raises(ConfigurationError):
        bifurcation.scan_diagram(rod2, 0.1, 0.5, 1)


def test_single_mode_scan_has_no_points(single_mode):
    rows, points = bifurcation.scan_diagram(single_mode, 0.01, 6.0, 50)
    assert len(rows) == 50
    assert points == []
    assert all(row.valid for row in rows)


@pytest.mark.slow
def test_scan_rod2_reproduces_grazing_points(rod2):
    _, points = bifurcation.scan_diagram(rod2, 0.01, 6.0, 400)
    a = _nearest(points, BifurcationKind.s1_graze_valid, 0.26)
    assert a.s == pytest.approx(0.26, abs=0.01)
    assert a.gap == pytest.approx(0.23, abs=0.01)
    b = _nearest(points, BifurcationKind.s2_graze_invalid, 4.10)
    assert b.s == pytest.approx(4.10, abs=0.02)
    assert b.gap == pytest.approx(0.04, abs=0.005)
    assert [p.s for p in points] == sorted(p.s for p in points)


@pytest.mark.slow
def test_scan_rod32_reproduces_fold_and_grazing(rod32):
    _, points = bifurcation.scan_diagram(rod32, 0.01, 6.0, 400)
    kinds = {BifurcationKind.s1_graze_valid, BifurcationKind.s2_graze_invalid}
    grazing = [p for p in points if p.kind in kinds]
    for s, gap, s_tol in ((0.75, 0.51, 0.01), (1.74, 0.26, 0.02)):
        p = min(grazing, key=lambda q: abs(q.s - s))
        assert p.s == pytest.approx(s, abs=s_tol)
        assert p.gap == pytest.approx(gap, abs=0.01)
    fold = _nearest(points, BifurcationKind.s3_fold, 0.55)
    assert fold.s == pytest.approx(0.55, abs=0.01)
    assert fold.gap == pytest.approx(0.56, abs=0.01)


def test_sigma_values_skip_F_zeros():
    points = [
        BifurcationPoint(s=0.7, gap=0.0, kind=BifurcationKind.s0),
        BifurcationPoint(s=0.5, gap=0.3, kind=BifurcationKind.s3_fold),
        BifurcationPoint(s=0.2, gap=0.1, kind=BifurcationKind.s1_graze_valid),
        BifurcationPoint(s=0.9, gap=0.3, kind=BifurcationKind.s2_graze_invalid),
    ]
    assert bifurcation.sigma_values(points) == [0.1, 0.3]


def test_near_bifurcation_window():
    assert bifurcation.near_bifurcation(0.23005, [0.23])
    assert not bifurcation.near_bifurcation(0.2302, [0.23])
    assert bifurcation.near_bifurcation(0.2302, [0.23], window=1e-3)


def test_count_solutions_vs_gap(rod2, rod32):
    counts = bifurcation.count_solutions_vs_gap(rod2, [0.01, 0.23])
    assert [(c.n_valid, c.n_ghost) for c in counts] == [(1, 2), (2, 1)]
    (count,) = bifurcation.count_solutions_vs_gap(rod32, [0.40])
    assert (count.gap, count.n_valid, count.n_ghost) == (0.40, 2, 1)


def test_count_rejects_nonpositive_gap(rod2):
    with pytest.raises(ConfigurationError):
        bifurcation.count_solutions_vs_gap(rod2, [0.1, 0.0])


def test_pool_map_preserves_order():
    assert bifurcation.pool_map(math.sqrt, [1.0, 4.0, 9.0, 16.0], workers=2) == [1.0, 2.0, 3.0, 4.0]


def test_pool_map_serial_by_default():
    assert bifurcation.pool_map(abs, [-1, 2, -3]) == [1, 2, 3]


def _graze_tol(_):
    return current_settings().graze_tol


def test_worker_settings_follow_override():
    with settings_override(graze_tol=1e-6):
        assert bifurcation.pool_map(_graze_tol, [0, 1, 2], workers=2) == [1e-6, 1e-6, 1e-6]
    assert current_settings().graze_tol == 1e-8


def test_fold_changes_root_count_by_two(rod32):
    s_fold = brentq(lambda s: periodic.char_F_prime(rod32, s), 0.4, 0.7, xtol=1e-14)
    F_fold = periodic.char_F(rod32, s_fold)
    assert bifurcation.classify_s(rod32, s_fold).kind is BifurcationKind.s3_fold
    below, above = F_fold - 1e-3, F_fold + 1e-3
    s_max = periodic.large_root_bound(rod32, above)
    n_below = len(periodic.find_F_roots(rod32, below, s_max))
    n_above = len(periodic.find_F_roots(rod32, above, s_max))
    assert n_below - n_above == 2
    assert n_above == 1
