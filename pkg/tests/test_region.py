import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manetnum.channel import Link, LinkChannel, NetworkTopology, RateSet, max_goodput
from manetnum.region import (DroppingProfile, GoodputRegion, PowerGrid, contains, convex_hull_2d,
                             dominated, enumerate_region, hull_area, hull_contains, staircase_area,
                             success_grid)


def fig4():
    topo = NetworkTopology(np.ones((3, 3)) - np.eye(3), 1.0, 0.01, [2.0, 3.0, 1.0])
    ch = topo.link_channel([Link(0, 2), Link(1, 2)])
    return ch, PowerGrid([0.01, 0.01], [2.0, 3.0], 50), RateSet.arange(0.4, 1.8, 0.4)


def fig5():
    ch = LinkChannel([[1.0, 0.5], [0.8, 1.0]], 1.0)
    return ch, PowerGrid([0.01, 0.01], [10.0, 10.0], 50, "simplex", 10.0), RateSet((0.2, 0.4, 0.6))


def test_grid_validation():
    with pytest.raises(ValueError):
        PowerGrid([0.0], [1.0])
    with pytest.raises(ValueError):
        PowerGrid([1.0], [1.0], points=1)
    with pytest.raises(ValueError):
        PowerGrid([0.1, 0.1], [1.0, 1.0], kind="simplex")
    with pytest.raises(ValueError):
        DroppingProfile([1.2])


def test_simplex_grid_respects_budget():
    P = PowerGrid([0.1, 0.1], [10.0, 10.0], 30, "simplex", 10.0).vectors()
    assert np.all(P.sum(axis=1) <= 10.0 + 1e-9)
    assert len(P) < 900


def test_success_grid_matches_scalar():
    ch, grid, rates = fig4()
    P = grid.vectors()[::97]
    q = success_grid(ch, P, 0.8)
    from manetnum.channel import success_probability
    for k in range(len(P)):
        assert q[k, 1] == pytest.approx(success_probability(ch, P[k], 1, 0.8), rel=1e-13)


def test_delta_one_is_max_goodput():
    ch, grid, rates = fig4()
    reg = enumerate_region(ch, rates, grid)
    for k in (0, 333, 2499):
        for l in range(2):
            g, mu = max_goodput(ch, reg.powers[k], l, rates)
            assert reg.raw_points[k, l] == pytest.approx(g, rel=1e-13)
            assert reg.rates[k, l] == mu


def test_delta_zero_is_exact_box():
    ch, grid, rates = fig4()
    reg = enumerate_region(ch, rates, grid, DroppingProfile.uniform(0.0, 2))
    assert np.all(reg.raw_points == rates.max_rate)
    hull = reg.hull
    assert hull_area(hull) == pytest.approx(rates.max_rate ** 2, rel=1e-15)


def test_empty_rates_and_dimension():
    ch, grid, rates = fig4()
    with pytest.raises(ValueError):
        enumerate_region(ch, rates, PowerGrid([0.1], [1.0]))


def test_figure4_hull_strictly_larger_than_staircase():
    ch, grid, rates = fig4()
    reg = enumerate_region(ch, rates, grid)
    assert hull_area(reg.hull) > staircase_area(reg.raw_points) * 1.01
    assert all(contains(reg, p) for p in reg.raw_points)


def test_figure5_region_under_sum_power():
    ch, grid, rates = fig5()
    reg = enumerate_region(ch, rates, grid)
    assert np.all(reg.powers.sum(axis=1) <= 10.0 + 1e-9)
    assert np.all(reg.raw_points <= 0.6) and np.all(reg.raw_points > 0)
    assert all(contains(reg, p) for p in reg.raw_points)


def test_hull_examples():
    h = convex_hull_2d([[2.0, 3.0]])
    assert {tuple(v) for v in h} == {(0, 0), (2, 0), (0, 3), (2, 3)}
    line = convex_hull_2d([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    assert {tuple(v) for v in line} == {(0, 0), (3, 0), (0, 3), (3, 3)}
    # collinear on an axis: degenerate segment
    seg = convex_hull_2d([[1.0, 0.0], [2.0, 0.0]])
    assert len(seg) == 2
    assert hull_contains(seg, [1.5, 0.0]) and not hull_contains(seg, [1.5, 0.1])
    # a subnormal segment squares to zero length
    tiny = convex_hull_2d([[0.0, 1.1125369292536007e-308]])
    assert hull_contains(tiny, [0.0, 1.1125369292536007e-308], tol=1e-9)


def test_hull_is_counter_clockwise():
    rng = np.random.default_rng(0)
    h = convex_hull_2d(rng.uniform(0, 1, (40, 2)))
    assert hull_area(h) > 0


def test_contains_examples():
    ch, grid, rates = fig4()
    reg = enumerate_region(ch, rates, grid)
    assert contains(reg, [0.0, 0.0])
    assert not contains(reg, [rates.max_rate + 0.01, 0.0])
    assert not contains(reg, [-0.1, 0.1])
    for v in reg.hull:
        assert contains(reg, v)
    with pytest.raises(ValueError):
        contains(GoodputRegion(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3))), [0, 0, 0])


def test_dominance_for_three_links():
    ch = LinkChannel(np.full((3, 3), 0.3) + 0.7 * np.eye(3), 0.5)
    reg = enumerate_region(ch, RateSet((0.5, 1.0)), PowerGrid([0.1] * 3, [2.0] * 3, 8))
    assert reg.hull is None
    assert dominated(reg, reg.raw_points[5] * 0.5)
    assert not dominated(reg, [1.01, 0.0, 0.0])


def test_nesting_in_delta():
    ch, _, rates = fig4()
    grid = PowerGrid([0.01, 0.01], [2.0, 3.0], 25)
    regs = {d: enumerate_region(ch, rates, grid, DroppingProfile.uniform(d, 2)) for d in (1.0, 0.7, 0.3, 0.0)}
    for hi, lo in ((1.0, 0.7), (0.7, 0.3), (0.3, 0.0)):
        assert all(contains(regs[lo], p) for p in regs[hi].raw_points)


def test_refinement_never_shrinks_hull():
    ch, _, rates = fig4()
    coarse = enumerate_region(ch, rates, PowerGrid([0.01, 0.01], [2.0, 3.0], 11))
    fine = enumerate_region(ch, rates, PowerGrid([0.01, 0.01], [2.0, 3.0], 21))  # contains coarse grid
    assert hull_area(fine.hull) >= hull_area(coarse.hull) - 1e-12
    assert all(contains(fine, v) for v in coarse.hull)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=30))
def test_hull_contains_its_points(pts):
    h = convex_hull_2d(pts)
    for p in pts:
        assert hull_contains(h, p, tol=1e-9)
    assert hull_contains(h, [0.0, 0.0], tol=1e-9)
