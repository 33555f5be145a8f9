import numpy as np
import pytest

from stokesdd import (
    GridMismatchError,
    InvalidPartitionError,
    VelocityField,
    build_strips,
    decompose,
    dot_decomposed,
    dot_velocity,
    make_grid,
    recompose,
)
from stokesdd.verify import make_rng, random_velocity


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("overlap", [0, 1, 2])
def test_partition_of_unity(m, overlap):
    g = make_grid(1.0, 1.0, 16, 12)
    part = build_strips(g, m, overlap)
    total = sum(chi.eta**2 for chi in part.masks)
    assert np.max(np.abs(total - 1.0)) <= 1e-14


def test_single_strip_is_identity():
    g = make_grid(1.0, 1.0, 8, 8)
    part = build_strips(g, 1, 3)
    assert part.m == 1
    assert np.array_equal(part.masks[0].eta, np.ones(g.shape))


def test_zero_overlap_gives_indicators():
    g = make_grid(1.0, 1.0, 9, 4)
    part = build_strips(g, 3, 0)
    for chi in part.masks:
        vals = np.unique(chi.eta)
        assert set(vals.tolist()) <= {0.0, 1.0}
    # strips tile the first direction without double counting
    total = sum(chi.eta for chi in part.masks)
    assert np.max(np.abs(total - 1.0)) <= 1e-15


def test_uneven_split_puts_wider_strips_first():
    # n1 = 10 over m = 3 splits as 4 + 3 + 3 cells, remainder to the left
    g = make_grid(1.0, 1.0, 10, 4)
    part = build_strips(g, 3, 0)
    assert part.extents == [(0, 3), (4, 6), (7, 10)]


def test_extents_cover_support():
    g = make_grid(1.0, 1.0, 16, 8)
    part = build_strips(g, 3, 2)
    for chi, (lo, hi) in zip(part.masks, part.extents):
        rows = np.nonzero(np.any(chi.eta > 0, axis=1))[0]
        assert rows.min() >= lo and rows.max() <= hi
        # and the support actually reaches both declared ends
        assert rows.min() == lo and rows.max() == hi
    assert part.extents[0][0] == 0
    assert part.extents[-1][1] == g.n1


def test_masks_constant_in_second_direction():
    g = make_grid(1.0, 1.0, 12, 7)
    part = build_strips(g, 2, 3)
    for chi in part.masks:
        assert np.allclose(chi.eta, chi.eta[:, :1])


@pytest.mark.parametrize(
    "m,overlap,n1",
    [(0, 0, 8), (-1, 0, 8), (2, -1, 8), (4, 2, 8), (3, 1, 3)],
)
def test_build_strips_rejects(m, overlap, n1):
    # last two violate floor(n1/m) > overlap
    g = make_grid(1.0, 1.0, n1, 4)
    with pytest.raises(InvalidPartitionError):
        build_strips(g, m, overlap)


def test_build_strips_rejects_non_integer():
    g = make_grid(1.0, 1.0, 8, 8)
    with pytest.raises(InvalidPartitionError):
        build_strips(g, 2.5, 1)
    with pytest.raises(InvalidPartitionError):
        build_strips(g, 2, 0.5)


@pytest.mark.parametrize("m,overlap", [(1, 0), (2, 0), (2, 2), (3, 1), (4, 1)])
def test_decompose_recompose_roundtrip(m, overlap):
    g = make_grid(1.3, 0.8, 12, 9)
    part = build_strips(g, m, overlap)
    u = random_velocity(g, make_rng(55))
    U = decompose(part, u)
    assert U.m == m
    v = recompose(part, U)
    assert np.max(np.abs(v.u1 - u.u1)) <= 1e-14 * max(np.max(np.abs(u.u1)), 1.0)
    assert np.max(np.abs(v.u2 - u.u2)) <= 1e-14 * max(np.max(np.abs(u.u2)), 1.0)


def test_decompose_is_isometry():
    # sum chi^2 = 1 makes ||decompose(u)|| = ||u|| exactly up to roundoff
    g = make_grid(1.0, 1.0, 16, 16)
    part = build_strips(g, 3, 2)
    u = random_velocity(g, make_rng(57))
    U = decompose(part, u)
    assert dot_decomposed(U, U) == pytest.approx(dot_velocity(u, u), rel=1e-13)


def test_decompose_components_live_on_strips():
    g = make_grid(1.0, 1.0, 12, 6)
    part = build_strips(g, 3, 1)
    u = VelocityField(g, np.ones(g.shape), np.ones(g.shape))
    U = decompose(part, u)
    for comp, (lo, hi) in zip(U.components, part.extents):
        assert np.all(comp.u1[:lo, :] == 0.0)
        assert np.all(comp.u1[hi + 1 :, :] == 0.0)


def test_recompose_component_count_mismatch():
    g = make_grid(1, 1, 8, 8)
    part = build_strips(g, 2, 1)
    other = build_strips(g, 3, 1)
    U = decompose(other, random_velocity(g, make_rng(1)))
    with pytest.raises(GridMismatchError):
        recompose(part, U)
