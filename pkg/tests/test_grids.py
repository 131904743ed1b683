import numpy as np
import pytest

from cgflow.grids import (
    AdaptedCube,
    BadPartition,
    TriadicCube,
    adapted_cells,
    concentric_cube,
    partition,
    whitney_partition,
)


def cells_set(cube):
    return {tuple(c) for c in cube.cells()}


def test_unit_partition_counts():
    cube = TriadicCube(1, (0, 0), 2)
    subs = partition(cube, 0)
    assert len(subs) == 9
    assert all(s.side == 1 for s in subs)
    cube2 = TriadicCube(2, (0, 0), 2)
    subs2 = partition(cube2, 1)
    assert len(subs2) == 9
    assert all(s.side == 3 for s in subs2)


def test_partition_is_exact_cell_partition():
    cube = TriadicCube(2, (9, -9), 2)
    for k in (0, 1, 2):
        subs = partition(cube, k)
        assert len(subs) == 3 ** (2 * (2 - k))
        union = set()
        total = 0
        for s in subs:
            cs = cells_set(s)
            total += len(cs)
            union |= cs
        assert total == cube.volume
        assert union == cells_set(cube)


def test_partition_lexicographic_and_errors():
    cube = TriadicCube(1, (0, 0, 0), 3)
    subs = partition(cube, 0)
    bases = [s.base for s in subs]
    assert bases == sorted(bases)
    with pytest.raises(BadPartition):
        partition(cube, 2)


def test_adapted_cells_identity_matches_euclidean():
    # q0 = I: the adapted cube is a euclidean cube; the half-open window
    # [-L/2, L/2) selects a contiguous L x L block of cells
    for level in (0, 1, 2):
        ac = AdaptedCube(level, (0.0, 0.0), np.eye(2))
        cells = adapted_cells(ac)
        L = 3**level
        assert cells.shape[0] == L * L
        lo = cells.min(axis=0)
        got = {tuple(c) for c in cells}
        want = {(lo[0] + i, lo[1] + j) for i in range(L) for j in range(L)}
        assert got == want


def test_adapted_cells_level0_single_cell():
    ac = AdaptedCube(0, (0.0, 0.0), np.eye(2))
    assert adapted_cells(ac).shape[0] == 1


def test_adapted_cells_count_volume_bound():
    q0 = np.diag([1.0, 1.8])
    pi_half = 1.8  # Pi^{1/2} upper scale for this diagonal q0
    for level in (1, 2, 3):
        ac = AdaptedCube(level, (0.0, 0.0), q0)
        count = adapted_cells(ac).shape[0]
        vol = 3 ** (2 * level)
        # volume of image is det(q0) * vol; allow one layer of boundary cells
        det = np.linalg.det(q0)
        boundary = 4 * pi_half * 3**level + 4
        assert det * vol - boundary <= count <= det * vol + boundary
        assert count <= 1.01**2 * pi_half**2 * vol + boundary


def test_whitney_identity_is_single_cube():
    ac = AdaptedCube(2, (0.0, 0.0), np.eye(2))
    parts = whitney_partition(ac)
    # centered euclidean cube is lattice-misaligned, so the cover may split,
    # but it must be exact and contain at least one level-2-sized total
    total = sum(p.volume for p in parts)
    assert total == adapted_cells(ac).shape[0]


def test_whitney_aligned_identity_single_cube():
    # shift so the adapted (= euclidean) cube is lattice aligned
    L = 9
    ac = AdaptedCube(2, (L / 2.0, L / 2.0), np.eye(2))
    parts = whitney_partition(ac)
    assert len(parts) == 1
    assert parts[0].level == 2
    assert parts[0].base == (0, 0)


def test_whitney_partition_exact_and_histogram_decays():
    ac = AdaptedCube(3, (13.5, 13.5), np.diag([1.0, 1.8]))
    cells = {tuple(c) for c in adapted_cells(ac)}
    parts = whitney_partition(ac)
    seen = set()
    for p in parts:
        cs = {tuple(c) for c in p.cells()}
        assert cs <= cells
        assert not (cs & seen)
        seen |= cs
    assert seen == cells
    vol = len(cells)
    hist = {}
    for p in parts:
        hist[p.level] = hist.get(p.level, 0) + p.volume
    # per-level volume fraction <= C * Pi^(1/2) * 3^(j - n)
    pi_sqrt = 1.8
    for j, v in hist.items():
        assert v / vol <= 6.0 * pi_sqrt * 3.0 ** (j - ac.level)


def test_concentric_cube():
    cube = TriadicCube(3, (0, 0), 2)
    inner = concentric_cube(cube, 1)
    assert inner.base == (12, 12)
    assert cells_set(inner) <= cells_set(cube)
