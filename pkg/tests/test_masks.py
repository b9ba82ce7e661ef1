import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lotus_eval.masks import (BoundaryPointSet, MaskSlice, MaskVolume, VoxelSpacing, boundary_points,
                              connected_components, extract_slice)
from oracles import brute_boundary, flood_fill_labels, same_partition

masks_2d = arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def test_spacing_must_be_positive():
    with pytest.raises(ValueError):
        VoxelSpacing(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        VoxelSpacing(-1.0, 1.0, 1.0)


def test_volume_rejects_non_binary_values():
    with pytest.raises(ValueError):
        MaskVolume(np.full((1, 2, 2), 2, dtype=np.uint8))


def test_volume_is_read_only():
    vol = MaskVolume(np.zeros((2, 3, 4), np.uint8))
    assert vol.dims == (4, 3, 2)
    with pytest.raises(ValueError):
        vol.voxels[0, 0, 0] = True


def test_extract_slice_full_plane():
    arr = np.zeros((3, 4, 4), bool)
    arr[1] = True
    s = extract_slice(MaskVolume(arr), 1)
    assert s.z_index == 1
    assert s.count == 16


def test_extract_slice_out_of_range():
    vol = MaskVolume.zeros(4, 4, 3)
    with pytest.raises(IndexError):
        extract_slice(vol, 3)
    with pytest.raises(IndexError):
        extract_slice(vol, -1)


def test_extract_slice_checkerboard():
    arr = np.zeros((2, 5, 6), bool)
    arr[1] = (np.add.outer(np.arange(5), np.arange(6)) % 2).astype(bool)
    s = extract_slice(MaskVolume(arr, VoxelSpacing(0.5, 0.7, 2.0)), 1)
    assert np.array_equal(s.voxels, arr[1])
    assert s.spacing == (0.5, 0.7)


def test_boundary_of_empty_mask_is_empty():
    assert boundary_points(MaskSlice(np.zeros((5, 5), bool))).is_empty()


def test_isolated_voxel_is_its_own_boundary():
    m = np.zeros((6, 6), bool)
    m[3, 2] = True  # x=2, y=3
    assert boundary_points(MaskSlice(m)).as_set() == {(2.0, 3.0)}


def test_solid_square_boundary_count():
    m = np.zeros((14, 14), bool)
    m[2:12, 2:12] = True
    pts = boundary_points(MaskSlice(m))
    assert len(pts) == 36
    assert pts.as_set() == brute_boundary(m, (1.0, 1.0))


def test_boundary_uses_spacing():
    m = np.ones((3, 3), bool)
    pts = boundary_points(MaskSlice(m, spacing=(0.5, 2.0)))
    assert (1.0, 4.0) in pts.as_set()
    assert (0.5, 2.0) not in pts.as_set()  # centre voxel is interior


def test_volume_boundary_matches_scan():
    rng = np.random.default_rng(3)
    arr = rng.random((4, 6, 7)) < 0.6
    sp = (0.5, 1.5, 2.5)
    pts = boundary_points(MaskVolume(arr, VoxelSpacing(*sp)))
    assert pts.as_set() == brute_boundary(arr, sp)


def test_connectivity_mismatch_rejected():
    with pytest.raises(ValueError):
        boundary_points(MaskSlice(np.ones((2, 2), bool)), "volumetric-6")


@settings(max_examples=150, deadline=None)
@given(masks_2d)
def test_boundary_matches_brute_scan(m):
    pts = boundary_points(MaskSlice(m))
    assert pts.as_set() == brute_boundary(m, (1.0, 1.0))
    assert len(pts) <= m.sum()
    assert pts.is_empty() == (not m.any())


@settings(max_examples=100, deadline=None)
@given(masks_2d)
def test_boundary_translates_with_padding(m):
    padded = np.pad(m, 3)
    a = boundary_points(MaskSlice(m)).as_set()
    b = boundary_points(MaskSlice(padded)).as_set()
    assert b == {(x + 3.0, y + 3.0) for x, y in a}


@settings(max_examples=100, deadline=None)
@given(masks_2d)
def test_peeling_boundary_gives_boundary_of_eroded_shape(m):
    from scipy import ndimage

    pts = boundary_points(MaskSlice(m))
    peeled = m.copy()
    for x, y in pts.coords.astype(int):
        peeled[y, x] = False
    eroded = ndimage.binary_erosion(m, ndimage.generate_binary_structure(2, 1), border_value=0)
    assert np.array_equal(peeled, eroded)


def test_thin_line_all_boundary():
    m = np.zeros((5, 9), bool)
    m[2, 1:8] = True
    assert len(boundary_points(MaskSlice(m))) == 7


def test_components_empty():
    assert connected_components(MaskSlice(np.zeros((4, 4), bool))).count == 0


def test_diagonal_pair_adjacency():
    m = np.zeros((3, 3), bool)
    m[0, 0] = m[1, 1] = True
    assert connected_components(MaskSlice(m), 4).count == 2
    assert connected_components(MaskSlice(m), 8).count == 1


def test_components_reject_bad_connectivity():
    with pytest.raises(ValueError):
        connected_components(np.ones((2, 2), bool), 6)


@pytest.mark.parametrize("conn", [4, 8])
def test_components_match_flood_fill(conn):
    rng = np.random.default_rng(conn)
    for _ in range(20):
        m = rng.random((64, 64)) < 0.45
        regions = connected_components(MaskSlice(m), conn)
        ref, n = flood_fill_labels(m, conn)
        assert regions.count == n
        assert same_partition(regions.labels, ref)
        assert sorted(regions.areas) == list(range(1, n + 1))
        assert sum(regions.areas.values()) == m.sum()
        for label, box in regions.bboxes.items():
            assert (regions.labels[box] == label).sum() == regions.areas[label]


def test_point_set_shape_checks():
    with pytest.raises(ValueError):
        BoundaryPointSet(np.zeros((3, 3)), (1.0, 1.0))
    pts = BoundaryPointSet.from_points([(3.0, 4.0)])
    assert pts.ndim == 2 and len(pts) == 1
