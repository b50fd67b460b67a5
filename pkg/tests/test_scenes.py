import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plateau.curvature import all_junction_angles
from plateau.errors import GenerationError, SheetNotFound
from plateau.mmesh import dumps_mmm, enclosed_volume, extract_junctions
from plateau.scenes import (
    DoubleBubbleSpec,
    _junction_apexes,
    _stretch_profile,
    make_double_bubble,
    make_labeled_icosphere,
    make_y_junction_strip,
    sheet_vertices,
    stretch_sheet,
    tangential_jitter,
)


def test_face_count_grows_with_subdivision():
    counts = [make_double_bubble(DoubleBubbleSpec(n)).n_faces for n in (8, 16, 24, 48)]
    assert counts == sorted(counts) and len(set(counts)) == 4
    assert counts[3] / counts[1] == pytest.approx(9.0, rel=0.15)


def test_denser_fill_face_count():
    assert 700 <= make_double_bubble(DoubleBubbleSpec(16, fill=1.45)).n_faces <= 1100


def test_double_bubble_is_mirror_symmetric(bubble16):
    p = bubble16.positions
    mirrored = p * np.array([-1.0, 1.0, 1.0])
    key = lambda q: np.round(q, 9).tolist()
    assert sorted(map(tuple, key(p))) == sorted(map(tuple, key(mirrored)))


def test_interface_disk_is_planar(bubble16):
    faces, movable, junction = sheet_vertices(bubble16, (1, 2))
    verts = np.concatenate([movable, junction])
    assert np.abs(bubble16.positions[verts, 0]).max() < 1e-12


def test_junction_circle(bubble16):
    js = extract_junctions(bubble16)
    p = bubble16.positions[js.vertices]
    assert np.allclose(p[:, 0], 0.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(p[:, 1:], axis=1), math.sqrt(3) / 2, rtol=1e-12)


def test_caps_lie_on_their_spheres(bubble16):
    for pair, cx in (((1, 0), -0.5), ((2, 0), 0.5)):
        _, movable, _ = sheet_vertices(bubble16, pair)
        d = np.linalg.norm(bubble16.positions[movable] - [cx, 0, 0], axis=1)
        assert np.allclose(d, 1.0, rtol=1e-12)


@pytest.mark.parametrize("n", [8, 16, 24])
def test_equal_radii_give_equal_volumes(n):
    mesh = make_double_bubble(DoubleBubbleSpec(n))
    v1, v2 = enclosed_volume(mesh, 1), enclosed_volume(mesh, 2)
    assert abs(v1 - v2) <= 1e-9 * v1


def test_volumes_approach_lens_formula():
    # sphere of radius 1 minus a cap of height 1/2
    exact = 4 * math.pi / 3 - math.pi * 0.25 * (3 - 0.5) / 3
    mesh = make_double_bubble(DoubleBubbleSpec(48))
    assert enclosed_volume(mesh, 1) == pytest.approx(exact, rel=0.01)


@pytest.mark.parametrize("spec", [
    DoubleBubbleSpec(4),
    DoubleBubbleSpec(16, radius=-1.0),
    DoubleBubbleSpec(16, center_distance=2.5),
    DoubleBubbleSpec(16, fill=0.0),
])
def test_bad_double_bubble_specs(spec):
    with pytest.raises(GenerationError):
        make_double_bubble(spec)


@pytest.mark.parametrize("s", [0, 1, 2, 3])
def test_icosphere_face_count(s):
    mesh = make_labeled_icosphere(1.0, s)
    assert mesh.n_faces == 20 * 4 ** s
    assert np.allclose(np.linalg.norm(mesh.positions, axis=1), 1.0, rtol=1e-12)


def test_icosphere_bad_subdivision():
    with pytest.raises(GenerationError):
        make_labeled_icosphere(1.0, -1)


def test_y_strip_geometry(ystrip):
    assert ystrip.region_count == 4
    assert ystrip.fixed.any() and not ystrip.fixed.all()
    angles, _ = all_junction_angles(ystrip)
    assert np.allclose(angles, 120.0, atol=1e-12)


@pytest.mark.parametrize("angles", [(100, 100, 100), (0, 180, 180), (120, 120)])
def test_y_strip_rejects_bad_angles(angles):
    with pytest.raises(GenerationError):
        make_y_junction_strip(angles)


# -- stretch --------------------------------------------------------------------------


def test_stretch_factor_one_is_identity(bubble16):
    assert dumps_mmm(stretch_sheet(bubble16, (1, 0), 1.0)) == dumps_mmm(bubble16)


@pytest.mark.parametrize("pair", [(1, 0), (0, 1), (1, 2), (2, 0)])
def test_stretch_keeps_junction_and_angles(bubble16, pair):
    out = stretch_sheet(bubble16, pair, 2.0)
    js = extract_junctions(bubble16)
    assert np.array_equal(out.positions[js.vertices], bubble16.positions[js.vertices])
    before, _ = all_junction_angles(bubble16, js)
    after, _ = all_junction_angles(out, js)
    assert np.abs(after - before).max() < 1e-10


def test_stretch_moves_only_the_chosen_sheet(bubble16):
    out = stretch_sheet(bubble16, (1, 0), 2.0)
    moved = np.flatnonzero(np.any(out.positions != bubble16.positions, axis=1))
    _, movable, _ = sheet_vertices(bubble16, (1, 0))
    assert len(moved) > 0 and set(moved) <= set(movable)
    # junction-triangle apexes keep their planes and so leave the sphere
    apexes = list(_junction_apexes(bubble16, (1, 0)))
    rest = np.setdiff1d(movable, apexes)
    assert np.allclose(np.linalg.norm(out.positions[rest] - [-0.5, 0, 0], axis=1), 1.0, rtol=1e-9)
    assert np.all(np.linalg.norm(out.positions[apexes] - [-0.5, 0, 0], axis=1) > 1.0)


def test_stretch_doubles_the_first_row(ystrip):
    out = stretch_sheet(ystrip, (1, 2), 2.0)
    p0, p1 = ystrip.positions, out.positions
    r0 = np.linalg.norm(p0[:, :2], axis=1)
    h = r0[r0 > 1e-12].min()
    first = np.flatnonzero(np.isclose(r0, h) & ~ystrip.fixed)
    _, movable, _ = sheet_vertices(ystrip, (1, 2))
    first = np.intersect1d(first, movable)
    assert len(first) > 0
    assert np.allclose(np.linalg.norm(p1[first, :2], axis=1), 2 * h, rtol=1e-12)


def test_stretch_missing_sheet(bubble16):
    with pytest.raises(SheetNotFound):
        stretch_sheet(bubble16, (1, 3), 2.0)


def test_stretch_rejects_nonpositive_factor(bubble16):
    with pytest.raises(ValueError):
        stretch_sheet(bubble16, (1, 0), 0.0)


@settings(max_examples=50, deadline=None)
@given(factor=st.floats(0.3, 3.0), d1=st.floats(0.01, 0.1))
def test_stretch_profile_is_monotone(factor, d1):
    S = 1.0
    s = np.linspace(0.0, S, 401)
    out = _stretch_profile(s, d1, S, factor)
    assert np.all(np.diff(out) > 0)
    assert out[0] == 0.0
    assert out[-1] == S
    assert _stretch_profile(d1, d1, S, factor) == pytest.approx(factor * d1)


# -- jitter ---------------------------------------------------------------------------


def test_jitter_zero_is_identity(bubble16):
    assert np.array_equal(tangential_jitter(bubble16, 0.0).positions, bubble16.positions)


def test_jitter_is_reproducible(bubble16):
    a = tangential_jitter(bubble16, 0.01, seed=3)
    b = tangential_jitter(bubble16, 0.01, seed=3)
    c = tangential_jitter(bubble16, 0.01, seed=4)
    digest = lambda m: hashlib.sha256(m.positions.tobytes()).hexdigest()
    assert digest(a) == digest(b) != digest(c)


def test_jitter_keeps_junction_and_bounds(bubble16):
    amp = 0.01
    out = tangential_jitter(bubble16, amp, seed=1)
    js = extract_junctions(bubble16).vertices
    assert np.array_equal(out.positions[js], bubble16.positions[js])
    assert np.linalg.norm(out.positions - bubble16.positions, axis=1).max() <= amp * (1 + 1e-12)


def test_jitter_volume_drift_is_second_order(bubble16):
    drifts = []
    for amp in (0.004, 0.002):
        out = tangential_jitter(bubble16, amp, seed=7)
        drifts.append(abs(enclosed_volume(out, 1) - enclosed_volume(bubble16, 1)))
    assert drifts[1] < drifts[0]
    assert drifts[0] < 10 * 0.004 ** 2


def test_jitter_rejects_large_amplitude(bubble16):
    with pytest.raises(ValueError):
        tangential_jitter(bubble16, 1.0)
