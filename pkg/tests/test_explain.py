import numpy as np
import pytest

from models.domain import Frame, Heatmap
from models.errors import InvalidParam, ShapeMismatch
from services.explain_service import (
    BLUE_RED_LUT,
    colormap,
    contour_interior,
    contour_levels,
    contours,
    map_series,
    normalize,
    overlay,
)


def _frame(value=0, height=8, width=8, channels=3, index=0):
    return Frame(index=index, pixels=np.full((height, width, channels), value, dtype=np.uint8))


def ring_heatmap() -> Heatmap:
    """High ring around a low centre."""
    values = np.zeros((9, 9))
    values[1:8, 1:8] = 1.0
    values[3:6, 3:6] = 0.1
    return Heatmap(values=values)


def test_lut_runs_from_blue_to_red():
    assert tuple(BLUE_RED_LUT[0]) == (0, 0, 255)
    assert tuple(BLUE_RED_LUT[255]) == (255, 0, 0)
    assert colormap(np.array([[0.0, 1.0]])).shape == (1, 2, 3)


def test_normalize():
    flat = normalize(Heatmap(values=np.full((3, 4), 7.0)))
    assert flat.degenerate
    assert not flat.values.any()

    unit = np.array([[0.0, 0.5], [0.25, 1.0]])
    assert np.array_equal(normalize(Heatmap(values=unit)).values, unit)


def test_normalize_is_affine_invariant():
    rng = np.random.default_rng(17)
    for _ in range(20):
        values = rng.normal(size=(6, 5))
        scale, shift = float(rng.uniform(0.1, 10.0)), float(rng.uniform(-5.0, 5.0))
        a = normalize(Heatmap(values=values)).values
        b = normalize(Heatmap(values=scale * values + shift)).values
        assert np.allclose(a, b)


def test_overlay_blend():
    rng = np.random.default_rng(2)
    frame = Frame(index=0, pixels=rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8))
    heat = Heatmap(values=rng.uniform(size=(8, 8)))

    assert np.array_equal(overlay(frame, heat, alpha=0.0).pixels, frame.pixels)
    assert np.array_equal(overlay(frame, heat, alpha=1.0).pixels, colormap(heat.values))

    half = overlay(_frame(0), Heatmap(values=np.ones((8, 8))), alpha=0.5)
    assert np.all(half.pixels[:, :, 0] == 128)
    assert not half.pixels[:, :, 1:].any()


def test_zero_alpha_overlay_keeps_a_grey_frame_grey():
    grey = _frame(77, height=4, width=4, channels=1)
    out = overlay(grey, Heatmap(values=np.zeros((4, 4))), alpha=0.0)
    assert out.shape == (4, 4, 1)
    assert np.array_equal(out.pixels, grey.pixels)


def test_overlay_resamples_heatmap_and_outputs_colour():
    grey = _frame(0, height=4, width=4, channels=1)
    heat = Heatmap(values=np.array([[0.0, 1.0], [1.0, 0.0]]))
    out = overlay(grey, heat, alpha=1.0)
    assert out.shape == (4, 4, 3)
    assert tuple(out.pixels[0, 3]) == (255, 0, 0)
    assert tuple(out.pixels[0, 0]) == (0, 0, 255)


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_overlay_rejects_bad_alpha(alpha):
    with pytest.raises(InvalidParam):
        overlay(_frame(), Heatmap(values=np.zeros((8, 8))), alpha=alpha)


def test_contours_of_empty_map():
    assert contours(Heatmap(values=np.zeros((5, 5))), 0.5) == []


def test_single_rectangle_gives_one_closed_contour():
    values = np.zeros((10, 12))
    values[2:6, 3:9] = 1.0
    found = contours(Heatmap(values=values), 0.5)
    assert len(found) == 1
    assert found[0].points[0] == found[0].points[-1]
    assert found[0].level == 0.5


def test_ring_gives_outer_and_inner_contours():
    found = contours(ring_heatmap(), 0.5)
    assert len(found) == 2


def test_rectangle_touching_the_border_is_closed():
    values = np.zeros((6, 6))
    values[:3, :3] = 1.0
    found = contours(Heatmap(values=values), 0.5)
    assert len(found) == 1
    assert np.array_equal(contour_interior(found, 6, 6), values >= 0.5)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.3])
def test_degenerate_levels_are_rejected(level):
    with pytest.raises(InvalidParam):
        contours(ring_heatmap(), level)


def test_contour_interiors_rebuild_the_mask():
    rng = np.random.default_rng(31)
    for _ in range(100):
        height, width = int(rng.integers(3, 14)), int(rng.integers(3, 14))
        mask = rng.uniform(size=(height, width)) < float(rng.uniform(0.2, 0.8))
        found = contours(Heatmap(values=mask.astype(np.float64)), 0.5)
        assert np.array_equal(contour_interior(found, width, height), mask)


def test_contour_count_survives_affine_rescaling():
    base = ring_heatmap()
    rescaled = normalize(Heatmap(values=base.values * 40.0 + 3.0))
    assert len(contours(normalize(base), 0.5)) == len(contours(rescaled, 0.5))


def test_multi_level_contours():
    values = np.zeros((11, 11))
    values[1:10, 1:10] = 0.4
    values[4:7, 4:7] = 0.9
    by_level = contour_levels(Heatmap(values=values), [0.8, 0.3])
    assert list(by_level) == [0.3, 0.8]
    assert len(by_level[0.3]) == 1
    assert len(by_level[0.8]) == 1


def test_map_series():
    assert map_series([], [], 0.4, 0.5) == []
    with pytest.raises(ShapeMismatch):
        map_series([_frame()], [], 0.4, 0.5)

    frames = [_frame(10, index=0), _frame(200, index=1)]
    heatmaps = [Heatmap(values=np.pad(np.ones((4, 4)), 2)), Heatmap(values=np.eye(8) * 3.0)]
    series = map_series(frames, heatmaps, 0.4, 0.5)
    assert len(series) == 2
    for (frame, found), source, heat in zip(series, frames, heatmaps):
        normalized = normalize(heat)
        assert np.array_equal(frame.pixels, overlay(source, normalized, 0.4).pixels)
        assert found == contours(normalized, 0.5)
        assert frame.index == source.index
