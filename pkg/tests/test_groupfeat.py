import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfeat import data, groupfeat
from robustfeat.data import Image
from robustfeat.groupfeat import (
    DEFAULT_CENTERS,
    ExtractionError,
    GroupLabelMap,
    HueCenters,
    SignMask,
    binarize_map,
    circular_hue_distance,
    classify_color,
    color_maps,
    color_votes,
    extract,
    group_labels,
    localize_sign,
    normalize_channels,
    verify_color_robustness,
)

RED_FILL = (0.9, 0.05, 0.1)
GRAY_BG = (0.5, 0.5, 0.5)


def red_octagon(noise=0.0, seed=0):
    return data.synth_sign("octagon", RED_FILL, GRAY_BG, 24, noise, seed=seed)


def solid_image(rgb, size=20):
    return Image(np.tile(np.asarray(rgb, dtype=np.float64), (size, size, 1)))


class TestNormalize:
    def test_gray_pixel(self):
        out = normalize_channels(solid_image((0.2, 0.2, 0.2)))
        np.testing.assert_allclose(out[0, 0], [1 / 3, 1 / 3, 1 / 3])

    def test_black_pixel_guard(self):
        out = normalize_channels(solid_image((0.0, 0.0, 0.0)))
        np.testing.assert_array_equal(out[0, 0], [0.0, 0.0, 0.0])

    def test_nonblack_sums_to_one(self, rng):
        pixels = rng.uniform(0.05, 1.0, size=(8, 8, 3))
        out = normalize_channels(Image(pixels))
        np.testing.assert_allclose(out.sum(axis=2), np.ones((8, 8)), atol=1e-9)

    def test_grayscale_rejected(self):
        with pytest.raises(ValueError, match="3-channel"):
            normalize_channels(Image(np.zeros((8, 8))))


class TestColorMaps:
    def assert_pixel_maps(self, rgb, expect):
        img = np.tile(np.asarray(rgb, dtype=np.float64), (4, 4, 1))
        maps = color_maps(img)
        got = (
            maps.chroma[0, 0],
            maps.red[0, 0],
            maps.green[0, 0],
            maps.blue[0, 0],
            maps.yellow[0, 0],
        )
        np.testing.assert_allclose(got, expect, atol=1e-12)

    def test_pure_red(self):
        self.assert_pixel_maps((1, 0, 0), (1.0, 1.0, -0.5, -0.5, 0.0))

    def test_gray(self):
        t = 1 / 3
        self.assert_pixel_maps((t, t, t), (0.0, 0.0, 0.0, 0.0, 2 / 3))

    def test_yellow(self):
        self.assert_pixel_maps((0.5, 0.5, 0.0), (0.5, 0.25, 0.25, -0.5, 0.5))

    def test_rgb_maps_sum_to_zero_on_normalized_images(self, rng):
        norm = normalize_channels(Image(rng.uniform(0, 1, size=(10, 10, 3))))
        maps = color_maps(norm)
        total = maps.red + maps.green + maps.blue
        assert np.abs(total).max() < 1e-9


class TestBinarizeMap:
    def test_mean_of_nonzero(self):
        out = binarize_map(np.array([0.0, 0.2, 0.8]))
        np.testing.assert_array_equal(out, [False, False, True])

    def test_all_zero(self):
        assert not binarize_map(np.zeros((3, 3))).any()

    def test_negatives_clamped_before_mean(self):
        out = binarize_map(np.array([-1.0, 0.4]))
        np.testing.assert_array_equal(out, [False, True])


class TestLocalize:
    def test_red_octagon_mask_quality(self):
        img = red_octagon()
        mask = localize_sign(img).mask
        truth = np.all(img.pixels == np.asarray(RED_FILL), axis=2)
        coverage = (mask & truth).sum() / truth.sum()
        leak = (mask & ~truth).sum() / (~truth).sum()
        assert coverage >= 0.8
        assert leak <= 0.05

    def test_uniform_gray_falls_back_to_all_ones(self):
        mask = localize_sign(solid_image(GRAY_BG)).mask
        assert mask.all()

    def test_blue_circle_wins_blue_channel(self):
        img = data.synth_sign("circle", (0.05, 0.15, 0.8), GRAY_BG, 24, 0.0, seed=0)
        mask = localize_sign(img).mask
        truth = np.all(img.pixels == np.array([0.05, 0.15, 0.8]), axis=2)
        assert (mask & truth).sum() / truth.sum() >= 0.8

    def test_small_image_rejected(self):
        with pytest.raises(ValueError, match="too small"):
            localize_sign(solid_image((1, 0, 0), size=12))

    def test_deterministic(self):
        img = red_octagon(noise=0.02, seed=9)
        a = localize_sign(img).mask
        b = localize_sign(img).mask
        assert np.array_equal(a, b)


def full_mask(size=20):
    return SignMask(np.ones((size, size), dtype=bool))


class TestClassifyColor:
    def test_pure_red_full_weight(self):
        img = solid_image((1.0, 0.0, 0.0))
        votes = color_votes(img, full_mask())
        assert classify_color(img, full_mask()) == "Red"
        assert votes["Red"] == pytest.approx(400.0)  # weight 1 per pixel
        assert votes["Yellow"] == votes["Blue"] == 0.0

    def test_hue_350_votes_red_not_blue(self):
        # hue 350: circular distance 10 to red, 110 to blue
        img = solid_image((1.0, 0.0, 1 / 6))
        assert classify_color(img, full_mask()) == "Red"

    def test_majority_wins(self):
        pixels = np.zeros((10, 10, 3))
        pixels[:6, :, 0] = 1.0  # 60 saturated red pixels
        pixels[6:, :, 2] = 1.0  # 40 saturated blue pixels
        img = Image(pixels)
        assert classify_color(img, full_mask(10)) == "Red"

    def test_achromatic_pixels_abstain_and_error_when_all_do(self):
        with pytest.raises(ExtractionError, match="chromatic"):
            classify_color(solid_image(GRAY_BG), full_mask())

    def test_all_zero_mask_rejected(self):
        img = solid_image((1, 0, 0))
        with pytest.raises(ValueError, match="all-zero"):
            classify_color(img, SignMask(np.zeros((20, 20), dtype=bool)))

    def test_circular_distance(self):
        assert circular_hue_distance(350.0, 0.0) == 10.0
        assert circular_hue_distance(0.0, 240.0) == 120.0

    def test_hue_rotation_keeps_argmax(self, rng):
        # small hue rotation that never changes a pixel's nearest center
        hues = rng.uniform(10, 40, size=30)  # all nearest red, with slack
        for delta in (-5.0, 5.0):
            first = _image_from_hues(hues)
            second = _image_from_hues(hues + delta)
            assert classify_color(first, full_mask(_hue_grid_size(hues))) == \
                classify_color(second, full_mask(_hue_grid_size(hues)))


def _hue_grid_size(hues):
    n = int(np.ceil(np.sqrt(len(hues))))
    return n


def _image_from_hues(hues):
    """Saturated value-1 pixels at the given hues, padded to a square."""
    n = _hue_grid_size(hues)
    rgb = np.zeros((n * n, 3))
    for i, h in enumerate(np.asarray(hues) % 360):
        c, x = 1.0, 1.0 - abs((h / 60.0) % 2 - 1)
        block = {
            0: (c, x, 0), 1: (x, c, 0), 2: (0, c, x),
            3: (0, x, c), 4: (x, 0, c), 5: (c, 0, x),
        }[int(h // 60) % 6]
        rgb[i] = block
    for i in range(len(hues), n * n):
        rgb[i] = rgb[len(hues) - 1]
    return Image(rgb.reshape(n, n, 3))


class TestExtract:
    @pytest.mark.parametrize(
        "shape,fill,expected",
        [
            ("octagon", RED_FILL, "Red"),
            ("circle", (0.05, 0.15, 0.8), "Blue"),
            ("diamond", (0.95, 0.8, 0.05), "Yellow"),
        ],
    )
    def test_end_to_end_fixtures(self, shape, fill, expected):
        img = data.synth_sign(shape, fill, GRAY_BG, 24, 0.0, seed=0)
        assert extract(img) == expected

    def test_extractor_object(self):
        ext = groupfeat.ColorExtractor()
        assert ext.extract(red_octagon()) == "Red"


class TestGroupLabels:
    def test_red_group(self):
        assert group_labels("Red", GroupLabelMap()) == {"stop", "doNotEnter"}

    def test_blue_group_has_eight_members(self):
        labels = group_labels("Blue", GroupLabelMap())
        assert len(labels) == 8
        assert {"keepLeft", "mandatoryLeftTurn"} <= labels

    def test_unmapped_color_in_partial_map_is_empty(self):
        partial = GroupLabelMap({"Red": frozenset({"stop"})})
        assert group_labels("Blue", partial) == frozenset()

    def test_unknown_color_rejected(self):
        with pytest.raises(ValueError):
            group_labels("Green", GroupLabelMap())

    def test_matches_sign_class_names(self):
        # every grouped label is a real class of the synthetic sign table
        gmap = GroupLabelMap()
        all_grouped = set().union(*(gmap.labels_for(c) for c in groupfeat.COLOR_NAMES))
        assert all_grouped <= set(data.SIGN_CLASS_NAMES)


class TestVerifyRobustness:
    def test_zero_eps_trivially_robust(self):
        verdict = verify_color_robustness(red_octagon(), 0.0)
        assert verdict.robust and verdict.baseline_color == "Red"

    def test_saturated_red_robust_at_8_255(self):
        assert verify_color_robustness(red_octagon(), 8 / 255).robust

    def test_dark_near_gray_not_robust_at_large_eps(self):
        dark = data.synth_sign("octagon", (0.35, 0.25, 0.25), GRAY_BG, 24, 0.0, seed=1)
        verdict = verify_color_robustness(dark, 0.3)
        assert verdict.baseline_color == "Red"
        assert not verdict.robust
        assert verdict.failures  # the flipping shifts are recorded
        shift, outcome = verdict.failures[0]
        assert len(shift) == 3 and outcome in ("Yellow", "Blue") or "error" in outcome

    def test_exactly_26_variants(self):
        assert len(list(groupfeat.channel_shift_variants(0.1))) == 26

    def test_replay_determinism_of_variants(self):
        img = red_octagon(noise=0.02, seed=4)
        eps = 8 / 255
        verdict = verify_color_robustness(img, eps)
        if verdict.robust:
            for shift in groupfeat.channel_shift_variants(eps):
                shifted = np.clip(img.pixels + np.asarray(shift).reshape(1, 1, 3), 0, 1)
                assert extract(Image(shifted)) == verdict.baseline_color

    def test_bad_eps_rejected(self):
        with pytest.raises(ValueError):
            verify_color_robustness(red_octagon(), -0.1)


class TestHueCenters:
    def test_centers_must_be_distinct(self):
        with pytest.raises(ValueError):
            HueCenters(red=0.0, yellow=360.0, blue=240.0)

    def test_default(self):
        assert DEFAULT_CENTERS.as_tuple() == (0.0, 60.0, 240.0)
