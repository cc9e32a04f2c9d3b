import math
import unittest

import numpy as np

from src.disttrans import (
    FieldKind,
    ScalarField,
    brute_force_sdm,
    compute_sdm,
    edt,
    normalize_sdm,
    normalized_sdm,
)
from src.errors import EmptyFeatureSet, EmptyForeground, FieldKindError, ValueOutOfRange
from src.maskops import BinaryMask, partition_cells


def random_mask(rng: np.random.Generator, size: int) -> BinaryMask:
    while True:
        cells = rng.random((size, size)) < rng.uniform(0.05, 0.6)
        if cells.any():
            return BinaryMask(cells)


def disc(size: int, radius: float) -> BinaryMask:
    rows, cols = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    return BinaryMask((rows - c) ** 2 + (cols - c) ** 2 <= radius * radius)


class TestEdt(unittest.TestCase):
    def test_single_feature_pixel(self):
        field = edt(BinaryMask.from_pixels(5, 5, [(2, 2)]))
        self.assertEqual(field.values[2, 2], 0.0)
        self.assertAlmostEqual(field.values[0, 0], math.sqrt(8), places=12)
        self.assertAlmostEqual(field.values[2, 4], 2.0, places=12)

    def test_empty_feature_set(self):
        with self.assertRaises(EmptyFeatureSet):
            edt(BinaryMask.zeros(4, 4))

    def test_axis_order_does_not_matter(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            mask = random_mask(rng, 17)
            a = edt(mask, columns_first=True).values
            b = edt(mask, columns_first=False).values
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_matches_pairwise_minimum(self):
        rng = np.random.default_rng(12)
        mask = random_mask(rng, 13)
        fy, fx = np.nonzero(mask.cells)
        expected = np.empty(mask.dims)
        for r in range(13):
            for c in range(13):
                expected[r, c] = np.sqrt(((fy - r) ** 2 + (fx - c) ** 2).min())
        np.testing.assert_allclose(edt(mask).values, expected, atol=1e-12)


class TestSdm(unittest.TestCase):
    def test_matches_brute_force_on_random_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            mask = random_mask(rng, 32)
            np.testing.assert_allclose(compute_sdm(mask).values, brute_force_sdm(mask).values, atol=1e-9)
        for _ in range(20):
            mask = random_mask(rng, 64)
            np.testing.assert_allclose(compute_sdm(mask).values, brute_force_sdm(mask).values, atol=1e-9)

    def test_sign_convention(self):
        mask = disc(21, 6.0)
        sdm = compute_sdm(mask).values
        interior, boundary, exterior = partition_cells(mask)
        self.assertTrue((sdm[interior] < 0).all())
        self.assertTrue((sdm[boundary] == 0).all())
        self.assertTrue((sdm[exterior] > 0).all())

    def test_empty_mask_raises(self):
        with self.assertRaises(EmptyForeground):
            compute_sdm(BinaryMask.zeros(5, 5))

    def test_full_mask_has_no_positive_values(self):
        sdm = normalized_sdm(BinaryMask(np.ones((9, 9), dtype=bool))).values
        self.assertLessEqual(sdm.max(), 0.0)
        self.assertEqual(sdm.min(), -1.0)


class TestNormalizeSdm(unittest.TestCase):
    def test_range_is_exactly_minus_one_to_one(self):
        for radius in (3.0, 7.5, 12.0):
            mask = disc(32, radius)
            values = normalized_sdm(mask).values
            self.assertEqual(values.min(), -1.0)
            self.assertEqual(values.max(), 1.0)
            _, boundary, _ = partition_cells(mask)
            self.assertTrue((values[boundary] == 0.0).all())

    def test_idempotent(self):
        once = normalized_sdm(disc(24, 6.0))
        twice = normalize_sdm(once)
        np.testing.assert_array_equal(once.values, twice.values)
        self.assertEqual(twice.kind, FieldKind.NORMALIZED_SDM)

    def test_single_pixel_mask(self):
        values = normalized_sdm(BinaryMask.from_pixels(7, 7, [(3, 3)])).values
        self.assertEqual(values.min(), 0.0)
        self.assertEqual(values.max(), 1.0)

    def test_rejects_other_field_kinds(self):
        with self.assertRaises(FieldKindError):
            normalize_sdm(ScalarField(np.zeros((3, 3)), FieldKind.HEATMAP))

    def test_field_range_invariants(self):
        with self.assertRaises(ValueOutOfRange):
            ScalarField(np.full((2, 2), 1.5), FieldKind.NORMALIZED_SDM)
        with self.assertRaises(ValueOutOfRange):
            ScalarField(np.full((2, 2), np.nan), FieldKind.OTHER)


if __name__ == "__main__":
    unittest.main()
