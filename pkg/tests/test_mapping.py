import numpy as np
import pytest

from ofdm_isac.mapping import constellation, demap_llr, hard_demap, map_symbols


def test_qpsk_fixed_labeling():
    s = map_symbols(np.array([0, 0]), 4)
    assert s[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    s = map_symbols(np.array([1, 0]), 4)
    assert s[0] == pytest.approx((-1 + 1j) / np.sqrt(2))
    s = map_symbols(np.array([0, 1]), 4)
    assert s[0] == pytest.approx((1 - 1j) / np.sqrt(2))


@pytest.mark.parametrize("order", [4, 16, 64])
def test_unit_energy(order):
    points, _ = constellation(order)
    assert np.mean(np.abs(points) ** 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_gray_property_nearest_neighbors(order):
    # every nearest-neighbor pair differs in exactly one bit
    points, scale = constellation(order)
    k = int(np.log2(order))
    step = 2.0 / scale  # spacing between adjacent PAM levels after normalization
    for a in range(order):
        for b in range(a + 1, order):
            if abs(points[a] - points[b]) < step * 1.001:
                assert bin(a ^ b).count("1") == 1, (a, b)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_map_demap_roundtrip(order, rng):
    k = int(np.log2(order))
    bits = rng.integers(0, 2, 600 * k).astype(np.uint8)
    sym = map_symbols(bits, order)
    assert np.array_equal(hard_demap(sym, order), bits)


def test_bit_count_validation():
    with pytest.raises(ValueError):
        map_symbols(np.array([0, 1, 0]), 4)


def test_llr_signs_match_known_bits():
    s = np.array([(1 + 1j) / np.sqrt(2)])
    llr = demap_llr(s, 4, 0.01)
    assert (llr > 10).all()  # both bits are 0 -> large positive


def test_llr_zero_at_decision_boundary():
    llr = demap_llr(np.array([0.0 + 0.7j]), 4, 0.1)
    assert llr[0] == pytest.approx(0.0, abs=1e-12)  # I axis undecided
    assert llr[1] > 0


@pytest.mark.parametrize("order", [4, 16, 64])
def test_llr_sign_equals_hard_decision(order, rng):
    n = 100_000 // int(np.log2(order))
    bits = rng.integers(0, 2, n * int(np.log2(order))).astype(np.uint8)
    sym = map_symbols(bits, order)
    noisy = sym + 0.15 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    llr = demap_llr(noisy, order, 0.045)
    hard_from_llr = (llr < 0).astype(np.uint8)
    assert np.array_equal(hard_from_llr, hard_demap(noisy, order))
