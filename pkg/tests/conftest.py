from fractions import Fraction

import numpy as np
import pytest

from ofdm_isac.frame import FrameSpec


@pytest.fixture(scope="session")
def table2_spec() -> FrameSpec:
    """Full-scale configuration used in the reference parameter table."""
    return FrameSpec(
        n_subcarriers=2048, n_preamble=10, n_payload=512, cp_len=512,
        pilot_spacing_freq=2, pilot_spacing_time=7,
        bandwidth=1e9, sample_rate=2e9,
        modulation_order=4, code_rate=Fraction(2, 3), scramble_seed=0,
    )


@pytest.fixture(scope="session")
def desk_spec() -> FrameSpec:
    """Desk-scale configuration: same structure, seconds-scale runtimes."""
    return FrameSpec(
        n_subcarriers=256, n_preamble=10, n_payload=64, cp_len=64,
        pilot_spacing_freq=2, pilot_spacing_time=7,
        bandwidth=50e6, sample_rate=100e6,
        modulation_order=4, code_rate=Fraction(2, 3), scramble_seed=0,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0FFEE)
