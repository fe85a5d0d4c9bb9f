import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclegraph.encoding import EncodingConfig, WindSpec, build_code, build_codes, encode_time
from cyclegraph.errors import ValidationError

CFG = EncodingConfig(period=150, harmonics=5)


def test_zero_phase():
    np.testing.assert_allclose(encode_time(0.0, CFG), [1, 0] * 5, atol=0)


def test_full_period_matches_zero():
    np.testing.assert_allclose(encode_time(150.0, CFG), encode_time(0.0, CFG), atol=1e-6)


def test_quarter_period():
    np.testing.assert_allclose(encode_time(37.5, CFG), [0, 1, -1, 0, 0, -1, 1, 0, 0, 1], atol=1e-6)


def test_build_code_examples():
    np.testing.assert_allclose(build_code(0, CFG, WindSpec(1.0, 0.0)), [1, 0] * 6, atol=1e-12)
    np.testing.assert_allclose(build_code(37.5, CFG, WindSpec(0.0, -1.0)),
                               [0, 1, -1, 0, 0, -1, 1, 0, 0, 1, 0, -1], atol=1e-6)
    assert build_code(3, CFG, WindSpec(1.0, 0.0)).shape == (12,)


def test_high_precision_oracle():
    mpmath.mp.dps = 40
    expected = []
    for n in range(1, 6):
        phi = 2 * mpmath.pi * n * mpmath.mpf(37) / 150
        expected += [float(mpmath.cos(phi)), float(mpmath.sin(phi))]
    expected += [1.0, 0.0]
    np.testing.assert_allclose(build_code(37, CFG, WindSpec(1.0, 0.0)), expected, atol=1e-12)


def test_non_unit_wind_rejected():
    with pytest.raises(ValidationError):
        build_code(0, CFG, WindSpec(1.0, 1.0))
    with pytest.raises(ValidationError):
        build_code(0, CFG, (0.5, 0.5))
    with pytest.raises(ValidationError):
        WindSpec.from_vector(0.0, 0.0)


@pytest.mark.parametrize("period,harmonics", [(1, 5), (30, 0), (2.5, 5)])
def test_config_validation(period, harmonics):
    with pytest.raises(ValidationError):
        EncodingConfig(period, harmonics)


@settings(max_examples=200)
@given(dt=st.floats(-1000, 1000), k=st.integers(-3, 3), theta=st.floats(0, 2 * np.pi))
def test_periodicity(dt, k, theta):
    w = WindSpec.from_angle(theta)
    np.testing.assert_allclose(build_code(dt + k * 150, CFG, w), build_code(dt, CFG, w), atol=1e-6)


@settings(max_examples=200)
@given(dt=st.floats(-1000, 1000))
def test_time_reversal(dt):
    fwd = encode_time(dt, CFG)
    back = encode_time(-dt, CFG)
    np.testing.assert_allclose(back[0::2], fwd[0::2], atol=1e-9)
    np.testing.assert_allclose(back[1::2], -fwd[1::2], atol=1e-9)


@settings(max_examples=200)
@given(dt=st.floats(-1000, 1000))
def test_pairs_are_unit(dt):
    e = encode_time(dt, CFG).reshape(5, 2)
    np.testing.assert_allclose(np.hypot(e[:, 0], e[:, 1]), 1.0, atol=1e-6)


def test_injective_over_one_period():
    dts = np.arange(0, 150, 0.5)
    codes = encode_time(dts, CFG)
    dists = np.linalg.norm(codes[:, None] - codes[None], axis=-1)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() > 1e-3


def test_harmonics_are_integer_multiples():
    # the n-th pair sits at angle n * (angle of the first pair)
    dt = 11.3
    e = encode_time(dt, CFG).reshape(5, 2)
    base = np.arctan2(e[0, 1], e[0, 0])
    for n in range(1, 6):
        ang = np.arctan2(e[n - 1, 1], e[n - 1, 0])
        assert np.isclose(np.cos(ang - n * base), 1.0, atol=1e-9)


def test_batched_codes_match_scalar():
    winds = np.array([[1.0, 0.0], [0.0, -1.0], [np.sqrt(0.5), np.sqrt(0.5)]])
    dts = [0.0, 37.5, -12.0]
    batch = build_codes(dts, CFG, winds)
    for i in range(3):
        np.testing.assert_allclose(batch[i], build_code(dts[i], CFG, WindSpec(*winds[i])), atol=1e-12)
