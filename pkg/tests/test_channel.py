import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamrl.array_core import ConfigError
from beamrl.channel import (
    ArrayGeometry,
    ChannelConfig,
    ChannelSet,
    GenerationError,
    IngestionError,
    PathList,
    array_response,
    channel_correlation,
    load_channels,
    load_geometry,
    sample_impaired_geometry,
    sample_user_channels,
    save_channels,
    save_geometry,
    synthesize_channel,
)


def test_zero_sigma_geometry_is_ideal_ula():
    g = sample_impaired_geometry(16, 0.5, 0.0, 0.0, seed=3)
    np.testing.assert_array_equal(g.positions, np.arange(16) * 0.5)
    np.testing.assert_array_equal(g.phase_offsets, np.zeros(16))


def test_paper_impairments_give_ordered_geometry():
    g = sample_impaired_geometry(32, 0.5, 0.1, 0.32 * np.pi, seed=1)
    assert g.num_antennas == 32
    assert np.all(np.diff(g.positions) > 0)
    assert np.std(g.phase_offsets) > 0.3


def test_geometry_is_deterministic_per_seed():
    a = sample_impaired_geometry(32, 0.5, 0.1, 1.0, seed=7)
    b = sample_impaired_geometry(32, 0.5, 0.1, 1.0, seed=7)
    c = sample_impaired_geometry(32, 0.5, 0.1, 1.0, seed=8)
    assert a == b
    assert a != c


def test_geometry_marginals_not_sorted():
    # whole-vector rejection keeps E[d_m] = (m-1) d; sorting would bias the ends outward
    pos = np.array([sample_impaired_geometry(8, 0.5, 0.15, 0.0, seed=s).positions for s in range(3000)])
    np.testing.assert_allclose(pos.mean(axis=0), np.arange(8) * 0.5, atol=0.02)


def test_geometry_rejection_gives_up():
    with pytest.raises(GenerationError):
        sample_impaired_geometry(64, 0.01, 5.0, 0.0, seed=0, max_attempts=50)


def test_geometry_rejects_unordered_positions():
    with pytest.raises(ConfigError):
        ArrayGeometry([0.0, 0.5, 0.4], [0.0, 0.0, 0.0])


def test_broadside_response_is_all_ones():
    a = array_response(ArrayGeometry.ideal(8), np.pi / 2)
    np.testing.assert_allclose(a, np.ones(8), atol=1e-15)


def test_endfire_two_element_response():
    a = array_response(ArrayGeometry.ideal(2, 0.5), 0.0)
    np.testing.assert_allclose(a, [1, -1], atol=1e-15)


def test_phase_offsets_rotate_elementwise():
    ideal = ArrayGeometry.ideal(4)
    offsets = np.array([0.3, -0.1, 1.2, 0.0])
    impaired = ArrayGeometry(ideal.positions, offsets)
    phi = 1.1
    expected = np.array([np.exp(1j * (2 * np.pi * 0.5 * m * np.cos(phi))) for m in range(4)])
    np.testing.assert_allclose(array_response(impaired, phi), expected * np.exp(1j * offsets), atol=1e-14)


def test_zero_impairment_response_is_bitwise_ideal():
    ideal = ArrayGeometry.ideal(16)
    same = sample_impaired_geometry(16, 0.5, 0.0, 0.0, seed=5)
    phis = np.linspace(0.1, 3.0, 17)
    np.testing.assert_array_equal(array_response(ideal, phis), array_response(same, phis))


@given(st.floats(0.01, np.pi - 0.01), st.integers(0, 1000))
def test_response_unit_modulus(phi, seed):
    g = sample_impaired_geometry(12, 0.5, 0.1, 1.0, seed=seed)
    np.testing.assert_allclose(np.abs(array_response(g, phi)), 1.0, rtol=1e-12)


def test_single_unit_path_equals_response():
    g = ArrayGeometry.ideal(6)
    np.testing.assert_allclose(synthesize_channel(g, PathList([1.0], [0.7])), array_response(g, 0.7), atol=1e-15)


def test_channel_linearity():
    g = sample_impaired_geometry(10, 0.5, 0.1, 0.5, seed=2)
    rng = np.random.default_rng(0)
    pa = PathList(rng.normal(size=3) + 1j * rng.normal(size=3), rng.uniform(0.2, 2.9, 3))
    pb = PathList(rng.normal(size=2) + 1j * rng.normal(size=2), rng.uniform(0.2, 2.9, 2))
    np.testing.assert_allclose(synthesize_channel(g, pa + pb),
                               synthesize_channel(g, pa) + synthesize_channel(g, pb), atol=1e-12)
    c = 0.3 - 2j
    np.testing.assert_allclose(synthesize_channel(g, PathList(c * pa.gains, pa.angles)),
                               c * synthesize_channel(g, pa), atol=1e-12)


def test_five_path_channel_shape():
    H = sample_user_channels(ArrayGeometry.ideal(32), ChannelConfig(num_paths=5), seed=0)
    assert H.channels.shape == (1, 32)


def test_single_los_path_at_fixed_angle():
    g = ArrayGeometry.ideal(16)
    cfg = ChannelConfig(num_paths=1, gain_mode="los", los_power_fraction=1.0, aoa_center_deg=60.0)
    h = sample_user_channels(g, cfg, seed=1).channels[0]
    a = array_response(g, np.deg2rad(60.0))
    # pure LOS: a unit-modulus rotation of the response vector
    ratio = h / a
    np.testing.assert_allclose(np.abs(ratio), 1.0, rtol=1e-12)
    np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)


def test_los_power_fraction_is_exact():
    from beamrl.channel import sample_paths
    p = sample_paths(ChannelConfig(num_paths=5, los_power_fraction=0.8), np.random.default_rng(0))
    power = np.abs(p.gains) ** 2
    assert power[0] / power.sum() == pytest.approx(0.8, rel=1e-12)


def test_similar_users_are_correlated():
    # Oracle: for a 32-element half-wavelength ULA and single paths, the
    # normalized correlation is the Dirichlet kernel |sin(Mx/2)/(M sin(x/2))|
    # with x = pi*(cos a - cos b).  Within a 1-degree window around 60
    # degrees the worst case (59.5 vs 60.5 degrees) is 0.9065.
    m = 32
    x = np.pi * (np.cos(np.deg2rad(59.5)) - np.cos(np.deg2rad(60.5)))
    worst = abs(np.sin(m * x / 2) / (m * np.sin(x / 2)))
    assert worst == pytest.approx(0.9065, abs=5e-4)
    g = ArrayGeometry.ideal(m)
    cfg = ChannelConfig(num_users=4, num_paths=1, los_power_fraction=1.0,
                        aoa_center_deg=60.0, angular_spread_deg=1.0)
    H = sample_user_channels(g, cfg, seed=11)
    for i, j in itertools.combinations(range(4), 2):
        assert channel_correlation(H.channels[i], H.channels[j]) > 0.9


def test_two_degree_window_can_drop_below_point_nine():
    # The same Dirichlet-kernel oracle at a full 2-degree separation.
    m = 32
    x = np.pi * (np.cos(np.deg2rad(59.0)) - np.cos(np.deg2rad(61.0)))
    assert abs(np.sin(m * x / 2) / (m * np.sin(x / 2))) < 0.7


def test_user_channels_deterministic():
    g = ArrayGeometry.ideal(16)
    cfg = ChannelConfig(num_users=3, gain_mode="rayleigh")
    assert sample_user_channels(g, cfg, seed=4) == sample_user_channels(g, cfg, seed=4)


def test_normalize_option():
    g = ArrayGeometry.ideal(16)
    H = sample_user_channels(g, ChannelConfig(num_users=2, normalize=True), seed=0)
    np.testing.assert_allclose(np.linalg.norm(H.channels, axis=1) ** 2, 16)


def test_empty_user_count_rejected():
    with pytest.raises(ConfigError):
        sample_user_channels(ArrayGeometry.ideal(4), ChannelConfig(num_users=0))


def test_csv_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(3)
    H = ChannelSet(rng.normal(size=(3, 7)) + 1j * rng.normal(size=(3, 7)))
    save_channels(H, tmp_path / "h.csv", comment="three users")
    assert load_channels(tmp_path / "h.csv") == H


def test_csv_single_row(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("# one user\n1,0,0,1,-1,0\n")
    H = load_channels(p)
    np.testing.assert_array_equal(H.channels, [[1, 1j, -1]])


def test_csv_odd_row_reports_line(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("# header\n1,0,0,1\n1,0,0\n")
    with pytest.raises(IngestionError, match=":3:"):
        load_channels(p)


def test_csv_dimension_mismatch_reports_line(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("1,0,0,1\n\n1,0,0,1,2,2\n")
    with pytest.raises(IngestionError, match=":3:.*dimension"):
        load_channels(p)


@pytest.mark.parametrize("text", ["", "# only a comment\n", "1,a\n"])
def test_csv_bad_files(tmp_path, text):
    p = tmp_path / "h.csv"
    p.write_text(text)
    with pytest.raises(IngestionError):
        load_channels(p)


def test_geometry_json_round_trip(tmp_path):
    g = sample_impaired_geometry(8, 0.5, 0.1, 1.0, seed=0)
    save_geometry(g, tmp_path / "g.json")
    doc = json.loads((tmp_path / "g.json").read_text())
    assert set(doc) == {"positions_wavelengths", "phase_offsets_rad"}
    assert load_geometry(tmp_path / "g.json") == g


def test_geometry_json_missing_field(tmp_path):
    (tmp_path / "g.json").write_text('{"positions_wavelengths": [0, 1]}')
    with pytest.raises(IngestionError):
        load_geometry(tmp_path / "g.json")
