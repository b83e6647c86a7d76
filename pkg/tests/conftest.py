from pathlib import Path

import pytest

from hydrocsi.core import Geometry, SystemConfig

SCENES_DIR = Path(__file__).resolve().parent.parent / "scenes"


@pytest.fixture(scope="session")
def lab_geometry():
    # equal heights, 45-degree reflection angle
    return Geometry(bs_height_m=1.0, ue_height_m=1.0, horizontal_distance_m=2.0)


@pytest.fixture(scope="session")
def mmwave_config(lab_geometry):
    return SystemConfig(
        carrier_freq_hz=28e9,
        subcarrier_spacing_hz=70e6 / 46,
        num_subcarriers=46,
        num_antennas=1,
        geometry=lab_geometry,
        window_duration_s=300.0,
        session_duration_s=2.0,
        gap_duration_s=20.0,
        intra_session_rate_hz=100.0,
    )


@pytest.fixture(scope="session")
def lte_config(lab_geometry):
    return SystemConfig(
        carrier_freq_hz=3.1e9,
        subcarrier_spacing_hz=200e3,
        num_subcarriers=100,
        num_antennas=3,
        geometry=lab_geometry,
        window_duration_s=300.0,
        session_duration_s=2.0,
        gap_duration_s=20.0,
        intra_session_rate_hz=200.0,
    )


@pytest.fixture(scope="session")
def uniform_config(lab_geometry):
    """Continuously sampled 60 s window; fast to simulate and free of the
    burst schedule's spectral grating lobes."""
    return SystemConfig(
        carrier_freq_hz=28e9,
        subcarrier_spacing_hz=70e6 / 46,
        num_subcarriers=46,
        num_antennas=1,
        geometry=lab_geometry,
        window_duration_s=60.0,
        session_duration_s=60.0,
        gap_duration_s=0.0,
        intra_session_rate_hz=20.0,
    )
