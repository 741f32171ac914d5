import pytest
import os
import sys

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geometry import BandSpec, build_patch

MIXED_PROFILE = (1.0, 0.0, 0.0, 1.0 / 3.0)


@pytest.fixture(scope='session')
def mixed_spec():
    """Mixed-type revolution band on a 32 x 32 grid."""
    return BandSpec('mixed_inflection', profile=MIXED_PROFILE, n_t=32, n_s=32)


@pytest.fixture(scope='session')
def mixed_patch(mixed_spec):
    """Sampled mixed-type band."""
    return build_patch(mixed_spec)


@pytest.fixture(scope='session')
def cylinder_patch():
    """Unit cylinder band, 32 x 32."""
    return build_patch(BandSpec('cylinder', profile=(1.0,), n_t=32, n_s=32))


@pytest.fixture(scope='session')
def torus_patch():
    """Outer torus band (elliptic), 32 x 32."""
    return build_patch(BandSpec('torus_outer', n_t=32, n_s=32))


@pytest.fixture(scope='session')
def coarse_patch(mixed_spec):
    """Small mixed-type patch for dense oracles."""
    return build_patch(mixed_spec.with_grid(8, 8))


@pytest.fixture
def sample_presets():
    """Minimal preset table for configuration tests."""
    return {
        "mixed_inflection": {"b0": 0.5, "b1": 0.5, "profile": list(MIXED_PROFILE)},
        "torus_outer": {"b0": 0.5, "b1": 0.5, "major_radius": 2.0, "tube_radius": 1.0,
                        "center_angle": 0.0},
    }


@pytest.fixture
def write_toml(tmp_path):
    """Write TOML text to a temporary file and return its path."""
    def _write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write
