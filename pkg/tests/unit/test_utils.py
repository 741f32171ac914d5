import pytest
import sys
import os
import json
from unittest.mock import patch

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', 'src'))

import utils
from exceptions import ConfigurationError


class TestLoadPresets:
    """Test cases for the bundled preset table."""

    def test_load_presets_success(self):
        """The bundled table defines every preset."""
        presets = utils.load_presets()
        assert set(presets) == {'mixed_inflection', 'cylinder', 'custom_revolution',
                                'torus_outer', 'torus_inner'}
        assert presets['mixed_inflection']['profile'][3] == pytest.approx(1.0 / 3.0)

    def test_load_presets_file_not_found(self):
        """A missing preset file is a configuration error."""
        with patch('os.path.exists', return_value=False):
            with pytest.raises(ConfigurationError):
                utils.load_presets()


class TestLoadConfig:
    """Test cases for TOML configuration loading."""

    def test_load_config_success(self, write_toml):
        """A well-formed file loads section by section."""
        path = write_toml('[surface]\npreset = "cylinder"\ngrid = 32\n\n[run]\nseed = 3\n')
        config = utils.load_config(path)
        assert config == {'surface': {'preset': 'cylinder', 'grid': 32}, 'run': {'seed': 3}}

    def test_load_config_missing_file(self, tmp_path):
        """A missing file raises ConfigurationError naming it."""
        with pytest.raises(ConfigurationError) as excinfo:
            utils.load_config(str(tmp_path / 'absent.toml'))
        assert excinfo.value.config_file.endswith('absent.toml')

    def test_load_config_invalid_toml(self, write_toml):
        """Unparsable TOML is reported, not raised raw."""
        path = write_toml('[surface\npreset = ')
        with pytest.raises(ConfigurationError):
            utils.load_config(path)

    def test_load_config_unknown_key(self, write_toml):
        """Unknown keys are named in the error."""
        path = write_toml('[surface]\ncolour = "red"\n')
        with pytest.raises(ConfigurationError) as excinfo:
            utils.load_config(path)
        assert excinfo.value.config_key == 'surface.colour'

    def test_load_config_unknown_section(self, write_toml):
        """Unknown sections are rejected."""
        path = write_toml('[plotting]\ndpi = 300\n')
        with pytest.raises(ConfigurationError) as excinfo:
            utils.load_config(path)
        assert excinfo.value.config_key == 'plotting'

    def test_load_config_wrong_type(self, write_toml):
        """A string where an integer belongs is rejected."""
        path = write_toml('[run]\nseed = "one"\n')
        with pytest.raises(ConfigurationError) as excinfo:
            utils.load_config(path)
        assert excinfo.value.config_key == 'run.seed'

    def test_load_config_bool_is_not_int(self, write_toml):
        """Booleans do not pass as integers."""
        path = write_toml('[run]\nsamples = true\n')
        with pytest.raises(ConfigurationError):
            utils.load_config(path)

    def test_bundled_configs_load(self):
        """The example configurations are valid."""
        root = os.path.join(os.path.dirname(__file__), '..', '..', 'config')
        for name in ('mixed_inflection.toml', 'controls.toml'):
            config = utils.load_config(os.path.join(root, name))
            assert 'surface' in config


class TestMergeConfig:
    """Test cases for configuration layering."""

    def test_defaults_and_preset(self, sample_presets):
        """Without file or flags the default preset is used."""
        config = utils.merge_config(presets=sample_presets)
        assert config['surface']['preset'] == 'mixed_inflection'
        assert config['surface']['profile'] == sample_presets['mixed_inflection']['profile']
        assert config['sweep']['thicknesses'] == [0.15, 0.106, 0.075, 0.053, 0.03]
        assert config['eigensolver']['tol'] == 1e-8

    def test_file_overrides_preset(self, sample_presets):
        """File values beat preset parameters."""
        config = utils.merge_config({'surface': {'b0': 0.4}}, presets=sample_presets)
        assert config['surface']['b0'] == 0.4

    def test_flags_override_file(self, sample_presets):
        """Flags beat file values; None flags are ignored."""
        config = utils.merge_config({'run': {'seed': 5, 'samples': 10}},
                                    {'run': {'seed': 9, 'samples': None}},
                                    presets=sample_presets)
        assert config['run']['seed'] == 9
        assert config['run']['samples'] == 10

    def test_flag_selects_preset(self, sample_presets):
        """A preset flag pulls in that preset's parameters."""
        config = utils.merge_config({'surface': {'preset': 'mixed_inflection'}},
                                    {'surface': {'preset': 'torus_outer'}}, presets=sample_presets)
        assert config['surface']['preset'] == 'torus_outer'
        assert config['surface']['major_radius'] == 2.0

    def test_unknown_preset(self, sample_presets):
        """Unknown presets are configuration errors."""
        with pytest.raises(ConfigurationError) as excinfo:
            utils.merge_config({'surface': {'preset': 'saddle'}}, presets=sample_presets)
        assert excinfo.value.config_key == 'surface.preset'

    def test_defaults_not_mutated(self, sample_presets):
        """Merging never changes the module defaults."""
        utils.merge_config({'sweep': {'thicknesses': [0.2, 0.1, 0.05]}}, presets=sample_presets)
        assert utils.DEFAULTS['sweep']['thicknesses'] == [0.15, 0.106, 0.075, 0.053, 0.03]


class TestConfigHash:
    """Test cases for configuration fingerprints."""

    def test_hash_is_order_independent(self):
        """Key order does not change the hash."""
        assert utils.config_hash({'a': 1, 'b': [1, 2]}) == utils.config_hash({'b': [1, 2], 'a': 1})

    def test_hash_changes_with_values(self):
        """Different values give different hashes."""
        assert utils.config_hash({'a': 1}) != utils.config_hash({'a': 2})

    def test_hash_format(self):
        """The hash is a SHA-256 hex digest."""
        digest = utils.config_hash({'a': 1})
        assert len(digest) == 64
        int(digest, 16)


class TestCsvOutput:
    """Test cases for CSV formatting and writing."""

    @pytest.mark.parametrize("value, text", [
        (0.1, '1.0000000000000001e-01'),
        (3, '3'),
        (True, 'true'),
        (None, ''),
        ('ok', 'ok'),
    ])
    def test_format_number(self, value, text):
        """Values are rendered reproducibly."""
        assert utils.format_number(value) == text

    def test_format_numpy_scalars(self):
        """numpy scalars format like Python numbers."""
        import numpy as np
        assert utils.format_number(np.float64(0.5)) == '5.0000000000000000e-01'
        assert utils.format_number(np.int64(7)) == '7'

    def test_write_and_read_csv(self, tmp_path):
        """Rows come back in column order; directories are created."""
        path = str(tmp_path / 'nested' / 'out.csv')
        utils.write_csv(path, ['a', 'b'], [{'a': 1, 'b': 0.5}, {'a': 2}])
        rows = utils.read_csv(path)
        assert rows == [{'a': '1', 'b': '5.0000000000000000e-01'}, {'a': '2', 'b': ''}]
        with open(path) as f:
            assert f.read().startswith('a,b\n')
