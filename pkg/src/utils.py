"""utils.py - preset and configuration loading, hashing and CSV output.

This module provides the small amount of plumbing shared by every subcommand:

- 'load_presets': Load the default geometric parameters of each surface preset.
- 'load_config': Load a TOML run configuration and check its keys.
- 'merge_config': Layer presets, file values and command-line flags.
- 'config_hash': Fingerprint the effective configuration.
- 'write_csv' / 'format_number': Emit reproducible CSV files.

Paths to bundled data are resolved relative to this file's location."""

import os
import csv
import json
import copy
import hashlib
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import toml

from exceptions import ConfigurationError
from logging_config import get_logger

logger = get_logger(__name__)

# Allowed keys per section and the types they may take
CONFIG_SCHEMA: Dict[str, Dict[str, tuple]] = {
    'surface': {
        'preset': (str,),
        'b0': (int, float),
        'b1': (int, float),
        'period': (int, float),
        'grid': (int,),
        'profile': (list,),
        'major_radius': (int, float),
        'tube_radius': (int, float),
        'center_angle': (int, float),
    },
    'sweep': {
        'thicknesses': (list,),
        'n_xi': (int,),
        'cross_check': (bool,),
        'min_n_s': (int,),
        'export_matrices': (bool,),
    },
    'eigensolver': {
        'tol': (int, float),
        'max_iter': (int,),
        'block': (int,),
    },
    'run': {
        'seed': (int,),
        'samples': (int,),
        'grids': (list,),
        'family': (str,),
        'single_thread': (bool,),
        'out': (str,),
    },
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'surface': {'preset': 'mixed_inflection', 'grid': 64},
    'sweep': {
        'thicknesses': [0.15, 0.106, 0.075, 0.053, 0.03],
        'n_xi': 2,
        'cross_check': False,
        'min_n_s': 32,
        'export_matrices': False,
    },
    'eigensolver': {'tol': 1e-8, 'max_iter': 5000, 'block': 2},
    'run': {
        'seed': 1,
        'samples': 50,
        'grids': [64, 128],
        'family': 'random',
        'single_thread': False,
        'out': 'results',
    },
}


def _data_path(filename: str) -> str:
    script_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(script_dir, '..', filename)


def load_presets(filename: str = 'data/presets.json') -> Dict[str, Dict[str, Any]]:
    """Loads the default parameters of every surface preset from a JSON file."""
    file_path = _data_path(filename)

    if not os.path.exists(file_path):
        raise ConfigurationError(f"File not found: {file_path}. Please ensure the file exists.",
                                 config_file=file_path)

    with open(file_path, 'r') as f:
        return json.load(f)


def _check_section(section: str, values: Mapping[str, Any], source: Optional[str]) -> None:
    if section not in CONFIG_SCHEMA:
        raise ConfigurationError(f"Unknown section '{section}'", config_file=source, config_key=section)
    schema = CONFIG_SCHEMA[section]
    for key, value in values.items():
        if key not in schema:
            raise ConfigurationError(f"Unknown key '{key}'", config_file=source,
                                     config_key=f"{section}.{key}")
        allowed = schema[key]
        # bool is an int subclass; keep the two apart
        if isinstance(value, bool) and bool not in allowed:
            ok = False
        else:
            ok = isinstance(value, allowed)
        if not ok:
            names = '/'.join(t.__name__ for t in allowed)
            raise ConfigurationError(f"Expected {names}, got {type(value).__name__}",
                                     config_file=source, config_key=f"{section}.{key}")


def load_config(path: str) -> Dict[str, Dict[str, Any]]:
    """Load a TOML run configuration.

    Args:
        path: Path to the TOML file

    Returns:
        Mapping of section name to key/value pairs

    Raises:
        ConfigurationError: If the file is missing, unparsable or has unknown keys
    """
    if not os.path.exists(path):
        raise ConfigurationError("File not found", config_file=path)

    try:
        with open(path, 'r') as f:
            data = toml.load(f)
    except toml.TomlDecodeError as e:
        raise ConfigurationError(f"Invalid TOML: {e}", config_file=path) from e

    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigurationError("Top-level keys must be sections", config_file=path,
                                     config_key=section)
        _check_section(section, values, path)

    logger.info("Configuration loaded", extra={'config_file': path, 'sections': sorted(data)})
    return data


def merge_config(
    file_config: Optional[Mapping[str, Mapping[str, Any]]] = None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    presets: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> Dict[str, Dict[str, Any]]:
    """Build the effective configuration.

    Precedence (lowest first): built-in defaults, preset parameters from
    ``data/presets.json``, the configuration file, command-line overrides.
    ``None`` values in ``overrides`` are ignored.
    """
    merged = copy.deepcopy(DEFAULTS)
    file_config = file_config or {}
    overrides = overrides or {}

    for layer in (file_config, overrides):
        for section, values in layer.items():
            _check_section(section, {k: v for k, v in values.items() if v is not None}, None)

    preset = (overrides.get('surface', {}).get('preset')
              or file_config.get('surface', {}).get('preset')
              or merged['surface']['preset'])
    presets = presets if presets is not None else load_presets()
    if preset not in presets:
        raise ConfigurationError(f"Unknown preset '{preset}'", config_key='surface.preset')
    merged['surface'].update(presets[preset])
    merged['surface']['preset'] = preset

    for layer in (file_config, overrides):
        for section, values in layer.items():
            for key, value in values.items():
                if value is not None:
                    merged[section][key] = value

    return merged


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON dump of a configuration mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def format_number(value: Any) -> str:
    """Format a value for CSV output; floats use full-precision scientific notation."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.16e}"
    if value is None:
        return ''
    try:
        # numpy scalars
        if hasattr(value, 'dtype'):
            if value.dtype.kind in 'iu':
                return str(int(value))
            if value.dtype.kind == 'f':
                return f"{float(value):.16e}"
    except (AttributeError, TypeError):
        pass
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """Write rows to a CSV file with a fixed column order.

    Args:
        path: Output file path; parent directories are created
        columns: Column names in output order
        rows: Mappings from column name to value

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)

    count = 0
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(row.get(column)) for column in columns])
            count += 1

    logger.info("CSV written", extra={'path': path, 'rows': count})
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    """Read a CSV file written by ``write_csv`` into a list of dicts."""
    with open(path, 'r', newline='') as f:
        return list(csv.DictReader(f))
