"""Sidelink platoon scheduling simulator."""

import json

from ._prcara import (
    ConfigError,
    EncodeError,
    ExtendedSci,
    FormatError,
    MissingArtifact,
    PrcaraError,
    build_csr,
    decode_sci,
    default_config_json,
    encode_sci,
    run_records_csv,
    simulate,
)


def default_config():
    """The built-in configuration as a dict."""
    return json.loads(default_config_json())


def run(config, jobs=1):
    """Runs a sweep described by a dict; returns one dict per aggregate row."""
    return simulate(json.dumps(config), jobs)


__all__ = [
    "ConfigError",
    "EncodeError",
    "ExtendedSci",
    "FormatError",
    "MissingArtifact",
    "PrcaraError",
    "build_csr",
    "decode_sci",
    "default_config",
    "default_config_json",
    "encode_sci",
    "run",
    "run_records_csv",
    "simulate",
]
