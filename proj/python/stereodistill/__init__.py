"""Python front end for the stereodistill C++ core."""

from ._core import (
    CapabilityError,
    ConfigError,
    DomainError,
    IoError,
    ShapeError,
    StereoNet,
    metrics,
    preset_names,
    profile,
    read_pfm,
    run_cli,
    synth_sample,
    write_pfm,
)

__all__ = [
    "CapabilityError",
    "ConfigError",
    "DomainError",
    "IoError",
    "ShapeError",
    "StereoNet",
    "metrics",
    "preset_names",
    "profile",
    "read_pfm",
    "run_cli",
    "synth_sample",
    "write_pfm",
]
