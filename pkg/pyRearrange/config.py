#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Helpers shared by the configuration classes.

Configuration objects are dataclasses that are built from plain mappings,
usually read from YAML files. Every resolved configuration has a hash, the
SHA-256 digest of its canonical JSON form, that is logged with each run and
stored with the artifacts it produces.
"""

import dataclasses
import hashlib
import json
from typing import Any, Mapping

import yaml


def check_keys(mapping: Mapping[str, Any], cls) -> None:
    """
    Make sure a mapping only has keys that are fields of a dataclass.

    Parameters
    ----------
    mapping : dict
        Configuration values.
    cls : type
        Dataclass the values are meant for.

    Raises
    ------
    ValueError
        When there are unknown keys.
    """
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {', '.join(unknown)}")


def config_hash(info: Mapping[str, Any]) -> str:
    """Return the SHA-256 hex digest of the canonical JSON of a mapping."""
    canonical = json.dumps(info, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config_file(path) -> dict:
    """
    Read a YAML configuration file.

    Parameters
    ----------
    path : str or path-like
        File to read.

    Returns
    -------
    dict
        Top level mapping of the file; empty for an empty file.

    Raises
    ------
    ValueError
        When the file is not valid YAML or does not hold a mapping.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            info = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValueError(f"Cannot parse configuration file {path}: "
                             f"{exc}") from exc
    if info is None:
        return {}
    if not isinstance(info, dict):
        raise ValueError(f"Configuration file {path} must hold a mapping")
    return info


def write_config_file(path, info: Mapping[str, Any]) -> None:
    """Write a resolved configuration as YAML with sorted keys."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(dict(info), f, sort_keys=True)
