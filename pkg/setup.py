#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Basic setup configuration information."""
# Based on: https://github.com/kennethreitz/setup.py

from setuptools import setup, find_packages


with open("README.rst") as f:
    readme = f.read()

setup(
    name="pyRearrange",
    version="0.1.0",
    description="Pitch and timbre disentanglement of polyphonic music for "
                "transcription, instrument activity detection and "
                "composition style transfer.",
    long_description=readme,
    author="pyRearrange contributors",
    license="GPL-3.0-or-later",
    python_requires=">=3.8",
    install_requires=["numpy", "scipy", "torch>=1.13", "pretty_midi",
                      "soundfile", "PyYAML", "tqdm"],
    extras_require={"test": ["mpmath"], "experiments": ["matplotlib"]},
    entry_points={"console_scripts": ["pyrearrange=pyRearrange.cli:main"]},
    packages=find_packages(exclude=("tests", "docs"))
)
