#!/usr/bin/env python3
"""
VTM-SIM Setup Script

For editable installation:
    pip install -e .

For development:
    pip install -e ".[dev]"
"""

from setuptools import setup

if __name__ == "__main__":
    setup()
