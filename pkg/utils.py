#!/usr/bin/env python3
"""
VTM-SIM: Utility Functions
Common helpers and utilities
"""

import os
import json
import hashlib
from typing import Any, Callable, Union
from pathlib import Path

import numpy as np


# ============ Time Utilities ============

def format_duration(seconds: float) -> str:
    """Format duration in human-readable form"""
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    elif seconds < 60:
        return f"{seconds:.2f}s"
    elif seconds < 3600:
        return f"{seconds / 60:.1f}m"
    else:
        return f"{seconds / 3600:.1f}h"


# ============ File Utilities ============

def ensure_dir(path: Union[str, Path]) -> Path:
    """Ensure directory exists, create if not"""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def safe_json_save(filepath: Union[str, Path], data: Any, indent: int = 2) -> Path:
    """Save data to JSON file, creating parent directories"""
    path = Path(filepath)
    ensure_dir(path.parent)
    with open(path, 'w') as f:
        json.dump(data, f, indent=indent, default=str)
    return path


def file_hash(filepath: Union[str, Path]) -> str:
    """Get SHA256 hash of file"""
    sha256 = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for chunk in iter(lambda: f.read(8192), b''):
            sha256.update(chunk)
    return sha256.hexdigest()


# ============ Numerics ============

def central_difference(f: Callable[[np.ndarray], Any], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Derivative of f along each coordinate of x; last axis of the result indexes x"""
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        columns.append((np.asarray(f(x + step)) - np.asarray(f(x - step))) / (2.0 * h))
    return np.stack(columns, axis=-1)


def max_abs(a: Any) -> float:
    """Infinity norm; 0.0 for empty input"""
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


# ============ Environment ============

def get_env(key: str, default: str = None, required: bool = False) -> str:
    """Get environment variable with validation"""
    value = os.environ.get(key, default)
    if required and not value:
        raise ValueError(f"Required environment variable not set: {key}")
    return value


def get_env_bool(key: str, default: bool = False) -> bool:
    """Get boolean environment variable"""
    value = os.environ.get(key, "").lower()
    if value in ("true", "1", "yes"):
        return True
    elif value in ("false", "0", "no"):
        return False
    return default


def get_env_int(key: str, default: int = 0) -> int:
    """Get integer environment variable; raises on a malformed value"""
    value = os.environ.get(key)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError as e:
        raise ValueError(f"Environment variable {key} is not an integer: {value!r}") from e


if __name__ == "__main__":
    print(format_duration(0.25), format_duration(4.2), format_duration(125))
    print(central_difference(lambda x: np.sin(x), np.array([0.0, np.pi / 2])))
