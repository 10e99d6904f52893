#!/usr/bin/env python3
"""
VTM-SIM: Configuration Management
Environment-based config with validation
"""

import os
import json
from pathlib import Path
from dataclasses import dataclass, field, asdict
from typing import Dict, Any

from utils import get_env, get_env_bool, get_env_int, safe_json_save


@dataclass
class IntegratorConfig:
    """Fixed-step integration parameters"""
    dt: float = 1e-4  # s
    sample_stride: int = 10  # steps between output rows
    grid_tolerance: float = 1e-12  # s, allowed event offset from a grid node
    fd_step: float = 1e-6  # rad, finite-difference step for model checks

    def validate(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.sample_stride < 1:
            raise ValueError(f"sample_stride must be >= 1, got {self.sample_stride}")
        if self.grid_tolerance < 0:
            raise ValueError("grid_tolerance must be non-negative")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


@dataclass
class ToleranceConfig:
    """Acceptance tolerances for run summaries and comparisons"""
    momentum_jump: float = 1e-8  # absolute, consistent transitions
    energy_drift: float = 1e-6  # relative, per smooth phase
    compare_gate: float = 1e-7  # max-norm between consistent methods
    rank_scale: float = 1e3

    def validate(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"Tolerance {name} must be positive, got {value}")


@dataclass
class OutputConfig:
    log_dir: str = "logs"
    save_session_log: bool = False
    float_digits: int = 17

    def validate(self):
        if not 1 <= self.float_digits <= 17:
            raise ValueError(f"float_digits must be in 1..17, got {self.float_digits}")


@dataclass
class SimConfig:
    """
    Main VTM-SIM configuration container

    Loads from environment variables and an optional JSON config file.
    """
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    @classmethod
    def from_env(cls) -> "SimConfig":
        """Load config from environment variables"""
        config = cls()

        config.threads = get_env_int("VTM_SIM_THREADS", config.threads)
        config.output.log_dir = get_env("VTM_SIM_LOG_DIR", config.output.log_dir)
        config.integrator.sample_stride = get_env_int("VTM_SIM_SAMPLE_STRIDE", config.integrator.sample_stride)
        config.output.save_session_log = get_env_bool("VTM_SIM_SAVE_LOG", config.output.save_session_log)

        return config

    @classmethod
    def from_file(cls, path: str) -> "SimConfig":
        """Load config from JSON file"""
        with open(path) as f:
            data = json.load(f)

        config = cls()

        if "integrator" in data:
            config.integrator = IntegratorConfig(**data["integrator"])
        if "tolerances" in data:
            config.tolerances = ToleranceConfig(**data["tolerances"])
        if "output" in data:
            config.output = OutputConfig(**data["output"])
        if "threads" in data:
            config.threads = int(data["threads"])

        return config

    def validate(self):
        """Validate all config values"""
        self.integrator.validate()
        self.tolerances.validate()
        self.output.validate()
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "integrator": asdict(self.integrator),
            "tolerances": asdict(self.tolerances),
            "output": asdict(self.output),
            "threads": self.threads,
        }

    def save(self, path: str):
        safe_json_save(path, self.to_dict())


def get_config() -> SimConfig:
    """
    Get VTM-SIM configuration

    Priority:
    1. Config file (if VTM_SIM_CONFIG_PATH set)
    2. Environment variables
    3. Defaults
    """
    config = SimConfig.from_env()

    config_path = os.environ.get("VTM_SIM_CONFIG_PATH")
    if config_path and Path(config_path).exists():
        file_config = SimConfig.from_file(config_path)
        with open(config_path) as f:
            present = json.load(f)
        # only sections present in the file override the environment
        for section in ("integrator", "tolerances", "output", "threads"):
            if section in present:
                setattr(config, section, getattr(file_config, section))

    return config


EXAMPLE_CONFIG = """
{
  "integrator": {
    "dt": 0.0001,
    "sample_stride": 10,
    "grid_tolerance": 1e-12,
    "fd_step": 1e-6
  },
  "tolerances": {
    "momentum_jump": 1e-8,
    "energy_drift": 1e-6,
    "compare_gate": 1e-7,
    "rank_scale": 1000.0
  },
  "output": {
    "log_dir": "logs",
    "save_session_log": false,
    "float_digits": 17
  },
  "threads": 4
}
"""


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="VTM-SIM Config Manager")
    parser.add_argument("--show", action="store_true", help="Show current config")
    parser.add_argument("--validate", action="store_true", help="Validate config")
    parser.add_argument("--template", action="store_true", help="Print config template")
    args = parser.parse_args()

    if args.template:
        print(EXAMPLE_CONFIG)
    elif args.show or args.validate:
        config = get_config()

        if args.validate:
            try:
                config.validate()
                print("✅ Config valid")
            except ValueError as e:
                print(f"❌ Config invalid: {e}")

        if args.show:
            print(json.dumps(config.to_dict(), indent=2))
    else:
        parser.print_help()
