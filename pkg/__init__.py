"""
VTM-SIM: Variable-Topology Mechanism Simulator

Forward dynamics of planar serial chains whose joints lock at scheduled
times, with momentum-consistent velocity jumps at every lock event.
"""

__version__ = "0.1.0"

# Modules live flat at the repository root; import them directly
# (e.g. `from simulate import run_scenario`).
