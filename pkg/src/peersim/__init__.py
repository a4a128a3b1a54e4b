"""Peer review as a multi-round market of manuscripts, referees and ranked journals."""

__version__ = "0.1.0"

from .engine import ConfigError, SimConfig, bootstrap, collect_rejection_stats, run_round, run_simulation
from .experiments import SweepSpec, phase_summary, run_sweep
from .quality import CalibrationError, QualityDistribution, calibrate_distribution, tail_mass

__all__ = [
    "CalibrationError",
    "ConfigError",
    "QualityDistribution",
    "SimConfig",
    "SweepSpec",
    "bootstrap",
    "calibrate_distribution",
    "collect_rejection_stats",
    "phase_summary",
    "run_round",
    "run_simulation",
    "run_sweep",
    "tail_mass",
]
