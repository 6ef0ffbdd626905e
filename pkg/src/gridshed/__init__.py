"""Derivative-free policy search for grid load-shedding voltage recovery.

The package combines a desk-scale surrogate of fault-induced delayed
voltage recovery (FIDVR) with evolutionary-strategy optimizers (vanilla,
guided by a surrogate-gradient subspace, and meta-latent variants) and
physics-informed action masking.
"""

__version__ = "0.1.0"

from gridshed.errors import (
    CheckpointError,
    ConfigError,
    RolloutError,
    SimulationFault,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "RolloutError",
    "SimulationFault",
    "__version__",
]
