"""Quantum multi-agent reinforcement learning laboratory.

Statevector-simulated variational quantum circuits trained with the
parameter-shift rule inside a centralized-critic / distributed-actor loop,
with queue-management, coverage, and large-action-bandit environments and
matched classical baselines.
"""

__version__ = "0.1.0"

from . import baselines, cli, config, envs, marl, pshift, qsim, vqc  # noqa: F401
from .errors import (ActionError, BatchError, BudgetInfeasibleError, ConfigError,  # noqa: F401
                     DataError, DimensionError, QmarlError, SizeError, WireError)
