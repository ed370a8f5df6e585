"""Pulse-level simulation and analysis of global parametric entangling gates
on a bus-coupled transmon star."""
from . import config, device, dynamics, errors, pulseshape, qops, tomography, xeb
from .config import ScenarioConfig
from .device import DeviceParams, DriveConfig, Tone, table_s3_device
from .errors import ErrorBudget, NoiseModel, error_budget
from .exceptions import ParamGateError
from .qops import LevelScheme, OperatorMatrix, QuantumState

__version__ = "0.1.0"
