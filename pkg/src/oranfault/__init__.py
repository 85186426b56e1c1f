"""Fault prediction for disaggregated RAN deployments from multi-level telemetry.

Simulated CU/DU/host telemetry under scheduled stress injection is reduced with
PCA, forecast a few seconds ahead with an LSTM and classified with a Random
Forest.
"""

from .telemetry import FaultLabel

__all__ = ["FaultLabel"]
__version__ = "0.1.0"
