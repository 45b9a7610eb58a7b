"""Simulator for single-round, bit-budgeted distributed offline estimation in RL."""

from .algos import Algorithm, EstimateBundle, TdSchedule, run_distributed, theoretical_bound
from .quantize import QuantizedMessage, QuantizerConfig
from .risk import RiskReport, Scenario, budget_frontier, estimate_risk, sweep

__version__ = "0.1.0"
