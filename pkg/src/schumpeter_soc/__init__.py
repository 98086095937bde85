"""Thurner-model simulator with fitness-selection extinction and
waiting-time statistics (exponential vs power-law discrimination)."""

__version__ = "0.1.0"
