"""Heteroscedastic LSTM anomaly detection for cyber-physical time series."""

__version__ = "0.1.0"
