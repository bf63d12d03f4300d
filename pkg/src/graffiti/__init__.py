"""Tracker, client, payload codec, mock storage sites and churn simulator."""

__version__ = "0.1.0"
