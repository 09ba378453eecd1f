"""Bearing remaining-useful-life pipeline: ingestion, features, health-indicator
labels, a small autodiff engine with the networks built on it, metrics and an
experiment harness."""

__version__ = "0.1.0"
