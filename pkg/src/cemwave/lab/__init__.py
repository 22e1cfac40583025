"""Experiment driver: configuration, media, sources, metrics and output."""
