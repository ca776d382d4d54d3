"""Deterministic cellular network simulation."""
