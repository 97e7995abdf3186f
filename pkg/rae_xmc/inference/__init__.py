"""Retrieval-augmented predictors and retrieval diagnostics."""
