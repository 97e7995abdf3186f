"""Ranking metrics, label segments and significance testing."""
