"""Utility modules for rae-xmc."""
