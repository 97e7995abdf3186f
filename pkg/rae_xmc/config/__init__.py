"""Packaged default configuration for rae-xmc."""
