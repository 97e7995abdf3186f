"""Tests for rae-xmc."""
