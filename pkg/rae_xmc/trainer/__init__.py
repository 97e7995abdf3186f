"""Toy dual-encoder trainer for the contrastive objectives."""
