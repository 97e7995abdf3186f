"""Approximate and exact maximum-inner-product search over memory keys."""
