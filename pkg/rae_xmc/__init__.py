"""rae-xmc - retrieval-augmented inference for extreme multi-label classification."""

__version__ = "0.1.0"
__author__ = "rae-xmc contributors"
