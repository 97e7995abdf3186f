"""Core data model, configuration and reporting for rae-xmc."""
