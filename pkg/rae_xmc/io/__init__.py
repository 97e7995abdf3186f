"""File formats, manifests and synthetic fixtures."""
