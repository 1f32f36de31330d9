"""Library package for mf-label."""
