"""Test suite for mf-label."""
