"""Tests for pyflops."""
