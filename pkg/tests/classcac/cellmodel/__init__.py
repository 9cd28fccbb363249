"""Tests for the cell model library."""
