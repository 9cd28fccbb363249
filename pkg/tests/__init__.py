"""Tests for ClassCac."""
