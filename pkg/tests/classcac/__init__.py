"""Tests for the experiment layer."""
