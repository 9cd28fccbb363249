"""Test session settings."""

import logging

import pytest


@pytest.fixture(autouse=True)
def classcac_debug_logging(caplog: pytest.LogCaptureFixture):
    """Capture the package debug logs in every test."""
    caplog.set_level(logging.DEBUG, logger="classcac")
