"""Tests for dfo-tr."""
