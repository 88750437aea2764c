"""Tests for bagshrink."""
