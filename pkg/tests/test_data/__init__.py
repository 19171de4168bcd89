"""Tests for data layer"""

