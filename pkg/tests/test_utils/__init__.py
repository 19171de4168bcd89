"""Tests for utility modules"""

