"""Tests for CLI"""

