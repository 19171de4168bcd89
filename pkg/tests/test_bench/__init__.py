"""Tests for the timing harness"""
