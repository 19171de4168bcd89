"""Tests for persistence"""
