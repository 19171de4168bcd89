"""Tests for knee detection and checkpoint selection"""
