"""Tests for flow matching"""
