"""Tests for expert routing"""
