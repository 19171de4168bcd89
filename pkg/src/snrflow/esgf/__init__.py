"""Knee detection and checkpoint selection for two-stage training"""
