"""Checkpoint and trace persistence"""
