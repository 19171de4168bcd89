"""Core tests"""

