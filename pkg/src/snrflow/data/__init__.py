"""Data models and run registry"""
