"""Attention timing harness"""
