"""Attention kernels, DiT blocks and flat parameter handling"""
