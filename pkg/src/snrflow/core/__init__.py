"""Tensor helpers: dtypes, seeded generators and finiteness checks"""
