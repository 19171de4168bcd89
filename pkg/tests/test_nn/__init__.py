"""Tests for neural network building blocks"""
