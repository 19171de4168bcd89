"""Tests for validation metrics"""

import numpy as np
import pytest

from snrflow.core.tensor import make_rng
from snrflow.errors import ShapeError
from snrflow.flow.metrics import PSNR_CAP, energy_distance, psnr


def test_psnr_known_value():
    """Test a constant offset of 0.1 on range 2 gives 10 log10(400)"""
    ref = np.zeros((2, 1, 4, 4))
    assert psnr(ref + 0.1, ref) == pytest.approx(26.0206, abs=1e-4)


def test_psnr_identical_inputs_capped():
    ref = np.ones((3, 3))
    assert psnr(ref, ref) == PSNR_CAP
    with pytest.raises(ShapeError):
        psnr(ref, np.ones((3, 2)))


def test_energy_distance_properties():
    """Test zero for identical sets, symmetry and growth with separation"""
    rng = make_rng(4)
    x = rng.standard_normal((300, 2))
    y = rng.standard_normal((300, 2))
    assert energy_distance(x, x) == pytest.approx(0.0, abs=1e-12)
    assert energy_distance(x, y) == pytest.approx(energy_distance(y, x), abs=1e-10)
    near = energy_distance(x, y + np.array([0.5, 0.0]))
    far = energy_distance(x, y + np.array([3.0, 0.0]))
    assert energy_distance(x, y) < near < far


def test_energy_distance_chunks_large_sets():
    """Test sets larger than one chunk"""
    rng = make_rng(9)
    x = rng.standard_normal((1100, 2))
    assert energy_distance(x, x + 1.0) > 0.5
    with pytest.raises(ShapeError):
        energy_distance(x, np.ones((4, 3)))
