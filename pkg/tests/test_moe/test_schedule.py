"""Tests for the log-SNR schedule"""

import math

import numpy as np
import pytest

from snrflow.core.tensor import make_rng
from snrflow.errors import DomainError
from snrflow.moe.schedule import LogSnrSchedule, effective_range, inv_log_snr, log_snr, sigma_to_log_snr


def test_known_values():
    assert log_snr(0.5) == pytest.approx(0.0, abs=1e-15)
    assert log_snr(0.875) == pytest.approx(-2.0 * math.log(7.0), abs=1e-12)
    assert inv_log_snr(0.0) == 0.5


def test_round_trip_on_random_times():
    """Test t(lambda(t)) = t on many random times"""
    t = make_rng(0).uniform(1e-6, 1.0 - 1e-6, size=10_000)
    np.testing.assert_allclose(inv_log_snr(log_snr(t)), t, rtol=0.0, atol=1e-12)


def test_lambda_decreases_with_noise():
    t = np.linspace(0.01, 0.99, 99)
    assert np.all(np.diff(log_snr(t)) < 0)


def test_inverse_is_stable_for_extreme_lambdas():
    """Test the logistic form neither overflows nor loses the tails"""
    with np.errstate(over="raise"):
        values = inv_log_snr(np.array([-2000.0, 2000.0]))
    assert values[0] == 1.0
    assert values[1] == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_log_snr_domain(bad):
    with pytest.raises(DomainError):
        log_snr(bad)


def test_inverse_domain_and_sigma():
    with pytest.raises(DomainError):
        inv_log_snr(float("inf"))
    with pytest.raises(DomainError):
        sigma_to_log_snr(0.0)
    assert sigma_to_log_snr(1.0) == 0.0


def test_effective_range_of_default_schedule():
    schedule = LogSnrSchedule()
    assert schedule.lambda_min == pytest.approx(-7.04, abs=0.01)
    assert schedule.lambda_max == pytest.approx(8.87, abs=0.01)
    assert schedule.contains(0.0)
    assert not schedule.contains(9.0)
    assert effective_range(0.5, 2.0) == pytest.approx((-2 * math.log(2.0), 2 * math.log(2.0)))


def test_invalid_sigma_bounds():
    with pytest.raises(DomainError):
        LogSnrSchedule(sigma_min_eff=2.0, sigma_max_eff=1.0)
    with pytest.raises(DomainError):
        effective_range(0.1, float("inf"))
