import logging
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pclora.schedule import KINDS, DecaySpec, ScheduleError, curve, lambda_at, normalize_kind, validate


@pytest.mark.parametrize("kind", KINDS)
def test_endpoints(kind):
    spec = DecaySpec(kind, 100, 200)
    assert lambda_at(spec, 0) == 1.0
    assert lambda_at(spec, 100) == 0.0
    assert lambda_at(spec, 1000) == 0.0


def test_midpoint_closed_forms():
    q = 1000
    assert lambda_at(DecaySpec("linear", q, q), 500) == 0.5
    assert abs(lambda_at(DecaySpec("sine", q, q), 500) - (1 - math.sin(math.pi / 4))) < 1e-12
    assert abs(lambda_at(DecaySpec("one_minus_cosine", q, q), 500) - math.cos(math.pi / 4)) < 1e-12


def test_negative_iteration():
    with pytest.raises(ScheduleError):
        lambda_at(DecaySpec("linear", 4, 4), -1)


@given(st.sampled_from(KINDS), st.integers(1, 5000), st.integers(0, 20000))
def test_range_and_monotone(kind, q, n):
    spec = DecaySpec(kind, q, max(q, 1))
    a, b = lambda_at(spec, n), lambda_at(spec, n + 1)
    assert 0.0 <= b <= a <= 1.0


@given(st.integers(2, 10000), st.data())
def test_curve_ordering(q, data):
    n = data.draw(st.integers(1, q - 1))
    s, l, c = (lambda_at(DecaySpec(k, q, q), n) for k in ("sine", "linear", "one_minus_cosine"))
    assert s <= l <= c


def test_linear_curve_small():
    assert [lam for _, lam in curve(DecaySpec("linear", 4, 4), 1)] == [1.0, 0.75, 0.5, 0.25, 0.0]


@pytest.mark.parametrize("kind", KINDS)
def test_curve_endpoints_and_stride(kind):
    pts = curve(DecaySpec(kind, 60, 100), stride=7)
    assert pts[0] == (0, 1.0)
    assert pts[-1] == (100, 0.0)
    assert [n for n, _ in pts[:-1]] == list(range(0, 101, 7))


def test_curve_bad_stride():
    with pytest.raises(ScheduleError):
        curve(DecaySpec("linear", 4, 4), 0)


def test_validate(caplog):
    assert validate(DecaySpec.from_fraction("sine", 0.6, 1000)) == "ok"
    with caplog.at_level(logging.WARNING):
        assert validate(DecaySpec.from_fraction("sine", 0.1, 1000)) == "warning"
    assert "outside recommended range" in caplog.text
    with pytest.raises(ScheduleError):
        validate(DecaySpec("sine", 0, 100))
    with pytest.raises(ScheduleError):
        validate(DecaySpec("sine", 101, 100))


def test_from_fraction_ceil():
    assert DecaySpec.from_fraction("linear", 0.6, 1000).q == 600
    assert DecaySpec.from_fraction("linear", 0.6, 7).q == 5
    assert DecaySpec.from_fraction("linear", 0.6, 7).q_fraction == pytest.approx(5 / 7)


def test_kind_aliases():
    assert normalize_kind("one-cosine") == "one_minus_cosine"
    assert DecaySpec("1-cosine", 3, 3).kind == "one_minus_cosine"
    with pytest.raises(ValueError):
        normalize_kind("exponential")
