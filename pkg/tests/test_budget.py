import numpy as np
import pytest
from hypothesis import given, strategies as st

from astromf.budget import BudgetExhausted, BudgetLedger


def test_rosenbrock_cost_example():
    ledger = BudgetLedger([1, 0.3, 0.1])
    ledger.charge(0, 10).charge(1, 20)
    assert ledger.spent == pytest.approx(16.0)


def test_inventory_cost_example():
    ledger = BudgetLedger([1, 0.5, 0.3])
    ledger.charge(2, 100)
    assert ledger.spent == pytest.approx(30.0)


def test_zero_queries_is_noop():
    ledger = BudgetLedger([1.0], 0.0)
    ledger.charge(0, 0)
    assert ledger.spent == 0.0


def test_strict_charge_refuses_crossing():
    ledger = BudgetLedger([1.0, 0.5], 10)
    ledger.charge(0, 9)
    with pytest.raises(BudgetExhausted):
        ledger.charge(0, 2)
    assert ledger.spent == 9
    ledger.charge(1, 2)
    assert ledger.exhausted


def test_overshoot_books_one_batch_then_stops():
    ledger = BudgetLedger([1.0], 10)
    ledger.charge(0, 8)
    ledger.charge(0, 5, allow_overshoot=True)
    assert ledger.spent == 13
    with pytest.raises(BudgetExhausted):
        ledger.charge(0, 1, allow_overshoot=True)


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        BudgetLedger([1.0]).charge(0, -1)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 50)), max_size=30))
def test_spent_is_weighted_count_and_monotone(ops):
    costs = np.array([1.0, 0.3, 0.1])
    ledger = BudgetLedger(costs, 400)
    counts = np.zeros(3)
    last = 0.0
    for level, count in ops:
        try:
            ledger.charge(level, count, allow_overshoot=count % 2 == 0)
        except BudgetExhausted:
            pass
        else:
            counts[level] += count
        assert ledger.spent >= last
        last = ledger.spent
        assert ledger.spent == pytest.approx(costs @ counts)
