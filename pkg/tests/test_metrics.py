import csv
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA
from mapsbench.analytics import accuracy, cost_of, mean_accuracy, symbolic_loss, symbolic_loss_absolute
from mapsbench.domain import PriceSheet, TokenUsage, UnknownModelError, Verdict

C, I, U = Verdict.CORRECT, Verdict.INCORRECT, Verdict.UNPARSEABLE


def test_accuracy():
    assert accuracy([C, C, C, I]) == 0.75
    assert accuracy([C] * 4) == 1.0
    assert accuracy([C, U]) == 0.5
    with pytest.raises(ValueError):
        accuracy([])


def test_mean_accuracy():
    assert mean_accuracy([0.9, 1.0]) == pytest.approx(0.95)
    assert mean_accuracy([0.42]) == 0.42
    # five runs of 100 questions averaging to the 0.955 reporting style
    assert mean_accuracy([0.96, 0.95, 0.95, 0.96, 0.955]) == pytest.approx(0.955)
    with pytest.raises(ValueError):
        mean_accuracy([])


def test_symbolic_loss_examples():
    assert symbolic_loss(0.761, 0.680) == pytest.approx(-10.64, abs=0.01)
    assert symbolic_loss(0.849, 0.864) == pytest.approx(1.77, abs=0.01)
    assert symbolic_loss(0.790, 0.770) == pytest.approx(-2.53, abs=0.01)
    assert symbolic_loss(0.5, 0.5) == 0
    assert symbolic_loss_absolute(0.761, 0.680) == pytest.approx(0.081)
    with pytest.raises(ValueError):
        symbolic_loss(0.0, 0.3)


unit = st.floats(0.0, 1.0)


@given(st.floats(0.001, 1.0), unit)
def test_symbolic_loss_sign(gsm, sym):
    loss = symbolic_loss(gsm, sym)
    assert symbolic_loss(gsm, gsm) == 0
    assert (loss > 0) == (sym > gsm) and (loss < 0) == (sym < gsm)


def test_printed_parentheses_reproduced():
    with open(DATA / "symbolic_loss_cells.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 120
    for r in rows:
        got = symbolic_loss(float(r["acc_gsm8k"]), float(r["acc_symbolic"]))
        assert abs(got - float(r["printed_loss_pct"])) <= 0.05, r


def test_cost_of():
    prices = PriceSheet.from_mapping({"m": {"input": "0.15", "output": "0.60"}})
    assert cost_of(TokenUsage(1_000_000, 0), "m", prices) == Decimal("0.15")
    assert cost_of(TokenUsage(), "m", prices) == 0
    with pytest.raises(UnknownModelError):
        cost_of(TokenUsage(1, 1), "x", prices)
