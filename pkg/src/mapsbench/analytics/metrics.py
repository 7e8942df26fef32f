"""Accuracy, symbolic loss and cost."""

from __future__ import annotations

import math
from decimal import Decimal
from typing import Iterable, Sequence

from ..domain import PriceSheet, TokenUsage, Verdict


def accuracy(verdicts: Iterable[Verdict]) -> float:
    """Share of correct final verdicts; unparseable answers count as wrong."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("accuracy of an empty verdict list")
    return sum(v is Verdict.CORRECT for v in verdicts) / len(verdicts)


def mean_accuracy(per_run: Sequence[float]) -> float:
    if not per_run:
        raise ValueError("mean of no runs")
    return math.fsum(per_run) / len(per_run)


def symbolic_loss(acc_gsm8k: float, acc_symbolic: float) -> float:
    """Relative change from GSM8K to a symbolic variant, in percent.

    Negative values are losses: 0.761 -> 0.680 gives about -10.6.
    """
    if acc_gsm8k <= 0:
        raise ValueError("symbolic loss needs a positive GSM8K accuracy")
    return 100.0 * (acc_symbolic - acc_gsm8k) / acc_gsm8k


def symbolic_loss_absolute(acc_gsm8k: float, acc_symbolic: float) -> float:
    """Plain accuracy difference GSM8K minus variant (positive = loss)."""
    return acc_gsm8k - acc_symbolic


def cost_of(usage: TokenUsage, model_id: str, prices: PriceSheet) -> Decimal:
    return prices.cost(model_id, usage)
