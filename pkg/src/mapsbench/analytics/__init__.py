from .metrics import accuracy, cost_of, mean_accuracy, symbolic_loss, symbolic_loss_absolute
from .ranks import (
    AccuracyMatrix,
    DegenerateMatrix,
    FriedmanResult,
    RankSummary,
    cliques,
    friedman,
    mean_ranks,
    nemenyi_cd,
    rank_block,
    rank_summary,
)

__all__ = [
    "AccuracyMatrix",
    "DegenerateMatrix",
    "FriedmanResult",
    "RankSummary",
    "accuracy",
    "cliques",
    "cost_of",
    "friedman",
    "mean_accuracy",
    "mean_ranks",
    "nemenyi_cd",
    "rank_block",
    "rank_summary",
    "symbolic_loss",
    "symbolic_loss_absolute",
]
