"""Friedman test, Nemenyi critical difference and mean ranks.

Matrices are laid out blocks x treatments: each row is one block (for example a
model/dataset pair) and each column one treatment (for example a prompting
strategy). Within a block, rank 1 goes to the highest value; ties share the
average of the ranks they span.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from scipy.stats import chi2

from .studentized import Q_ALPHA


class DegenerateMatrix(ValueError):
    pass


@dataclass(frozen=True)
class AccuracyMatrix:
    blocks: tuple[str, ...]
    treatments: tuple[str, ...]
    values: tuple[tuple[float, ...], ...]
    block_header: str = "block"

    def __post_init__(self) -> None:
        if len(self.values) != len(self.blocks):
            raise ValueError("one row of values per block")
        for row in self.values:
            if len(row) != len(self.treatments):
                raise ValueError("matrix is not rectangular")
            for v in row:
                if not (0.0 <= v <= 1.0):
                    raise ValueError(f"accuracy {v} outside [0, 1]")
        if len(set(self.treatments)) != len(self.treatments):
            raise ValueError("duplicate treatment labels")

    @classmethod
    def from_rows(cls, treatments: Sequence[str], rows: Sequence[tuple[str, Sequence[float]]],
                  block_header: str = "block") -> "AccuracyMatrix":
        return cls(
            tuple(label for label, _ in rows),
            tuple(treatments),
            tuple(tuple(float(v) for v in vals) for _, vals in rows),
            block_header,
        )

    @classmethod
    def from_csv(cls, path: str | Path) -> "AccuracyMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())

    @classmethod
    def from_csv_text(cls, text: str) -> "AccuracyMatrix":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise ValueError("matrix CSV needs a header row and at least one block")
        header, body = rows[0], rows[1:]
        return cls(
            tuple(r[0].strip() for r in body),
            tuple(h.strip() for h in header[1:]),
            tuple(tuple(float(c) for c in r[1:]) for r in body),
            header[0].strip() or "block",
        )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.block_header, *self.treatments])
        for label, row in zip(self.blocks, self.values):
            w.writerow([label, *(repr(v) for v in row)])
        return buf.getvalue()

    def drop_constant_blocks(self) -> "AccuracyMatrix":
        """Remove blocks in which every treatment scored the same."""
        keep = [i for i, row in enumerate(self.values) if len(set(row)) > 1]
        return AccuracyMatrix(
            tuple(self.blocks[i] for i in keep),
            self.treatments,
            tuple(self.values[i] for i in keep),
            self.block_header,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.blocks), len(self.treatments)


def rank_block(values: Sequence[float]) -> tuple[list[float], list[int]]:
    """Descending average ranks of one block, plus the sizes of its tie groups."""
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranks = [0.0] * len(values)
    ties: list[int] = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        if j > i:
            ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def _check(matrix: AccuracyMatrix) -> tuple[int, int]:
    n, k = matrix.shape
    if k < 2:
        raise DegenerateMatrix("need at least 2 treatments")
    if n < 2:
        raise DegenerateMatrix("need at least 2 blocks")
    return n, k


def _average_ranks(matrix: AccuracyMatrix) -> tuple[list[float], list[int]]:
    n, k = matrix.shape
    totals = [0.0] * k
    all_ties: list[int] = []
    for row in matrix.values:
        ranks, ties = rank_block(row)
        for j, r in enumerate(ranks):
            totals[j] += r
        all_ties.extend(ties)
    return [t / n for t in totals], all_ties


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    statistic_plain: float
    p_value_plain: float
    df: int
    tie_correction: float


def friedman(matrix: AccuracyMatrix) -> FriedmanResult:
    """Friedman chi-square with and without the tie correction.

    ``statistic`` divides the plain statistic by
    ``1 - sum(t^3 - t) / (N k (k^2 - 1))`` over every tie group of size t.
    When every block is a complete tie there is no evidence of any difference
    and both statistics are 0.
    """
    n, k = _check(matrix)
    mean_r, ties = _average_ranks(matrix)
    plain = 12.0 * n / (k * (k + 1)) * (math.fsum(r * r for r in mean_r) - k * (k + 1) ** 2 / 4.0)
    plain = max(plain, 0.0)
    correction = 1.0 - sum(t**3 - t for t in ties) / (n * k * (k * k - 1))
    corrected = plain / correction if correction > 1e-12 else 0.0
    df = k - 1
    return FriedmanResult(
        statistic=corrected,
        p_value=float(chi2.sf(corrected, df)),
        statistic_plain=plain,
        p_value_plain=float(chi2.sf(plain, df)),
        df=df,
        tie_correction=correction,
    )


def mean_ranks(matrix: AccuracyMatrix) -> list[tuple[str, float]]:
    """Treatments with their mean rank, best first; equal ranks sort by label."""
    if matrix.shape[1] < 1 or matrix.shape[0] < 1:
        raise DegenerateMatrix("empty matrix")
    means, _ = _average_ranks(matrix)
    return sorted(zip(matrix.treatments, means), key=lambda item: (item[1], item[0]))


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    table = Q_ALPHA.get(alpha)
    if table is None:
        raise ValueError(f"no critical values for alpha={alpha}; have {sorted(Q_ALPHA)}")
    if k not in table:
        raise ValueError(f"k={k} outside the tabulated range {min(table)}..{max(table)}")
    if n < 1:
        raise ValueError("need at least one block")
    return table[k] * math.sqrt(k * (k + 1) / (6.0 * n))


def cliques(ranked: Sequence[tuple[str, float]], cd: float) -> list[list[str]]:
    """Maximal runs of treatments whose mean ranks lie within ``cd`` of each other.

    These are the horizontal bars of a critical-difference diagram.
    """
    groups: list[tuple[int, int]] = []
    for i in range(len(ranked)):
        j = i
        while j + 1 < len(ranked) and ranked[j + 1][1] - ranked[i][1] < cd:
            j += 1
        if j > i and not any(a <= i and j <= b for a, b in groups):
            groups.append((i, j))
    return [[ranked[p][0] for p in range(a, b + 1)] for a, b in groups]


@dataclass(frozen=True)
class RankSummary:
    ranking: list[tuple[str, float]]
    friedman: FriedmanResult
    alpha: float
    cd: float
    n_blocks: int
    significant_pairs: list[tuple[str, str]] = field(default_factory=list)
    groups: list[list[str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        fr = self.friedman
        return {
            "n_blocks": self.n_blocks,
            "k_treatments": len(self.ranking),
            "mean_ranks": [{"treatment": t, "mean_rank": r} for t, r in self.ranking],
            "friedman": {
                "statistic": fr.statistic,
                "p_value": fr.p_value,
                "statistic_plain": fr.statistic_plain,
                "p_value_plain": fr.p_value_plain,
                "df": fr.df,
                "tie_correction": fr.tie_correction,
            },
            "alpha": self.alpha,
            "critical_difference": self.cd,
            "significant_pairs": [list(p) for p in self.significant_pairs],
            "cliques": self.groups,
        }


def rank_summary(matrix: AccuracyMatrix, alpha: float = 0.05) -> RankSummary:
    n, k = _check(matrix)
    fr = friedman(matrix)
    ranking = mean_ranks(matrix)
    cd = nemenyi_cd(k, n, alpha)
    pairs = [
        (a, b)
        for i, (a, ra) in enumerate(ranking)
        for b, rb in ranking[i + 1 :]
        if rb - ra >= cd
    ]
    return RankSummary(ranking, fr, alpha, cd, n, pairs, cliques(ranking, cd))
