"""Turns a run log into accuracy, cost and rank tables."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from .analytics import AccuracyMatrix, rank_summary, symbolic_loss, symbolic_loss_absolute
from .analytics.studentized import Q_ALPHA
from .domain import PriceSheet, UnknownModelError, Variant, Verdict
from .orchestrator import RUN_LOG, LogError, RunRecord, read_run_log

COST_QUANTUM = Decimal("0.000001")
_VARIANT_ORDER = {v.value: i for i, v in enumerate(Variant)}
_STRATEGY_ORDER = {"Baseline": 0, "CoT": 1, "SR": 2}


def strategy_sort_key(label: str) -> tuple[int, str]:
    return (_STRATEGY_ORDER.get(label, 3), label)


def format_cost(value: Decimal) -> str:
    return str(value.quantize(COST_QUANTUM, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class Cell:
    model_id: str
    variant: str
    strategy: str
    per_run: tuple[Fraction, ...]
    attempts: int
    unparseable: int
    cost_usd: Decimal

    @property
    def mean_accuracy(self) -> Fraction:
        return sum(self.per_run, Fraction(0)) / len(self.per_run)

    @property
    def cost_per_100(self) -> Decimal:
        return self.cost_usd * 100 / self.attempts


def load_records(log: str | Path) -> list[RunRecord]:
    path = Path(log)
    if path.is_dir():
        path = path / RUN_LOG
    if not path.exists():
        raise LogError(f"run log {path} not found")
    records = read_run_log(path)
    if not records:
        raise LogError(f"run log {path} is empty")
    return records


def _check_record(rec: RunRecord) -> None:
    key, trace = rec.key, rec.trace
    if key.question_id != trace.question_id or key.run_index != trace.run_index:
        raise LogError(f"run key {key} does not match its trace")
    if key.strategy != trace.strategy.label:
        raise LogError(f"run key {key} names strategy {key.strategy}, trace ran {trace.strategy.label}")
    if Variant(key.variant).dataset.value != key.dataset:
        raise LogError(f"run key {key} pairs variant {key.variant} with dataset {key.dataset}")


def build_cells(records: Iterable[RunRecord], prices: PriceSheet) -> list[Cell]:
    verdicts: dict[tuple[str, str, str], dict[int, list[Verdict]]] = defaultdict(lambda: defaultdict(list))
    costs: dict[tuple[str, str, str], Decimal] = defaultdict(Decimal)
    seen = set()
    for rec in records:
        _check_record(rec)
        if rec.key in seen:
            raise LogError(f"duplicate run key {rec.key}")
        seen.add(rec.key)
        cell = (rec.key.model_id, rec.key.variant, rec.key.strategy)
        verdicts[cell][rec.key.run_index].append(rec.trace.final_verdict)
        try:
            costs[cell] += prices.cost(rec.key.model_id, rec.trace.total_usage)
        except UnknownModelError as exc:
            raise LogError(f"price sheet has no entry for model {exc.args[0]}") from None
    out = []
    for (model, variant, strategy), runs in verdicts.items():
        per_run = tuple(
            Fraction(sum(v is Verdict.CORRECT for v in vs), len(vs)) for _, vs in sorted(runs.items())
        )
        flat = [v for vs in runs.values() for v in vs]
        out.append(
            Cell(model, variant, strategy, per_run, len(flat),
                 sum(v is Verdict.UNPARSEABLE for v in flat), costs[(model, variant, strategy)])
        )
    out.sort(key=lambda c: (c.model_id, _VARIANT_ORDER[c.variant], strategy_sort_key(c.strategy)))
    return out


def _ranks_section(matrix: AccuracyMatrix | None, reason: str, alpha: float) -> dict[str, Any]:
    if matrix is None:
        return {"skipped": reason}
    n, k = len(matrix.blocks), len(matrix.treatments)
    if k < 2 or n < 2:
        return {"skipped": f"need at least 2 treatments and 2 blocks, have {k} and {n}"}
    if k not in Q_ALPHA.get(alpha, {}):
        return {"skipped": f"no critical-difference constant for k={k}"}
    return rank_summary(matrix, alpha).to_dict()


def _matrix(treatments: Sequence[str], rows: list[tuple[str, list[float]]], header: str) -> AccuracyMatrix | None:
    if not rows:
        return None
    return AccuracyMatrix.from_rows(treatments, rows, block_header=header)


def rank_sections(cells: Sequence[Cell], alpha: float = 0.05) -> dict[str, Any]:
    acc = {(c.model_id, c.variant, c.strategy): float(c.mean_accuracy) for c in cells}
    models = sorted({c.model_id for c in cells})
    variants = sorted({c.variant for c in cells}, key=_VARIANT_ORDER.__getitem__)
    strategies = sorted({c.strategy for c in cells}, key=strategy_sort_key)

    # strategies compared over every complete (model, variant) block
    rows = [
        (f"{m}|{v}", [acc[(m, v, s)] for s in strategies])
        for m in models
        for v in variants
        if all((m, v, s) in acc for s in strategies)
    ]
    out: dict[str, Any] = {
        "strategies": _ranks_section(_matrix(strategies, rows, "model|variant"), "no complete blocks", alpha)
    }
    per_variant = {}
    for v in variants:
        vrows = [
            (s, [acc[(m, v, s)] for m in models])
            for s in strategies
            if all((m, v, s) in acc for m in models)
        ]
        per_variant[v] = _ranks_section(_matrix(models, vrows, "strategy"), "no complete blocks", alpha)
    out["models_by_variant"] = per_variant
    return out


def build_report(log: str | Path | Sequence[RunRecord], prices: PriceSheet, *, alpha: float = 0.05) -> dict[str, Any]:
    records = load_records(log) if isinstance(log, (str, Path)) else list(log)
    if not records:
        raise LogError("run log is empty")
    cells = build_cells(records, prices)
    gsm = {(c.model_id, c.strategy): c.mean_accuracy for c in cells if c.variant == Variant.GSM8K.value}
    rows = []
    for c in cells:
        row: dict[str, Any] = {
            "model": c.model_id,
            "dataset": Variant(c.variant).dataset.value,
            "variant": c.variant,
            "strategy": c.strategy,
            "runs": len(c.per_run),
            "attempts": c.attempts,
            "per_run_accuracy": [float(a) for a in c.per_run],
            "mean_accuracy": float(c.mean_accuracy),
            "unparseable": c.unparseable,
            "cost_usd": format_cost(c.cost_usd),
            "cost_per_100_usd": format_cost(c.cost_per_100),
        }
        base = gsm.get((c.model_id, c.strategy))
        if Variant(c.variant).symbolic and base:
            row["symbolic_loss_pct"] = round(symbolic_loss(float(base), float(c.mean_accuracy)), 2)
            row["symbolic_loss_abs"] = round(symbolic_loss_absolute(float(base), float(c.mean_accuracy)), 6)
        rows.append(row)
    return {
        "cells": rows,
        "ranks": rank_sections(cells, alpha),
        "records": len(records),
    }


# -- rendering ----------------------------------------------------------------


def dumps_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def accuracy_csv(report: dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "variant", "strategy", "runs", "mean_accuracy", "symbolic_loss_pct", "unparseable"])
    for r in report["cells"]:
        loss = r.get("symbolic_loss_pct")
        w.writerow([r["model"], r["variant"], r["strategy"], r["runs"], f"{r['mean_accuracy']:.3f}",
                    "" if loss is None else f"{loss:+.2f}", r["unparseable"]])
    return buf.getvalue()


def cost_csv(report: dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "variant", "strategy", "attempts", "cost_usd", "cost_per_100_usd"])
    for r in report["cells"]:
        w.writerow([r["model"], r["variant"], r["strategy"], r["attempts"], r["cost_usd"], r["cost_per_100_usd"]])
    return buf.getvalue()


def render_text(report: dict[str, Any]) -> str:
    lines = ["Accuracy (mean over runs; relative symbolic loss in parentheses)", ""]
    for r in report["cells"]:
        loss = r.get("symbolic_loss_pct")
        suffix = "" if loss is None else f" ({loss:+.2f}%)"
        lines.append(f"  {r['model']:<24} {r['variant']:<14} {r['strategy']:<9} {r['mean_accuracy']:.3f}{suffix}")
    lines += ["", "Cost per 100 questions (USD)", ""]
    for r in report["cells"]:
        lines.append(f"  {r['model']:<24} {r['variant']:<14} {r['strategy']:<9} {r['cost_per_100_usd']}")

    def section(title: str, s: dict[str, Any]) -> None:
        lines.extend(["", title])
        if "skipped" in s:
            lines.append(f"  skipped: {s['skipped']}")
            return
        fr = s["friedman"]
        lines.append(f"  Friedman chi2 = {fr['statistic']:.3f} (plain {fr['statistic_plain']:.3f}), "
                     f"df = {fr['df']}, p = {fr['p_value']:.3g}")
        lines.append(f"  CD(alpha={s['alpha']}) = {s['critical_difference']:.3f} over {s['n_blocks']} blocks")
        for item in s["mean_ranks"]:
            lines.append(f"    {item['mean_rank']:6.3f}  {item['treatment']}")
        for group in s["cliques"]:
            lines.append(f"  not significantly different: {', '.join(group)}")

    section("Strategy ranks", report["ranks"]["strategies"])
    for v, s in report["ranks"]["models_by_variant"].items():
        section(f"Model ranks on {v}", s)
    return "\n".join(lines) + "\n"


def write_report(report: dict[str, Any], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": dumps_report(report),
        "report.txt": render_text(report),
        "accuracy.csv": accuracy_csv(report),
        "cost.csv": cost_csv(report),
    }
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
