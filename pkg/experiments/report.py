"""
Shared output utility.
Every command writes its CSVs and text reports through here.
"""

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def write_csv(frame: pd.DataFrame | list[dict], path: str | Path) -> Path:
    """Write a header-row, UTF-8, full-precision CSV. Raises on failure so the run exits non-zero."""
    path = Path(path)
    if not isinstance(frame, pd.DataFrame):
        frame = pd.DataFrame(frame)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    except OSError as exc:
        logger.error("Could not write %s: %s", path, exc)
        raise
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def write_text(text: str, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        logger.error("Could not write %s: %s", path, exc)
        raise
    logger.info("Wrote %s", path)
    return path


def build_kl_table(rows: list[dict]) -> str:
    """Mean KL per (p, method), one line each, in the order the runs produced them."""
    if not rows:
        return "\nNo KL results."

    out = [
        f"\n{'=' * 70}",
        "  TWISTED-NORMAL TOY: mean KL(truth || estimate) on (theta1, theta2)",
        f"{'=' * 70}",
        f"  {'p':<6s} {'Method':<18s} {'Mean KL':<12s} {'SE':<12s} {'KL (floor 1e-12)':<18s}",
        f"  {'─' * 66}",
    ]
    for r in rows:
        out.append(
            f"  {r['p']:<6d} {r['method']:<18s} {r['mean_kl']:<12.4f} {r['se']:<12.4f} {r['mean_kl_alt_floor']:<18.4f}"
        )
    out.append(f"  {'─' * 66}")
    out.append(f"  N = {rows[0]['N']}, replicates = {rows[0]['replicates']}, seed = {rows[0]['seed']}")
    return "\n".join(out)


def build_mle_table(rows: list[dict]) -> str:
    if not rows:
        return "\nNo approximate MLE available."

    out = [
        f"\n{'=' * 70}",
        "  G-AND-K: approximate marginal MLE (± 2 se)",
        f"{'=' * 70}",
        f"  {'Param':<8s} {'Truth':<10s} {'MLE':<12s} {'SE':<12s} {'Lower':<12s} {'Upper':<12s}",
        f"  {'─' * 66}",
    ]
    for r in rows:
        out.append(
            f"  {r['param']:<8s} {r['truth']:<10.4f} {r['estimate']:<12.5f} {r['se']:<12.5f} "
            f"{r['lower']:<12.5f} {r['upper']:<12.5f}"
        )
    return "\n".join(out)


def _ranking_lines(title: str, ranking: Sequence[dict], top: int) -> list[str]:
    lines = [f"  {title}", f"  {'Rank':<6s} {'Model':<24s} {'log P':<12s}"]
    for r in ranking[:top]:
        lines.append(f"  {r['rank']:<6d} {r['gamma']:<24s} {r['log_prob']:<12.4f}")
    return lines


def build_varsel_report(rankings: dict[str, list[dict]], overlap: list[dict], top: int) -> str:
    """Top-`top` models of every ranking plus the overlap counts, as plain text."""
    header = [
        "ROBUST VARIABLE SELECTION: model rankings",
        f"{'─' * 40}",
    ]
    body = []
    for name, ranking in rankings.items():
        body.extend(_ranking_lines(name, ranking, top))
        body.append("")

    footer = [f"{'─' * 40}", f"Top-{top} overlap:"]
    for r in overlap:
        footer.append(f"  {r['first']:<18s} vs {r['second']:<18s} {r['overlap']}")
    return "\n".join(header + body + footer) + "\n"
