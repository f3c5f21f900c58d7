"""Table rendering: CSV rows and aligned text with significance stars."""

from __future__ import annotations

from typing import Sequence

from .core import RegressionResult

# two-sided normal critical values at 10/5/1%
_STAR_CUTS = ((2.576, "***"), (1.960, "**"), (1.645, "*"))


def stars(t: float) -> str:
    if t != t:  # NaN
        return ""
    for cut, mark in _STAR_CUTS:
        if abs(t) >= cut:
            return mark
    return ""


def _fmt(x: float, digits: int = 10) -> str:
    if x != x:
        return ""
    return format(float(x), f".{digits}g")


def result_csv_rows(label: str, res: RegressionResult) -> list[dict]:
    rows = []
    for i, name in enumerate(res.names):
        rows.append(
            {
                "table": label,
                "regressor": name,
                "coef": _fmt(res.coef[i]),
                "se": _fmt(res.se[i]),
                "t": _fmt(res.t[i]),
                "stars": stars(float(res.t[i])),
                "n": res.n,
                "adj_r2": _fmt(res.adj_r2),
                "fe": res.absorbed,
                "dropped": ";".join(res.dropped),
            }
        )
    return rows


def results_text(title: str, results: Sequence[tuple[str, RegressionResult]]) -> str:
    """Aligned text block: one column block per (label, result) pair."""
    lines = [title, "=" * len(title)]
    for label, res in results:
        lines.append("")
        lines.append(f"[{label}]  FE: {res.absorbed}  N={res.n}  adjR2={res.adj_r2:.4f}")
        if res.dropped:
            lines.append(f"  dropped collinear: {', '.join(res.dropped)}")
        width = max((len(n) for n in res.names), default=8)
        lines.append(f"  {'regressor'.ljust(width)}  {'coef':>14}  {'se':>14}  {'t':>8}")
        for i, name in enumerate(res.names):
            t = float(res.t[i])
            lines.append(
                f"  {name.ljust(width)}  {res.coef[i]:>14.6f}  {res.se[i]:>14.6f}  "
                f"{t:>8.2f}{stars(t)}"
            )
    lines.append("")
    return "\n".join(lines)
