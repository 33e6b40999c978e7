"""Human-readable tables and machine JSON for evaluation results.

Two layouts: a system-comparison table (systems as rows, datasets as
column groups with R@k / EM / MRR) and a hallucination grid (metric rows,
one column per k).  Percentages print with two decimals; values too small
for that fall back to scientific notation, the way tiny wrong-format
rates are usually reported.
"""

from __future__ import annotations

from typing import Any, Mapping, Sequence

RANKING_COLUMNS = ("recall_at_k", "exact_match", "mrr")
RANKING_HEADERS = {"recall_at_k": "R@k", "exact_match": "EM", "mrr": "MRR"}
HAL_ROWS = (
    ("all_names_gt", "all-names-GT"),
    ("one_name_gt", "one-name-GT"),
    ("year_gt", "year-GT"),
    ("mahr_partial", "MaHR-partial"),
    ("wrong_format", "wrong-format"),
    ("other_hal", "other-hal"),
    ("mahr", "MaHR"),
    ("topk_match_mahr", "top-k-match-MaHR"),
    ("exact_match_mahr", "exact-match-MaHR"),
)


def format_percent(value: float | None) -> str:
    if value is None:
        return "-"
    if value != 0 and abs(value) < 0.005:
        return f"{value:.2e}"
    return f"{value:.2f}"


def format_ratio(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def _render_rows(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    for row in [list(header)] + [list(r) for r in rows]:
        cells = [row[0].ljust(widths[0])] + [
            c.rjust(widths[i]) for i, c in enumerate(row) if i > 0
        ]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "-" * max(len(line) for line in lines))
    return "\n".join(lines)


def render_comparison(reports: Sequence[Mapping[str, Any]]) -> str:
    """Systems-by-datasets ranking table; rows sorted by system name."""
    datasets = sorted({r["dataset"] for r in reports})
    systems = sorted({r["system"] for r in reports})
    by_cell = {(r["system"], r["dataset"]): r for r in reports}
    header = ["System"]
    for ds in datasets:
        header.extend(f"{ds} {RANKING_HEADERS[m]}" for m in RANKING_COLUMNS)
    rows = []
    for system in systems:
        row = [system]
        for ds in datasets:
            rep = by_cell.get((system, ds))
            for metric in RANKING_COLUMNS:
                row.append(format_ratio(rep.get(metric) if rep else None))
        rows.append(row)
    return _render_rows(header, rows)


def render_hallucination(grids: Sequence[Mapping[str, Any]]) -> str:
    """Per-dataset hallucination grid: metric rows, one column per k."""
    blocks = []
    for grid in sorted(grids, key=lambda g: (g["system"], g["dataset"])):
        ks = sorted(int(k) for k in grid["breakdowns"])
        header = ["Metric (%)"] + [f"Top-{k}" for k in ks]
        rows = []
        for key, label in HAL_ROWS:
            row = [label]
            for k in ks:
                percent = grid["breakdowns"][str(k)]["percent"]
                row.append(format_percent(percent.get(key)))
            rows.append(row)
        title = f"{grid['system']} on {grid['dataset']}"
        blocks.append(title + "\n" + _render_rows(header, rows))
    return "\n\n".join(blocks)


def build_report(inputs: Sequence[Mapping[str, Any]]) -> tuple[str, dict[str, Any]]:
    """Split mixed inputs into ranking/hallucination sections.

    Returns the rendered text and the machine JSON document.
    """
    ranking = [r for r in inputs if r.get("kind") == "ranking"]
    hal = [r for r in inputs if r.get("kind") == "hallucination"]
    sections = []
    if ranking:
        sections.append("Ranking metrics\n" + render_comparison(ranking))
    if hal:
        sections.append("Hallucination metrics\n" + render_hallucination(hal))
    text = "\n\n".join(sections) + "\n"
    machine = {
        "ranking": sorted(ranking, key=lambda r: (r["system"], r["dataset"])),
        "hallucination": sorted(hal, key=lambda r: (r["system"], r["dataset"])),
    }
    return text, machine
