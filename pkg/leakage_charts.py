"""Highcharts options and report digests built from leakage reports.

Pure data builders with no AnswerRocket dependency; the CLI and the skills share them.
"""

from __future__ import annotations

from typing import Any, Dict, List, Mapping, Sequence

from pdp_bound import PdpReport, PointLeakage, extreme_points, finite_or_none


def row_label(row: Sequence[int]) -> str:
    return "[" + ", ".join(str(int(value)) for value in row) + "]"


def _number(value: Any) -> float | None:
    """Highcharts draws null as a gap."""
    return None if value is None else finite_or_none(float(value))


def _legend() -> Dict[str, Any]:
    return {"align": "center", "verticalAlign": "bottom", "layout": "horizontal"}


def build_leakage_chart(report: PdpReport, top: int = 5) -> Dict[str, Any]:
    """Line chart of the per-timestep main term for the ``top`` most exposed rows."""
    exposed, _ = extreme_points(report, top)
    steps = list(range(report.release_step + 1, report.steps + 1))
    series = [
        {
            "name": row_label(point.row),
            "data": [finite_or_none(step.main_term + step.error_term) for step in point.trace.steps],
        }
        for point in exposed
    ]
    return {
        "chart": {"type": "line"},
        "title": {"text": "Per-step leakage of the most exposed rows"},
        "subtitle": {"text": f"epsilon={report.epsilon:g}, m={report.m}, mode={report.mode.value}"},
        "xAxis": {"categories": [str(t) for t in steps], "title": {"text": "Timestep t"}},
        "yAxis": {"title": {"text": "Main term"}},
        "series": series,
        "legend": _legend(),
        "credits": {"enabled": False},
    }


def build_ranking_chart(report: PdpReport, top: int = 5) -> Dict[str, Any]:
    """Column chart of δ for the most and least exposed rows."""
    exposed, private = extreme_points(report, top)
    chosen: List[PointLeakage] = list(exposed) + [point for point in private if point not in exposed]
    return {
        "chart": {"type": "column"},
        "title": {"text": "Most exposed and most private rows"},
        "xAxis": {"categories": [row_label(point.row) for point in chosen], "title": {"text": "Row"}},
        "yAxis": {"title": {"text": "delta"}},
        "series": [{"name": "delta", "data": [finite_or_none(point.delta) for point in chosen]}],
        "plotOptions": {"column": {"dataLabels": {"enabled": False}}},
        "legend": _legend(),
        "credits": {"enabled": False},
    }


def build_curation_chart(rounds: Sequence[Mapping[str, Any]]) -> Dict[str, Any]:
    """Line chart of mean and max δ against the cumulative removal ratio."""
    ratios = [f"{float(entry['ratio']):g}" for entry in rounds]
    return {
        "chart": {"type": "line"},
        "title": {"text": "Leakage after removing the most exposed rows"},
        "xAxis": {"categories": ratios, "title": {"text": "Removed share"}},
        "yAxis": {"title": {"text": "delta"}},
        "series": [
            {"name": "mean delta", "data": [_number(entry["mean_delta"]) for entry in rounds]},
            {"name": "max delta", "data": [_number(entry["max_delta"]) for entry in rounds], "dashStyle": "Dash"},
        ],
        "legend": _legend(),
        "credits": {"enabled": False},
    }


def report_digest(report: PdpReport, top: int = 5) -> Dict[str, Any]:
    """The report fields kept next to a chart in skill memory."""
    exposed, private = extreme_points(report, top)
    meta = report.to_json_dict()["meta"]
    return {
        "meta": {key: meta[key] for key in ("epsilon", "m", "release_step", "mode", "dataset_fingerprint", "dataset_size")},
        "mean_delta": finite_or_none(report.mean_delta()),
        "max_delta": finite_or_none(report.max_delta()),
        "most_exposed": [{"row": list(point.row), "delta": finite_or_none(point.delta)} for point in exposed],
        "most_private": [{"row": list(point.row), "delta": finite_or_none(point.delta)} for point in private],
    }


__all__ = [
    "build_curation_chart",
    "build_leakage_chart",
    "build_ranking_chart",
    "report_digest",
    "row_label",
]
