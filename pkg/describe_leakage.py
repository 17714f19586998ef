from __future__ import annotations

import json
from typing import Any, Dict, List, Mapping

from skill_framework.skills import SkillInput, SkillOutput, SkillParameter, skill

from leakage_payloads import LeakagePayloadError, load_leakage_payload, summarize_leakage_payload


def describe_summary(summary: Mapping[str, Any]) -> str:
    lines: List[str] = [
        f"Chart: {summary['chart']} ({summary['chart_type']})",
        f"Series count: {summary['series_count']}",
    ]
    report = summary.get("report") or {}
    if report:
        lines.append(
            "Audit: epsilon={epsilon}, m={m}, release step={release_step}, mode={mode}, rows={dataset_size}".format(
                **{key: report.get(key, "?") for key in ("epsilon", "m", "release_step", "mode", "dataset_size")}
            )
        )
    for serie in summary.get("series", []):
        peak = "n/a" if serie["peak"] is None else f"{serie['peak']:.4g}"
        lines.append(f"Series {serie['index']} ({serie['name']}): {serie['points']} points, peak {peak}")
    for entry in summary.get("most_exposed", []):
        lines.append(f"Exposed row {entry['row']}: delta={entry['delta']}")
    return "\n".join(lines)


@skill(
    name="Describe Leakage",
    description="Summarize a saved privacy leakage chart and the audit it came from.",
    parameters=[
        SkillParameter(
            name="saved_payload_id",
            description="Identifier returned when the leakage payload was stored in skill memory.",
            required=True,
        )
    ],
)
def describe_leakage(parameters: SkillInput) -> SkillOutput:
    saved_payload_id = getattr(parameters.arguments, "saved_payload_id", None)
    if not saved_payload_id:
        return SkillOutput(final_prompt="A saved payload ID is required to describe a leakage chart.")

    try:
        payload = load_leakage_payload(saved_payload_id)
        summary = summarize_leakage_payload(payload)
    except LeakagePayloadError as exc:
        return SkillOutput(final_prompt=str(exc))

    final_payload: Dict[str, Any] = {"summary": summary, "history": payload.get("meta", {}).get("history", [])}
    return SkillOutput(
        final_prompt=json.dumps(final_payload, indent=2),
        narrative=describe_summary(summary),
    )
