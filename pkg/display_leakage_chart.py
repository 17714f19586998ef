from __future__ import annotations

import json
import logging
from typing import Any, List, Mapping, Sequence

from skill_framework import SkillVisualization
from skill_framework.skills import SkillInput, SkillOutput, SkillParameter, skill

from leakage_payloads import LeakagePayloadError, extract_chart_options, load_leakage_payload, pretty_json

logger = logging.getLogger(__name__)

VIEWS = ("leakage", "ranking", "both")


def chart_layout(charts: Mapping[str, Any] | Sequence[Mapping[str, Any]]) -> str:
    """Stack one HighchartsChart per options mapping in a Document layout."""
    if isinstance(charts, Mapping):
        charts = [charts]
    children = [
        {"name": f"HighchartsChart{index}", "type": "HighchartsChart", "minHeight": "400px", "options": dict(options)}
        for index, options in enumerate(charts)
    ]
    layout = {
        "type": "Document",
        "gap": "16px" if len(children) > 1 else "0px",
        "style": {"backgroundColor": "#ffffff", "width": "100%", "height": "max-content"},
        "children": children,
    }
    return json.dumps(layout, indent=2, sort_keys=True)


def select_views(payload: Mapping[str, Any], view: str) -> List[Mapping[str, Any]]:
    if view not in VIEWS:
        raise LeakagePayloadError(f"Unknown view '{view}'; choose one of {', '.join(VIEWS)}.")
    ranking = payload.get("ranking")
    if view == "ranking":
        if not isinstance(ranking, Mapping):
            raise LeakagePayloadError("The saved payload carries no ranking chart.")
        return [ranking]
    charts: List[Mapping[str, Any]] = [extract_chart_options(payload)]
    if view == "both" and isinstance(ranking, Mapping):
        charts.append(ranking)
    return charts


def _title(options: Mapping[str, Any]) -> str:
    title = options.get("title")
    return str(title.get("text", "Privacy leakage")) if isinstance(title, Mapping) else "Privacy leakage"


@skill(
    name="Display Leakage Chart",
    description="Retrieve a saved privacy leakage chart from skill memory and present it to the user.",
    parameters=[
        SkillParameter(
            name="saved_payload_id",
            description="Identifier returned by the Privacy Audit skill when the chart was saved.",
            required=True,
        ),
        SkillParameter(
            name="view",
            description="leakage (per-step terms), ranking (delta per row) or both. Defaults to leakage.",
            required=False,
        ),
    ],
)
def display_leakage_chart(parameters: SkillInput) -> SkillOutput:
    saved_payload_id = getattr(parameters.arguments, "saved_payload_id", None)
    view = getattr(parameters.arguments, "view", None) or "leakage"
    if not saved_payload_id:
        return SkillOutput(final_prompt="A saved payload ID is required to display the chart.", visualizations=[])

    try:
        payload = load_leakage_payload(saved_payload_id)
        charts = select_views(payload, str(view))
    except LeakagePayloadError as exc:
        return SkillOutput(final_prompt=str(exc), visualizations=[])
    except Exception as exc:  # pragma: no cover - SDK error surface
        logger.warning("Payload retrieval failed for %s: %s", saved_payload_id, exc)
        return SkillOutput(final_prompt=f"Unable to retrieve leakage payload ({exc}).", visualizations=[])

    visualization = SkillVisualization(title=_title(charts[0]), layout=chart_layout(charts))
    return SkillOutput(final_prompt=pretty_json(payload.get("report", {})), visualizations=[visualization])
