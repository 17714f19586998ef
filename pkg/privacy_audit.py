from __future__ import annotations

import os
from typing import Any, Dict, Tuple

from skill_framework.skills import SkillInput, SkillOutput, SkillParameter, skill

from categorical_dataset import BinningConfig, ingest_csv
from diffusion_schedule import build
from leakage_charts import build_leakage_chart, build_ranking_chart, report_digest, row_label
from leakage_payloads import PAYLOAD_TYPE, AnswerRocketClient, append_history_entry, ensure_metadata, persist_leakage_payload
from pdp_bound import AuditMode, BoundOptions, PdpReport, audit_all, extreme_points
from privacy_errors import PdpInputError

DEFAULT_STEPS = 10
DEFAULT_TOP = 5


def _argument(parameters: SkillInput, name: str, default: Any) -> Any:
    value = getattr(parameters.arguments, name, None)
    return default if value in (None, "") else value


def run_privacy_audit(
    csv_path: str,
    *,
    epsilon: float = 1.0,
    m: int = 1,
    schedule: str = "linear",
    steps: int = DEFAULT_STEPS,
    decay: float = 1.0,
    release_step: int = 0,
    mode: str = "main",
    top: int = DEFAULT_TOP,
) -> Tuple[PdpReport, Dict[str, Any]]:
    """Audit a CSV and build the payload the Display Leakage Chart skill renders."""
    dataset = ingest_csv(csv_path, BinningConfig())
    diffusion = build(schedule, int(steps), dataset.num_categories, decay=float(decay))
    report = audit_all(
        dataset,
        float(epsilon),
        int(m),
        int(release_step),
        diffusion,
        BoundOptions(mode=AuditMode(mode)),
    )
    payload: Dict[str, Any] = {
        "type": PAYLOAD_TYPE,
        "chart": "leakage",
        "data": build_leakage_chart(report, int(top)),
        "ranking": build_ranking_chart(report, int(top)),
        "report": report_digest(report, int(top)),
    }
    ensure_metadata(payload)
    append_history_entry(
        payload,
        actor="Privacy Audit",
        action="audit",
        details={"source": os.path.basename(csv_path), "schedule": diffusion.name, "mode": mode},
    )
    return report, payload


def narrate(report: PdpReport, top: int = DEFAULT_TOP) -> str:
    exposed, private = extreme_points(report, top)
    lines = [
        f"Audited {report.dataset_size} rows ({len(report.points)} distinct) at epsilon={report.epsilon:g}, m={report.m}.",
        f"Mean delta: {report.mean_delta():.4g}; max delta: {report.max_delta():.4g}.",
        "Most exposed rows:",
    ]
    lines.extend(f"  {row_label(point.row)}: delta={point.delta:.4g}" for point in exposed)
    lines.append("Most private rows:")
    lines.extend(f"  {row_label(point.row)}: delta={point.delta:.4g}" for point in private)
    return "\n".join(lines)


@skill(
    name="Privacy Audit",
    description="Bound the per-row privacy leakage of a categorical CSV under a discrete diffusion generator.",
    parameters=[
        SkillParameter(name="csv_path", description="Path to the CSV file to audit.", required=True),
        SkillParameter(name="epsilon", description="Privacy budget epsilon (default 1).", required=False),
        SkillParameter(name="m", description="Number of released samples (default 1).", required=False),
        SkillParameter(name="schedule", description="linear, sigmoid or cosine (default linear).", required=False),
        SkillParameter(name="steps", description="Number of diffusion steps T (default 10).", required=False),
        SkillParameter(name="release_step", description="Step at which samples are released (default 0).", required=False),
        SkillParameter(name="mode", description="main or relaxed radius conditions (default main).", required=False),
    ],
)
def privacy_audit(parameters: SkillInput) -> SkillOutput:
    csv_path = _argument(parameters, "csv_path", None)
    if not csv_path:
        return SkillOutput(final_prompt="A CSV path is required to run a privacy audit.")

    client = AnswerRocketClient()
    chat_entry_id = client._client_config.chat_entry_id or os.getenv("AR_CHAT_ENTRY_ID")
    if not chat_entry_id:
        return SkillOutput(final_prompt="The audit could not be saved because no chat entry ID was available.")

    try:
        report, payload = run_privacy_audit(
            csv_path,
            epsilon=float(_argument(parameters, "epsilon", 1.0)),
            m=int(_argument(parameters, "m", 1)),
            schedule=str(_argument(parameters, "schedule", "linear")),
            steps=int(_argument(parameters, "steps", DEFAULT_STEPS)),
            release_step=int(_argument(parameters, "release_step", 0)),
            mode=str(_argument(parameters, "mode", "main")),
        )
    except (PdpInputError, ValueError) as exc:
        return SkillOutput(final_prompt=f"The privacy audit could not run ({exc}).")

    try:
        saved_id = persist_leakage_payload(payload, chat_entry_id=chat_entry_id, client=client)
    except Exception as exc:
        return SkillOutput(final_prompt=f"Audit could not be saved to skill memory ({exc}).")

    return SkillOutput(
        final_prompt=f"Privacy audit saved to address {saved_id}",
        narrative=narrate(report),
    )
