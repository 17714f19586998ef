"""AnswerRocket skill memory for leakage chart payloads."""

from __future__ import annotations

import copy
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, Mapping, MutableMapping, Sequence

try:  # pragma: no cover - dependency provided at runtime
    from answer_rocket.client import AnswerRocketClient
except ImportError:  # pragma: no cover - fallback for offline use
    class AnswerRocketClient:  # type: ignore[no-redef]
        def __init__(self, *_, **__):
            raise RuntimeError("AnswerRocket client is unavailable in this environment.")

logger = logging.getLogger(__name__)

PAYLOAD_TYPE = "highcharts"
PAYLOAD_SCHEMA = "pdp-leakage-payload/1"
CHART_KINDS = ("leakage", "curation")


class LeakagePayloadError(RuntimeError):
    """Raised when leakage payloads cannot be loaded or persisted."""


def _ensure_client(client: AnswerRocketClient | None = None) -> AnswerRocketClient:
    return client or AnswerRocketClient()


def _resolve_target_id(
    client: AnswerRocketClient,
    *,
    saved_payload_id: str | None = None,
    chat_entry_id: str | None = None,
) -> str:
    candidate = saved_payload_id or chat_entry_id or client._client_config.chat_entry_id or os.getenv("AR_CHAT_ENTRY_ID")
    if not candidate:
        raise LeakagePayloadError("No chat entry identifier was provided.")
    return candidate


def payload_fingerprint(payload: Mapping[str, Any]) -> str | None:
    """Fingerprint of the audited dataset recorded in the payload's report digest."""
    report = payload.get("report")
    meta = report.get("meta") if isinstance(report, Mapping) else None
    return meta.get("dataset_fingerprint") if isinstance(meta, Mapping) else None


def _check_kind(payload: Mapping[str, Any]) -> None:
    kind = payload.get("chart")
    if kind not in CHART_KINDS:
        raise LeakagePayloadError(f"Not a leakage chart payload (chart={kind!r}); expected one of {', '.join(CHART_KINDS)}.")


def load_leakage_payload(
    saved_payload_id: str,
    *,
    expected_fingerprint: str | None = None,
    client: AnswerRocketClient | None = None,
) -> Dict[str, Any]:
    """Fetch a saved payload; ``expected_fingerprint`` rejects payloads audited on another dataset."""
    if not saved_payload_id:
        raise LeakagePayloadError("A saved payload ID is required.")

    client = _ensure_client(client)
    payload = client.chat.get_skill_memory_payload(saved_payload_id)
    if not payload:
        raise LeakagePayloadError(f"No leakage payload found for ID {saved_payload_id}.")
    if not isinstance(payload, Mapping):
        raise LeakagePayloadError("Leakage payloads must be JSON-like mappings.")
    _check_kind(payload)
    if expected_fingerprint is not None and payload_fingerprint(payload) != expected_fingerprint:
        raise LeakagePayloadError(f"Payload {saved_payload_id} was audited on a different dataset.")

    return copy.deepcopy(dict(payload))


def persist_leakage_payload(
    payload: Mapping[str, Any],
    *,
    saved_payload_id: str | None = None,
    chat_entry_id: str | None = None,
    client: AnswerRocketClient | None = None,
) -> str:
    """Save a payload after checking it is a leakage chart of finite JSON values."""
    _check_kind(payload)
    extract_chart_options(payload)
    try:
        json.dumps(payload, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise LeakagePayloadError(f"Leakage payloads must be plain JSON with null for unbounded values ({exc}).") from exc

    client = _ensure_client(client)
    target_id = _resolve_target_id(client, saved_payload_id=saved_payload_id, chat_entry_id=chat_entry_id)
    if not client.chat.set_skill_memory_payload(payload, chat_entry_id=target_id):
        raise LeakagePayloadError("Leakage payload could not be saved to skill memory.")
    logger.info("Saved %s payload for dataset %s to %s", payload.get("chart"), payload_fingerprint(payload), target_id)
    return target_id


def extract_chart_options(payload: Mapping[str, Any]) -> MutableMapping[str, Any]:
    if "data" in payload and isinstance(payload["data"], MutableMapping):
        return payload["data"]  # type: ignore[return-value]
    raise LeakagePayloadError("Leakage payloads must carry Highcharts options under 'data'.")


def ensure_metadata(payload: MutableMapping[str, Any]) -> MutableMapping[str, Any]:
    meta = payload.setdefault("meta", {})
    if not isinstance(meta, MutableMapping):
        meta = {"note": str(meta)}
        payload["meta"] = meta
    meta.setdefault("schema", PAYLOAD_SCHEMA)
    if not isinstance(meta.get("history"), list):
        meta["history"] = []
    return meta


def append_history_entry(
    payload: MutableMapping[str, Any],
    *,
    actor: str,
    action: str,
    details: Mapping[str, Any] | None = None,
) -> None:
    """Record who touched the payload; entries carry the audited dataset's fingerprint when known."""
    history = ensure_metadata(payload)["history"]
    entry: Dict[str, Any] = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z"),
        "actor": actor,
        "action": action,
    }
    fingerprint = payload_fingerprint(payload)
    if fingerprint:
        entry["dataset_fingerprint"] = fingerprint
    if details:
        entry["details"] = dict(details)
    history.append(entry)


def pretty_json(payload: Any) -> str:
    try:
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    except (TypeError, ValueError):
        return str(payload)


def summarize_leakage_payload(payload: Mapping[str, Any]) -> Dict[str, Any]:
    options = extract_chart_options(payload)
    chart = options.get("chart")
    chart_type = chart.get("type") if isinstance(chart, Mapping) else None
    series = options.get("series", []) if isinstance(options.get("series"), Sequence) else []
    digest = payload.get("report", {}) if isinstance(payload.get("report"), Mapping) else {}
    summary: Dict[str, Any] = {
        "chart_type": chart_type or "unknown",
        "chart": payload.get("chart", "unknown"),
        "series_count": len(series),
        "series": [],
        "report": dict(digest.get("meta", {})),
    }
    for idx, serie in enumerate(series):
        if not isinstance(serie, Mapping):
            continue
        values = [value for value in serie.get("data", []) if isinstance(value, (int, float))]
        summary["series"].append(
            {
                "index": idx,
                "name": serie.get("name", f"Series {idx + 1}"),
                "points": len(serie.get("data", [])),
                "peak": max(values) if values else None,
            }
        )
    for key in ("mean_delta", "max_delta", "most_exposed", "most_private"):
        if key in digest:
            summary[key] = digest[key]
    return summary


__all__ = [
    "CHART_KINDS",
    "LeakagePayloadError",
    "PAYLOAD_SCHEMA",
    "PAYLOAD_TYPE",
    "append_history_entry",
    "ensure_metadata",
    "extract_chart_options",
    "load_leakage_payload",
    "payload_fingerprint",
    "persist_leakage_payload",
    "pretty_json",
    "summarize_leakage_payload",
]
