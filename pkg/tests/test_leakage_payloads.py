from __future__ import annotations

import unittest
from types import SimpleNamespace
from unittest import mock

from leakage_payloads import (
    PAYLOAD_SCHEMA,
    LeakagePayloadError,
    append_history_entry,
    ensure_metadata,
    extract_chart_options,
    load_leakage_payload,
    payload_fingerprint,
    persist_leakage_payload,
    pretty_json,
)


def _payload(fingerprint: str = "abc", value: float | None = 0.5) -> dict:
    return {
        "chart": "leakage",
        "data": {"series": [{"data": [value]}]},
        "report": {"meta": {"dataset_fingerprint": fingerprint}},
    }


def _client(stored=None, saved=True, chat_entry_id="entry-1") -> mock.MagicMock:
    client = mock.MagicMock()
    client._client_config = SimpleNamespace(chat_entry_id=chat_entry_id)
    client.chat.get_skill_memory_payload.return_value = stored
    client.chat.set_skill_memory_payload.return_value = saved
    return client


class SkillMemoryTest(unittest.TestCase):
    def test_load_returns_a_copy(self) -> None:
        stored = _payload()
        payload = load_leakage_payload("saved-1", client=_client(stored))
        payload["data"]["series"][0]["data"].append(2)
        self.assertEqual(stored["data"]["series"][0]["data"], [0.5])

    def test_load_rejects_missing_payloads(self) -> None:
        with self.assertRaises(LeakagePayloadError):
            load_leakage_payload("saved-1", client=_client(None))
        with self.assertRaises(LeakagePayloadError):
            load_leakage_payload("saved-1", client=_client(["not", "a", "mapping"]))
        with self.assertRaises(LeakagePayloadError):
            load_leakage_payload("", client=_client(_payload()))

    def test_load_rejects_other_chart_kinds(self) -> None:
        with self.assertRaises(LeakagePayloadError):
            load_leakage_payload("saved-1", client=_client({"chart": "area", "data": {}}))

    def test_load_checks_dataset_fingerprint(self) -> None:
        client = _client(_payload("abc"))
        self.assertEqual(payload_fingerprint(load_leakage_payload("saved-1", expected_fingerprint="abc", client=client)), "abc")
        with self.assertRaises(LeakagePayloadError):
            load_leakage_payload("saved-1", expected_fingerprint="xyz", client=client)

    def test_persist_prefers_explicit_ids(self) -> None:
        client = _client()
        payload = _payload()
        self.assertEqual(persist_leakage_payload(payload, saved_payload_id="saved-9", client=client), "saved-9")
        client.chat.set_skill_memory_payload.assert_called_once_with(payload, chat_entry_id="saved-9")
        self.assertEqual(persist_leakage_payload(payload, client=client), "entry-1")

    def test_persist_falls_back_to_environment(self) -> None:
        client = _client(chat_entry_id=None)
        with mock.patch.dict("os.environ", {"AR_CHAT_ENTRY_ID": "env-entry"}):
            self.assertEqual(persist_leakage_payload(_payload(), client=client), "env-entry")

    def test_persist_failures(self) -> None:
        with self.assertRaises(LeakagePayloadError):
            persist_leakage_payload(_payload(), client=_client(saved=False))
        with mock.patch.dict("os.environ", {}, clear=True):
            with self.assertRaises(LeakagePayloadError):
                persist_leakage_payload(_payload(), client=_client(chat_entry_id=None))

    def test_persist_rejects_non_finite_values(self) -> None:
        client = _client()
        with self.assertRaises(LeakagePayloadError):
            persist_leakage_payload(_payload(value=float("inf")), client=client)
        client.chat.set_skill_memory_payload.assert_not_called()
        self.assertEqual(persist_leakage_payload(_payload(value=None), client=client), "entry-1")


class PayloadStructureTest(unittest.TestCase):
    def test_history_is_appended(self) -> None:
        payload = {"meta": "legacy", "report": {"meta": {"dataset_fingerprint": "abc"}}}
        ensure_metadata(payload)
        append_history_entry(payload, actor="Privacy Audit", action="audit", details={"mode": "main"})
        self.assertEqual(payload["meta"]["note"], "legacy")
        self.assertEqual(payload["meta"]["schema"], PAYLOAD_SCHEMA)
        entry = payload["meta"]["history"][0]
        self.assertEqual(entry["actor"], "Privacy Audit")
        self.assertEqual(entry["details"], {"mode": "main"})
        self.assertEqual(entry["dataset_fingerprint"], "abc")
        self.assertTrue(entry["timestamp"].endswith("Z"))

    def test_extract_requires_data(self) -> None:
        with self.assertRaises(LeakagePayloadError):
            extract_chart_options({"chart": "leakage"})

    def test_pretty_json_never_writes_infinity(self) -> None:
        self.assertEqual(pretty_json({"a": 1}), '{\n  "a": 1\n}')
        self.assertEqual(pretty_json({"a": float("inf")}), "{'a': inf}")


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
