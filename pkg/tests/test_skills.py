from __future__ import annotations

import json
import tempfile
import unittest
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

from describe_leakage import describe_leakage, describe_summary
from display_leakage_chart import chart_layout, display_leakage_chart, select_views
from leakage_payloads import LeakagePayloadError, summarize_leakage_payload
from privacy_audit import narrate, run_privacy_audit

CSV_TEXT = "colour,size,shape\n" + "red,S,round\n" * 12 + "red,S,square\n" * 4 + "red,M,square\n" * 2 + "blue,M,square\n" * 2


class DummyInput:
    def __init__(self, **kwargs):
        self.arguments = SimpleNamespace(**kwargs)


class PrivacyAuditTest(unittest.TestCase):
    def setUp(self) -> None:
        self._directory = tempfile.TemporaryDirectory()
        self.csv_path = str(Path(self._directory.name) / "people.csv")
        Path(self.csv_path).write_text(CSV_TEXT, encoding="utf-8")

    def tearDown(self) -> None:
        self._directory.cleanup()

    def test_run_builds_chart_payload(self) -> None:
        report, payload = run_privacy_audit(self.csv_path, epsilon=2.0, schedule="sigmoid", steps=10, top=2)
        self.assertEqual(payload["type"], "highcharts")
        self.assertEqual(payload["chart"], "leakage")
        self.assertEqual(len(payload["data"]["series"]), 2)
        self.assertEqual(payload["ranking"]["chart"]["type"], "column")
        self.assertEqual(payload["report"]["meta"]["dataset_size"], 20)
        history = payload["meta"]["history"]
        self.assertEqual(history[-1]["actor"], "Privacy Audit")
        self.assertEqual(history[-1]["details"]["source"], "people.csv")
        self.assertEqual(len(report.points), 4)
        json.dumps(payload)

    def test_narration_names_extreme_rows(self) -> None:
        report, _ = run_privacy_audit(self.csv_path, steps=10)
        text = narrate(report, top=1)
        self.assertIn("Audited 20 rows (4 distinct)", text)
        self.assertIn("Most exposed rows:", text)
        self.assertIn("Most private rows:", text)


class DisplayLeakageChartTest(unittest.TestCase):
    def _payload(self) -> dict:
        return {
            "data": {"chart": {"type": "line"}, "title": {"text": "Per-step"}},
            "ranking": {"chart": {"type": "column"}},
            "report": {"mean_delta": 0.1},
        }

    def test_layout_wraps_options(self) -> None:
        layout = json.loads(chart_layout({"chart": {"type": "line"}}))
        self.assertEqual(layout["type"], "Document")
        self.assertEqual(layout["children"][0]["name"], "HighchartsChart0")
        self.assertEqual(layout["children"][0]["options"]["chart"]["type"], "line")

    def test_layout_stacks_several_charts(self) -> None:
        layout = json.loads(chart_layout([{"chart": {"type": "line"}}, {"chart": {"type": "column"}}]))
        self.assertEqual([child["name"] for child in layout["children"]], ["HighchartsChart0", "HighchartsChart1"])

    def test_views(self) -> None:
        payload = self._payload()
        self.assertEqual(select_views(payload, "leakage"), [payload["data"]])
        self.assertEqual(select_views(payload, "ranking"), [payload["ranking"]])
        self.assertEqual(len(select_views(payload, "both")), 2)
        with self.assertRaises(LeakagePayloadError):
            select_views(payload, "pie")
        with self.assertRaises(LeakagePayloadError):
            select_views({"data": {}}, "ranking")

    def test_missing_id_is_reported(self) -> None:
        output = display_leakage_chart(DummyInput(saved_payload_id=None))
        self.assertIn("saved payload ID is required", output.final_prompt)

    def test_load_errors_become_prompts(self) -> None:
        with mock.patch("display_leakage_chart.load_leakage_payload", side_effect=LeakagePayloadError("gone")):
            output = display_leakage_chart(DummyInput(saved_payload_id="saved-1"))
        self.assertEqual(output.final_prompt, "gone")

    def test_skill_renders_requested_view(self) -> None:
        with mock.patch("display_leakage_chart.load_leakage_payload", return_value=self._payload()):
            output = display_leakage_chart(DummyInput(saved_payload_id="saved-1", view="both"))
        self.assertEqual(json.loads(output.final_prompt), {"mean_delta": 0.1})
        self.assertEqual(len(output.visualizations), 1)


class DescribeLeakageTest(unittest.TestCase):
    def _payload(self) -> dict:
        return {
            "chart": "leakage",
            "data": {"chart": {"type": "line"}, "series": [{"name": "[1, 1]", "data": [0.5, None, 0.25]}]},
            "report": {
                "meta": {"epsilon": 1.0, "m": 1, "release_step": 0, "mode": "main", "dataset_size": 20},
                "most_exposed": [{"row": [1, 1], "delta": 0.5}],
            },
            "meta": {"history": [{"actor": "Privacy Audit", "action": "audit"}]},
        }

    def test_summary_text(self) -> None:
        text = describe_summary(summarize_leakage_payload(self._payload()))
        self.assertIn("Chart: leakage (line)", text)
        self.assertIn("Series 0 ([1, 1]): 3 points, peak 0.5", text)
        self.assertIn("mode=main", text)
        self.assertIn("Exposed row [1, 1]: delta=0.5", text)

    def test_skill_returns_summary_and_history(self) -> None:
        with mock.patch("describe_leakage.load_leakage_payload", return_value=self._payload()):
            output = describe_leakage(DummyInput(saved_payload_id="saved-1"))
        body = json.loads(output.final_prompt)
        self.assertEqual(body["summary"]["series_count"], 1)
        self.assertEqual(body["history"][0]["action"], "audit")


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
