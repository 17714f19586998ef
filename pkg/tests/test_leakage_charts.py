from __future__ import annotations

import json
import unittest

from categorical_dataset import CategoricalDataset
from diffusion_schedule import sigmoid
from leakage_charts import build_curation_chart, build_leakage_chart, build_ranking_chart, report_digest, row_label
from leakage_payloads import summarize_leakage_payload
from pdp_bound import audit_all, finite_or_none


def _report():
    rows = [[0, 0, 0]] * 12 + [[0, 0, 1]] * 4 + [[0, 1, 1]] * 2 + [[1, 1, 1]] * 2
    return audit_all(CategoricalDataset.from_rows(rows, num_categories=2), 1.0, 1, 2, sigmoid(10, 2))


class HelpersTest(unittest.TestCase):
    def test_labels_and_numbers(self) -> None:
        self.assertEqual(row_label((1, 0, 2)), "[1, 0, 2]")
        self.assertIsNone(finite_or_none(float("inf")))
        self.assertEqual(finite_or_none(0.5), 0.5)


class ChartBuilderTest(unittest.TestCase):
    def test_leakage_chart_follows_summation_range(self) -> None:
        report = _report()
        chart = build_leakage_chart(report, top=2)
        self.assertEqual(chart["xAxis"]["categories"], [str(t) for t in range(3, 11)])
        self.assertEqual(len(chart["series"]), 2)
        self.assertEqual(chart["series"][0]["name"], row_label(report.points[0].row))
        self.assertEqual(len(chart["series"][0]["data"]), 8)
        json.dumps(chart, allow_nan=False)

    def test_ranking_chart_lists_each_row_once(self) -> None:
        report = _report()
        chart = build_ranking_chart(report, top=3)
        self.assertEqual(len(chart["xAxis"]["categories"]), 4)
        self.assertEqual(len(set(chart["xAxis"]["categories"])), 4)

    def test_curation_chart_accepts_nulls_and_infinities(self) -> None:
        rounds = [
            {"ratio": 0.0, "mean_delta": 0.2, "max_delta": 0.5},
            {"ratio": 0.1, "mean_delta": None, "max_delta": float("inf")},
        ]
        chart = build_curation_chart(rounds)
        self.assertEqual(chart["xAxis"]["categories"], ["0", "0.1"])
        self.assertEqual(chart["series"][0]["data"], [0.2, None])
        self.assertEqual(chart["series"][1]["data"], [0.5, None])

    def test_summary_carries_digest(self) -> None:
        report = _report()
        payload = {"chart": "leakage", "data": build_leakage_chart(report, 2), "report": report_digest(report, 2)}
        summary = summarize_leakage_payload(payload)
        self.assertEqual(summary["chart_type"], "line")
        self.assertEqual(summary["series_count"], 2)
        self.assertEqual(summary["report"]["release_step"], 2)
        self.assertEqual(len(summary["most_exposed"]), 2)
        self.assertEqual(summary["series"][0]["points"], 8)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
