import json
import math
import random

import pytest

from knowpipe.errors import EvalError
from knowpipe.metrics import (
    EvalReport,
    accuracy,
    eps,
    evaluate_run,
    harmonic_mean,
    render_table,
    report,
)
from knowpipe.reasoning import ReasoningOutcome
from tests_common import outcome, outcomes_from_bools


class TestAccuracy:
    def test_fraction(self):
        runs = outcomes_from_bools([True, True, True, False])
        assert accuracy(runs) == 0.75

    def test_all_correct(self):
        assert accuracy(outcomes_from_bools([True] * 5)) == 1.0

    def test_duplicate_qid(self):
        runs = [outcome("a", True), outcome("a", False)]
        with pytest.raises(EvalError, match="duplicate"):
            accuracy(runs)

    def test_empty(self):
        with pytest.raises(EvalError):
            accuracy([])


class TestEps:
    def test_hand_worked_case(self):
        baseline = outcomes_from_bools([True, True, False, False, False])
        method = outcomes_from_bools([True, False, True, True, False])
        es, ps, value, note = eps(baseline, method)
        assert abs(es - 2 / 3) < 1e-12
        assert abs(ps - 1 / 2) < 1e-12
        assert abs(value - 4 / 7) < 1e-12
        assert note is None

    def test_method_identical_to_baseline(self):
        baseline = outcomes_from_bools([True, True, False, False, False])
        es, ps, value, _ = eps(baseline, baseline)
        assert (es, ps, value) == (0.0, 1.0, 0.0)

    def test_harmonic_mean_idempotent(self):
        for x in (0.1, 0.33, 0.5, 0.99, 1.0):
            assert math.isclose(harmonic_mean(x, x), x)

    def test_zero_both_defined_as_zero(self):
        assert harmonic_mean(0.0, 0.0) == 0.0

    def test_qid_mismatch(self):
        baseline = outcomes_from_bools([True, False])
        method = [outcome("other-0", True), outcome("other-1", True)]
        with pytest.raises(EvalError, match="different questions"):
            eps(baseline, method)

    def test_degenerate_all_correct_baseline(self):
        baseline = outcomes_from_bools([True, True, True])
        method = outcomes_from_bools([True, False, True])
        es, ps, value, note = eps(baseline, method)
        assert es is None and value is None
        assert ps is not None
        assert "es undefined" in note

    def test_degenerate_all_wrong_baseline(self):
        baseline = outcomes_from_bools([False, False])
        method = outcomes_from_bools([True, False])
        es, ps, value, note = eps(baseline, method)
        assert ps is None and value is None
        assert es == 0.5
        assert "ps undefined" in note

    def test_range_and_bounds_property(self):
        rng = random.Random(11)
        for _ in range(200):
            n = rng.randrange(2, 12)
            baseline = [rng.random() < 0.5 for _ in range(n)]
            method = [rng.random() < 0.5 for _ in range(n)]
            if all(baseline) or not any(baseline):
                continue
            es, ps, value, _ = eps(outcomes_from_bools(baseline), outcomes_from_bools(method))
            assert 0.0 <= es <= 1.0 and 0.0 <= ps <= 1.0 and 0.0 <= value <= 1.0
            assert value <= 2 * min(es, ps) + 1e-12
            assert value <= max(es, ps) + 1e-12
            assert (value == 0.0) == (es * ps == 0.0)

    def test_partition_symmetry(self):
        # Swapping which questions land in Q_true/Q_false (sizes and
        # intersection counts preserved) leaves (es, ps) unchanged.
        base_a = [True, True, False, False]
        meth_a = [True, False, True, False]
        base_b = [False, False, True, True]   # swapped halves
        meth_b = [True, False, True, False]   # fix 1 of 2, break 1 of 2 again
        a = eps(outcomes_from_bools(base_a), outcomes_from_bools(meth_a))
        b = eps(outcomes_from_bools(base_b), outcomes_from_bools(meth_b))
        assert (a.es, a.ps) == (b.es, b.ps)


class TestEvaluateRun:
    def test_report_fields(self):
        baseline = outcomes_from_bools([True, False, False])
        method = outcomes_from_bools([True, True, False])
        rep = evaluate_run("m", method, baseline, dataset_tag="toy")
        assert rep.method == "m"
        assert rep.q_true_size == 1 and rep.q_false_size == 2
        assert rep.accuracy == 2 / 3
        assert rep.eps == harmonic_mean(rep.es, rep.ps)
        assert set(rep.per_question) == {o.qid for o in method}

    def test_avg_tokens_from_ledger_total(self):
        baseline = outcomes_from_bools([True, False])
        rep = evaluate_run("m", baseline, baseline, tokens_total=123)
        assert rep.avg_tokens == 123 / 2

    def test_avg_tokens_defaults_to_outcome_sum(self):
        baseline = outcomes_from_bools([True, False])
        rep = evaluate_run("m", baseline, baseline)
        assert rep.avg_tokens == sum(o.tokens_total for o in baseline) / 2


class TestReport:
    def make_reports(self):
        baseline = outcomes_from_bools([True, True, False, False])
        method = outcomes_from_bools([True, False, True, True])
        return [
            evaluate_run("few_shot", baseline, baseline, dataset_tag="toy"),
            evaluate_run("mcr", method, baseline, dataset_tag="toy"),
        ]

    def test_writes_all_artifacts(self, tmp_path):
        paths = report(self.make_reports(), tmp_path / "rep")
        for key in ("json", "table", "figure"):
            assert paths[key].exists() and paths[key].stat().st_size > 0
        payload = json.loads(paths["json"].read_text())
        assert [r["method"] for r in payload["runs"]] == ["few_shot", "mcr"]
        assert payload["runs"][0]["eps"] == 0.0, "baseline against itself reports 0.0"

    def test_unset_eps_renders_dash(self):
        baseline = outcomes_from_bools([True, True])
        method = outcomes_from_bools([True, False])
        rep = evaluate_run("m", method, baseline, dataset_tag="toy")
        table = render_table([rep])
        row = table.splitlines()[-1]
        assert " -" in row

    def test_rows_sorted_by_method(self):
        reports = list(reversed(self.make_reports()))
        table = render_table(reports)
        lines = table.splitlines()[2:]
        assert [line.split()[0] for line in lines] == ["few_shot", "mcr"]

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(EvalError):
            report([], tmp_path / "rep")

    def test_mixed_tags_rejected(self, tmp_path):
        a, b = self.make_reports()
        from dataclasses import replace

        with pytest.raises(EvalError, match="datasets"):
            report([a, replace(b, dataset_tag="other")], tmp_path / "rep")


class TestEvalReportInvariants:
    def test_eps_requires_both_scores(self):
        with pytest.raises(EvalError):
            EvalReport(method="m", dataset_tag="", accuracy=0.5, es=None, ps=0.5, eps=0.5,
                       q_true_size=1, q_false_size=1,
                       avg_tokens=1.0, per_question={"a": (0, True), "b": (1, False)})

    def test_partition_must_cover(self):
        with pytest.raises(EvalError):
            EvalReport(method="m", dataset_tag="", accuracy=0.5, es=None, ps=None, eps=None,
                       q_true_size=1, q_false_size=3,
                       avg_tokens=1.0, per_question={"a": (0, True), "b": (1, False)})
