"""Two-hop evaluation and aggregation tests."""

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from costforge.errors import EmptyInput, JudgeUnparseable
from costforge.evaluation import (
    EvalRecord,
    aggregate,
    evaluate_sample,
    judge_score,
    measure_latency,
    two_hop_answer,
)
from costforge.gateway import BackendRef, Gateway
from costforge.pipeline import QASample
from costforge.structures import StructuredOutput


SENTINEL = "XDOCSENTINELX"

QA = QASample(
    id="qa-1",
    question="What did A earn in 2020?",
    documents=(("d1", f"A earned 10 in 2020. {SENTINEL}"),),
    gold_answer="10",
    task_category="SpotlightLocating",
)

STRUCTURE = StructuredOutput.from_table(["Company", "Year", "Revenue"], [["A", "2020", "10"]])


def backend(script, tag="b"):
    gw = Gateway()
    gw.register_scripted_backend(tag, script)
    return BackendRef(gateway=gw, tag=tag), gw


def test_two_hop_answer_pass_through():
    reasoner, _ = backend([{"response": "10"}])
    assert two_hop_answer(QA, STRUCTURE, reasoner) == "10"


def test_two_hop_prompt_excludes_documents():
    captured = {}

    class Spy:
        def generate(self, prompt, request):
            captured["prompt"] = prompt
            return "10"

    gw = Gateway()
    gw.register("spy", Spy())
    two_hop_answer(QA, STRUCTURE, BackendRef(gateway=gw, tag="spy"))
    assert SENTINEL not in captured["prompt"]
    assert "| Company | Year | Revenue |" in captured["prompt"]
    assert QA.question in captured["prompt"]


def test_two_hop_empty_chunks_still_called():
    empty = StructuredOutput.from_chunks([], explicitly_empty=True)
    reasoner, gw = backend([{"response": "cannot tell"}])
    assert two_hop_answer(QA, empty, reasoner) == "cannot tell"
    assert gw.call_count == 1


def test_judge_score_parses():
    judge, _ = backend([{"response": "Score: 100\nexact match"}])
    assert judge_score(QA, "10", judge) == 100
    judge, _ = backend([{"response": "Score: 62"}])
    assert judge_score(QA, "wrong-ish", judge) == 62


def test_judge_score_unparseable():
    judge, _ = backend([{"response": "great answer"}])
    with pytest.raises(JudgeUnparseable):
        judge_score(QA, "10", judge)


def records_with_scores(scores, category="Comparison"):
    return [
        EvalRecord(
            qa_id=f"qa-{i}",
            task_category=category,
            predicted_answer="x",
            judge_score=s,
            latency_seconds=1.0,
        )
        for i, s in enumerate(scores)
    ]


def test_aggregate_hand_case():
    report = aggregate(records_with_scores([100, 100, 50, 0]))
    assert report.overall.average_score == 62.5
    assert report.overall.perfect_rate == 0.5
    assert report.per_category["Comparison"].n == 4


def test_aggregate_all_perfect():
    report = aggregate(records_with_scores([100, 100, 100]))
    assert report.overall.average_score == 100
    assert report.overall.perfect_rate == 1.0


def test_aggregate_per_category():
    records = records_with_scores([100, 0], "Comparison") + records_with_scores(
        [80, 100], "Clustering"
    )
    report = aggregate(records)
    assert report.per_category["Comparison"].average_score == 50
    assert report.per_category["Clustering"].average_score == 90
    assert report.per_category["Clustering"].perfect_rate == 0.5
    assert report.overall.n == 4
    assert "SpotlightLocating" not in report.per_category


def test_aggregate_empty_input():
    with pytest.raises(EmptyInput):
        aggregate([])


def test_aggregate_permutation_invariant():
    records = records_with_scores([10, 90, 100, 40, 70])
    shuffled = records[:]
    random.Random(3).shuffle(shuffled)
    assert aggregate(records) == aggregate(shuffled)


@given(st.lists(st.integers(0, 100), min_size=1, max_size=30))
def test_aggregate_bounds(scores):
    report = aggregate(records_with_scores(scores))
    assert 0 <= report.overall.average_score <= 100
    assert 0 <= report.overall.perfect_rate <= 1
    assert (report.overall.perfect_rate == 1.0) == all(s == 100 for s in scores)


def test_measure_latency_fake_clock():
    times = iter([0.0, 8.04])
    assert measure_latency(lambda: None, clock=lambda: next(times)) == pytest.approx(8.04)


def test_measure_latency_zero():
    times = iter([5.0, 5.0])
    assert measure_latency(lambda: None, clock=lambda: next(times)) == 0.0


def test_mean_latency_in_report():
    records = [
        EvalRecord(qa_id="a", task_category=None, predicted_answer="x", judge_score=50, latency_seconds=10.0),
        EvalRecord(qa_id="b", task_category=None, predicted_answer="y", judge_score=50, latency_seconds=14.0),
    ]
    assert aggregate(records).mean_latency_seconds == 12.0


def test_evaluate_sample_end_to_end():
    reasoner, _ = backend([{"response": "10"}], tag="r")
    judge, _ = backend([{"response": "Score: 100"}], tag="j")
    record = evaluate_sample(QA, STRUCTURE, reasoner, judge, latency_seconds=2.5)
    assert record.judge_score == 100
    assert record.predicted_answer == "10"
    assert record.latency_seconds == 2.5
    assert record.task_category == "SpotlightLocating"


def test_report_summary_table():
    report = aggregate(records_with_scores([100, 50]))
    table = report.summary_table()
    assert "overall" in table and "Comparison" in table and "75.00" in table
