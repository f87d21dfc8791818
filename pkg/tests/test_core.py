import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probetime.core import (
    EvalRecord,
    ProbeTaskSpec,
    ScoreSeries,
    assemble_series,
    deserialize_series,
    serialize_series,
)
from probetime.errors import ContractViolation, DuplicateCheckpoint, NoData, ParseError


def rec(step, value, task="t"):
    return EvalRecord(task_id=task, checkpoint_step=step, metric_value=value, n_items=10)


class TestAssembleSeries:
    def test_two_points_sorted(self):
        series = assemble_series([rec(0, 0.25), rec(100, 0.5)], "t", "run")
        assert series.points == ((0, 0.25), (100, 0.5))

    def test_reverse_order_input(self):
        series = assemble_series([rec(100, 0.5), rec(0, 0.25)], "t", "run")
        assert series.points == ((0, 0.25), (100, 0.5))

    def test_matches_sort_oracle_on_random_records(self):
        rng = random.Random(42)
        steps = rng.sample(range(10_000), 50)
        records = [rec(s, rng.random()) for s in steps]
        rng.shuffle(records)
        series = assemble_series(records, "t", "run")
        oracle = tuple(sorted((r.checkpoint_step, r.metric_value) for r in records))
        assert series.points == oracle

    def test_empty_is_no_data(self):
        with pytest.raises(NoData):
            assemble_series([], "t", "run")

    def test_duplicate_step_rejected(self):
        with pytest.raises(DuplicateCheckpoint):
            assemble_series([rec(5, 0.1), rec(5, 0.2)], "t", "run")

    def test_mixed_task_ids_rejected(self):
        with pytest.raises(ContractViolation):
            assemble_series([rec(0, 0.1), rec(1, 0.2, task="other")], "t", "run")

    @given(
        st.lists(
            st.tuples(st.integers(0, 10_000), st.floats(0, 1)),
            min_size=1,
            max_size=30,
            unique_by=lambda p: p[0],
        ),
        st.randoms(),
    )
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, points, rnd):
        records = [rec(s, v) for s, v in points]
        shuffled = list(records)
        rnd.shuffle(shuffled)
        assert assemble_series(records, "t", "r").points == assemble_series(shuffled, "t", "r").points


class TestSeriesInvariants:
    def test_steps_strictly_increasing(self):
        with pytest.raises(ContractViolation):
            ScoreSeries(task_id="t", run_tag="r", points=((1, 0.5), (1, 0.6)))

    def test_non_empty(self):
        with pytest.raises(ContractViolation):
            ScoreSeries(task_id="t", run_tag="r", points=())

    def test_non_finite_rejected(self):
        with pytest.raises(ContractViolation):
            ScoreSeries(task_id="t", run_tag="r", points=((0, float("nan")),))


class TestSerialization:
    def test_round_trip_identity(self):
        series = ScoreSeries("t", "run", ((0, 0.1), (20, 1 / 3), (40, 0.9999999999999)))
        again = deserialize_series(serialize_series(series))
        assert again.steps == series.steps
        assert again.values == series.values  # 17 significant digits round-trip exactly
        assert again == series

    def test_random_thousand_point_round_trip(self):
        rng = random.Random(7)
        steps = sorted(rng.sample(range(10**7), 1000))
        series = ScoreSeries("big", "run", tuple((s, rng.random()) for s in steps))
        assert deserialize_series(serialize_series(series)) == series

    def test_header_format(self):
        payload = serialize_series(ScoreSeries("t", "run", ((3, 0.5),))).decode()
        lines = payload.split("\n")
        assert lines[0] == "task_id,run_tag,step,value"
        assert lines[1].startswith("t,run,3,")
        assert payload.endswith("\n")
        assert "\r" not in payload

    def test_empty_points_is_parse_error(self):
        with pytest.raises(ParseError):
            deserialize_series(b"task_id,run_tag,step,value\n")

    def test_bad_header(self):
        with pytest.raises(ParseError):
            deserialize_series(b"nope\n1,2,3,4\n")

    def test_malformed_value_names_line_and_field(self):
        data = b"task_id,run_tag,step,value\nt,r,0,abc\n"
        with pytest.raises(ParseError) as exc:
            deserialize_series(data)
        assert "line 2" in str(exc.value)
        assert "value" in str(exc.value)

    def test_mixed_tasks_rejected(self):
        data = b"task_id,run_tag,step,value\na,r,0,0.5\nb,r,1,0.5\n"
        with pytest.raises(ParseError):
            deserialize_series(data)

    def test_unsorted_steps_rejected(self):
        data = b"task_id,run_tag,step,value\nt,r,5,0.5\nt,r,1,0.5\n"
        with pytest.raises(ParseError):
            deserialize_series(data)

    def test_smoothed_series_not_persisted(self):
        series = ScoreSeries("t", "r", ((0, 0.5),), smoothed=True)
        with pytest.raises(ContractViolation):
            serialize_series(series)


class TestRecordAndSpec:
    def test_metric_range_enforced(self):
        with pytest.raises(ContractViolation):
            EvalRecord(task_id="t", checkpoint_step=0, metric_value=1.5, n_items=3)

    def test_zero_items_rejected(self):
        with pytest.raises(ContractViolation):
            EvalRecord(task_id="t", checkpoint_step=0, metric_value=0.5, n_items=0)

    def test_metric_family_compatibility(self):
        with pytest.raises(ContractViolation):
            ProbeTaskSpec("t", "minimal_pair", "x", metric="precision_at_k")
        with pytest.raises(ContractViolation):
            ProbeTaskSpec("t", "cloze", "x", metric="span_f1")
        spec = ProbeTaskSpec("t", "cloze", "x")
        assert spec.metric == "precision_at_k"

    def test_k_must_be_positive(self):
        with pytest.raises(ContractViolation):
            ProbeTaskSpec("t", "cloze", "x", params={"k": 0})
        assert ProbeTaskSpec("t", "cloze", "x", params={"k": 3}).k == 3
