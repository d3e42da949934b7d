# Copyright contributors to the swa-bench project. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import pytest

import traces
from swa_bench import engine, metrics, trace
from swa_bench.common.errors import ConfigError
from swa_bench.models.engine import (
    AggregateConfig,
    AssociationStrategy,
    BoundedQueueSpec,
    CloseReason,
    EmittedInstance,
    PipelineConfig,
)
from swa_bench.models.trace import TraceConfig

NO_DROPS = BoundedQueueSpec(capacity=10**6)


def emission(members, key=("A",)) -> EmittedInstance:
    return EmittedInstance(
        key=key,
        k=len(members),
        members=members,
        count=len(members),
        avg_response_ms=0.0,
        span_ms=0,
        closed_at=0,
        close_reason=CloseReason.full,
    )


def three_instances():
    rows = (
        traces.instance("X", "A", "u1", [0, 10, 20])
        + traces.instance("Y", "B", "u2", [5, 15])
        + traces.instance("Z", "C", "u3", [30])
    )
    return traces.build(rows)


def test_majority_and_tie_break():
    t = three_instances()
    # seq order: 0 X@0, 1 Y@5, 2 X@10, 3 Y@15, 4 X@20, 5 Z@30
    mapping = metrics.match_instances([emission([0, 2, 3]), emission([1, 4]), emission([5, 3])], t)
    assert mapping == {0: "X", 1: "X", 2: "Y"}


def test_completeness_counts_best_window():
    t = three_instances()
    emitted = [emission([0, 2]), emission([4]), emission([1, 3]), emission([5])]
    assert metrics.completeness(emitted, t, 1.0) == pytest.approx(2 / 3)
    assert metrics.completeness(emitted, t, 0.6) == pytest.approx(1.0)
    assert metrics.capture_rate(emitted, t) == 1.0
    assert metrics.recall_and_correct_rate(emitted, t) == (1.0, 1.0)


def test_k_counts_only_own_members():
    t = three_instances()
    # X has 3 tuples; the window holds 3 tuples but only 2 of X
    emitted = [emission([0, 2, 1])]
    report = metrics.evaluate(emitted, t, gammas=[1.0, 0.5])
    assert report.completeness_at(1.0) == 0.0
    assert report.completeness_at(0.5) == pytest.approx(1 / 3)
    assert report.correct_rate == 0.0
    assert report.recall == pytest.approx(1 / 3)
    assert report.capture_rate == pytest.approx(3 / 6)
    assert report.instance_capture_rate == pytest.approx(2 / 3)


def test_completeness_matches_brute_force():
    t = three_instances()
    emitted = [emission([0]), emission([2, 4]), emission([1, 3]), emission([5])]
    truth = {}
    for r in t.records:
        truth.setdefault(r.truth_instance, []).append(r.invocation.seq)
    for gamma in (1.0, 0.85, 0.75, 0.5, 0.3):
        integrated = 0
        for label, seqs in truth.items():
            best = max((sum(1 for m in e.members if m in seqs) for e in emitted), default=0)
            integrated += best >= gamma * len(seqs) - 1e-9
        assert metrics.completeness(emitted, t, gamma) == pytest.approx(integrated / len(truth))


def test_gamma_must_be_in_range():
    with pytest.raises(ConfigError):
        metrics.completeness([emission([0])], three_instances(), 0.0)


def test_unknown_members_are_rejected():
    with pytest.raises(ConfigError):
        metrics.evaluate([emission([99])], three_instances())


def test_members_are_required():
    e = emission([0]).model_copy(update={"members": None})
    with pytest.raises(ConfigError):
        metrics.evaluate([e], three_instances())


def test_report_rows():
    report = metrics.evaluate([emission([0, 2, 4])], three_instances())
    rows = report.to_table_rows()
    assert list(rows) == [
        "Integration Completeness(γ=1)",
        "Integration Completeness(γ=0.85)",
        "Integration Completeness(γ=0.75)",
        "Integration Completeness(0<γ≤1)",
        "Invocation capture rate",
        "Recall",
        "Correct rate",
    ]
    frame = metrics.to_report_frame({"SWA 13/13/22": report})
    assert frame.loc["Recall", "SWA 13/13/22"] == pytest.approx(100 / 3)


def strategy_report(t, strategy):
    cfg = PipelineConfig(queue=NO_DROPS, aggregate=AggregateConfig(kind="swa", capacity=2, timeout_s=22), strategy=strategy)
    result = engine.run_pipeline(t, cfg, observer=None)
    return metrics.evaluate(result.emitted, t)


def test_strategy_ordering_on_collisions():
    t = traces.collision_trace()
    reports = [strategy_report(t, s) for s in ("head", "head_ts", "head_ts_ip")]
    assert [r.correct_rate for r in reports] == [0.0, 0.5, 1.0]
    assert [r.recall for r in reports] == [0.5, 0.75, 1.0]


def test_strategy_ordering_with_shared_atomics():
    cfg = TraceConfig(instance_count=600, service_count=20, repeat_factor=30.0, user_pool=50, shared_atomics=True, seed=5)
    catalog = trace.build_catalog(cfg.service_count, cfg.degree_dist, cfg.seed, cfg.partitions, cfg.shared_atomics)
    t = trace.generate_trace(catalog, cfg)
    reports = []
    for strategy in ("head", "head_ts", "head_ts_ip"):
        pipeline = PipelineConfig(queue=NO_DROPS, aggregate=AggregateConfig(kind="swa", capacity=13, timeout_s=22), strategy=strategy)
        reports.append(metrics.evaluate(engine.run_pipeline(t, pipeline, observer=None).emitted, t))
    correct = [r.correct_rate for r in reports]
    recall = [r.recall for r in reports]
    assert correct == sorted(correct)
    assert recall == sorted(recall)
    assert correct[0] < correct[2]


def collision_free_trace(instances: int = 1500):
    cfg = traces.collision_free_config(instances)
    catalog = trace.build_catalog(cfg.service_count, cfg.degree_dist, cfg.seed, cfg.partitions)
    return trace.generate_trace(catalog, cfg)


def swa_report(t, capacity, timeout_s, strategy=AssociationStrategy.head_ts_ip):
    cfg = PipelineConfig(queue=NO_DROPS, aggregate=AggregateConfig(kind="swa", capacity=capacity, timeout_s=timeout_s), strategy=strategy)
    return metrics.evaluate(engine.run_pipeline(t, cfg, observer=None).emitted, t)


def test_collision_free_trace_is_fully_correct():
    t = collision_free_trace()
    report = swa_report(t, 13, 22)
    assert report.correct_rate == 1.0
    assert report.recall == 1.0
    assert report.capture_rate == 1.0


def test_swa_matches_oracle_without_collisions():
    t = collision_free_trace()
    for capacity, timeout_s in [(13, 22), (10, 15)]:
        report = swa_report(t, capacity, timeout_s)
        assert report.completeness_at(1.0) == pytest.approx(metrics.completeness_oracle(t, capacity, timeout_s), abs=1e-12)


def test_completeness_monotone_in_gamma_capacity_and_timeout():
    t = collision_free_trace()
    grid = {}
    for capacity in (10, 13, 16):
        for timeout_s in (15, 22, 30):
            report = swa_report(t, capacity, timeout_s)
            values = [report.completeness_at(g) for g in (1.0, 0.85, 0.75)]
            assert values == sorted(values)
            grid[(capacity, timeout_s)] = values[0]
    for timeout_s in (15, 22, 30):
        column = [grid[(c, timeout_s)] for c in (10, 13, 16)]
        assert column == sorted(column)
    for capacity in (10, 13, 16):
        row = [grid[(capacity, t_s)] for t_s in (15, 22, 30)]
        assert row == sorted(row)
