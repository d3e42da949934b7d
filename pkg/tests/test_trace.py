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

from collections import Counter

import numpy as np
import pandas as pd
import pytest

import traces
from swa_bench import presets, trace
from swa_bench.common.errors import ConfigError, TraceParseError
from swa_bench.models.trace import ServiceCatalog, ServiceDef, TraceConfig, TraceRecord

Column = TraceRecord.Column


def small_config(**kwargs) -> TraceConfig:
    defaults = dict(instance_count=300, service_count=400, seed=3)
    defaults.update(kwargs)
    return TraceConfig(**defaults)


def generate(cfg: TraceConfig):
    catalog = trace.build_catalog(cfg.service_count, cfg.degree_dist, cfg.seed, cfg.partitions, cfg.shared_atomics)
    return catalog, trace.generate_trace(catalog, cfg)


def test_generation_is_deterministic():
    _, a = generate(small_config())
    _, b = generate(small_config())
    _, c = generate(small_config(seed=4))
    pd.testing.assert_frame_equal(a.to_dataframe(), b.to_dataframe())
    assert not a.to_dataframe().equals(c.to_dataframe())


def test_every_instance_carries_its_service_degree():
    catalog, t = generate(small_config())
    services = {s.service_id: s for s in catalog.services}
    per_label = {}
    for r in t.records:
        per_label.setdefault(r.truth_instance, []).append(r)
    assert len(per_label) == 300
    for label, records in per_label.items():
        heads = {r.invocation.head_id for r in records}
        assert len(heads) == 1
        service = services[heads.pop()]
        assert len(records) == service.degree
        assert sorted(r.invocation.service_id for r in records) == sorted(service.sub_services)
        first = min(r.invocation.timestamp for r in records)
        head = [r for r in records if r.invocation.service_id == service.head_id][0]
        assert head.invocation.timestamp == first
        assert all(r.invocation.instance_ts == first // 1000 for r in records)


def test_records_are_time_ordered_with_sequence_numbers():
    _, t = generate(small_config())
    stamps = [r.invocation.timestamp for r in t.records]
    assert stamps == sorted(stamps)
    assert [r.invocation.seq for r in t.records] == list(range(len(t)))
    assert {r.partition for r in t.records} == {0, 1}


def test_repeat_factor_controls_reuse():
    _, t = generate(small_config(instance_count=400, repeat_factor=2.0))
    heads = Counter()
    for label, head in {(r.truth_instance, r.invocation.head_id) for r in t.records}:
        heads[head] += 1
    assert len(heads) == 200


def test_catalog_degrees_follow_the_degree_law():
    catalog = trace.build_catalog(10000, presets.DEGREE_ERLANG, seed=1)
    degrees = np.array([s.degree for s in catalog.services])
    assert degrees.mean() == pytest.approx(100 / 8.7963, rel=0.02)
    assert (degrees <= 15).mean() >= 0.99


def test_merged_stream_inter_arrival():
    _, t = generate(small_config(instance_count=10000, service_count=10000))
    heads = np.array(sorted(s.first_ms for s in trace.instance_stats(t)))
    lo, hi = np.quantile(heads, [0.2, 0.8])
    stamps = np.array([r.invocation.timestamp for r in t.records])
    inside = int(np.sum((stamps >= lo) & (stamps < hi)))
    assert (hi - lo) / inside == pytest.approx(presets.INVOCATION_ARRIVAL_MEAN_MS, rel=0.15)


def test_shared_atomics_catalog():
    catalog = trace.build_catalog(50, presets.DEGREE_ERLANG, seed=1, shared_atomics=True)
    listed = Counter(sub for s in catalog.services for sub in s.sub_services)
    assert any(n > 1 for n in listed.values())
    with pytest.raises(ConfigError):
        ServiceCatalog(services=catalog.services, shared_atomics=False)


def test_shared_atomics_keep_the_instance_head():
    _, t = generate(small_config(shared_atomics=True, instance_count=400, service_count=40))
    heads = {}
    for r in t.records:
        heads.setdefault(r.truth_instance, set()).add(r.invocation.head_id)
    assert all(len(h) == 1 for h in heads.values())
    callers = {}
    for r in t.records:
        callers.setdefault(r.invocation.service_id, set()).add(r.invocation.head_id)
    assert any(len(h) > 1 for h in callers.values())


def test_service_degree_must_match():
    with pytest.raises(ConfigError):
        ServiceDef(service_id="S0", head_id="S0", degree=2, sub_services=["S0"], partition_of_subservice=[0])


def test_instance_stats():
    t = traces.collision_trace()
    stats = {s.truth_instance: s for s in trace.instance_stats(t)}
    assert stats["P"].degree == 2
    assert stats["P"].span_ms == 30
    assert stats["R"].first_ms == 1000


def test_csv_round_trip(tmp_path):
    _, t = generate(small_config(instance_count=50))
    path = tmp_path / "trace.csv"
    trace.write_trace(t, path)
    header = path.read_text().splitlines()[0]
    assert header == "timestamp_ms,user_id,service_id,head_id,instance_ts_s,response_ms,truth_instance,partition"
    loaded = trace.read_trace(path)
    assert loaded.records == t.records
    assert loaded.partitions == 2


@pytest.mark.parametrize(
    "content,row",
    [
        ("", 1),
        ("timestamp_ms,user_id\n1,a\n", 1),
        (",".join(Column.ALL) + "\n0,u,S0,S0,0,5,I0,0\n10,u,S0.1,S0,zero,5,I0,1\n", 3),
        (",".join(Column.ALL) + "\n0,u,S0,S0,0,5,,0\n", 2),
        (",".join(Column.ALL) + "\n0,u,S0,S0,0,5,I0,-1\n", 2),
    ],
)
def test_csv_errors_name_the_row(tmp_path, content, row):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(TraceParseError) as e:
        trace.read_trace(path)
    assert e.value.row == row
    assert e.value.exit_code == 2


def test_non_utf8_trace_is_a_parse_error(tmp_path):
    path = tmp_path / "latin1.csv"
    path.write_bytes((",".join(Column.ALL) + "\n").encode() + b"0,u\xe9\xff,S0,S0,0,5,I0,0\n")
    with pytest.raises(TraceParseError) as e:
        trace.read_trace(path)
    assert e.value.row == 1


def test_missing_trace_file(tmp_path):
    with pytest.raises(ConfigError):
        trace.read_trace(tmp_path / "none.csv")


def test_replay_merges_partitions():
    rows = traces.instance("X", "A", "u1", [0, 5], partition=1) + traces.instance("Y", "B", "u2", [0, 7], partition=0)
    feed = trace.replay(traces.build(rows))
    order = [(p, t.service_id) for p, t in feed.merged()]
    assert order == [(0, "B"), (1, "A"), (1, "A.1"), (0, "B.1")]
    assert len(feed) == 4
    assert feed.clock is not None
    assert trace.replay(traces.build(rows), "as-fast-as-possible").clock is None


def test_replay_rejects_unsorted_partition():
    t = traces.build(traces.instance("X", "A", "u1", [0, 5]))
    t.records.reverse()
    with pytest.raises(ConfigError):
        trace.replay(t)
    with pytest.raises(ConfigError):
        trace.replay(traces.SINGLE, "real-time")


def test_logical_clock():
    clock = trace.LogicalClock(100)
    clock.advance(5)
    clock.advance(5)
    assert clock.first_tick_after(22000) == 22100
    assert clock.first_tick_after(22050) == 22100
    with pytest.raises(ConfigError):
        clock.advance(4)
    with pytest.raises(ConfigError):
        trace.LogicalClock(0)
