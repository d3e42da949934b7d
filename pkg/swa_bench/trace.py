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

import heapq
import logging
import re
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd

from swa_bench import distributions
from swa_bench.app.config import DEFAULT_PARTITIONS, DEFAULT_SWEEP_INTERVAL_MS
from swa_bench.common.errors import ConfigError, TraceParseError
from swa_bench.models.distribution import Distribution
from swa_bench.models.trace import (
    InstanceStats,
    InvocationTuple,
    ServiceCatalog,
    ServiceDef,
    Trace,
    TraceConfig,
    TraceRecord,
)

logger = logging.getLogger(__name__)

ReplayMode = Literal["as-fast-as-possible", "event-time"]

Column = TraceRecord.Column


def build_catalog(
    count: int,
    degree_dist: Distribution,
    seed: int,
    partitions: int = DEFAULT_PARTITIONS,
    shared_atomics: bool = False,
) -> ServiceCatalog:
    """Synthesize ``count`` composite services with degrees drawn from ``degree_dist``.

    Sub-service ``j`` of a service lives on partition ``j % partitions``; the
    head is sub-service 0. With ``shared_atomics`` every odd-indexed service
    reuses the atomic sub-services of its predecessor where both have one.
    """
    if count < 1:
        raise ConfigError(f"Catalog size must be positive, got {count}")
    if partitions < 1:
        raise ConfigError(f"Partition count must be positive, got {partitions}")
    rng = np.random.default_rng(seed)
    degrees = np.maximum(1, np.rint(np.atleast_1d(distributions.sample(degree_dist, rng, count)))).astype(int)

    services: List[ServiceDef] = []
    for i, degree in enumerate(degrees):
        head = f"S{i}"
        subs = [head] + [f"S{i}.{j}" for j in range(1, degree)]
        if shared_atomics and i % 2 == 1:
            prev = services[-1]
            shared = min(degree, prev.degree)
            subs = [head] + prev.sub_services[1:shared] + subs[shared:]
        services.append(
            ServiceDef(
                service_id=head,
                head_id=head,
                degree=int(degree),
                sub_services=subs,
                partition_of_subservice=[j % partitions for j in range(degree)],
            )
        )
    logger.debug(f"Built catalog of {count} services, mean degree {degrees.mean():.4f}")
    return ServiceCatalog(services=services, partitions=partitions, shared_atomics=shared_atomics)


def user_address(index: int) -> str:
    return f"10.{(index >> 16) & 255}.{(index >> 8) & 255}.{index & 255}"


def _service_sequence(rng: np.random.Generator, n: int, catalog_size: int, repeat_factor: float) -> np.ndarray:
    unique = int(min(max(1, round(n / repeat_factor)), catalog_size, n))
    chosen = rng.choice(catalog_size, size=unique, replace=False)
    extra = rng.choice(chosen, size=n - unique, replace=True)
    return rng.permutation(np.concatenate([chosen, extra]))


def generate_trace(catalog: ServiceCatalog, cfg: TraceConfig) -> Trace:
    # stream independent of the catalog built from the same seed
    rng = np.random.default_rng([cfg.seed, 1])
    n = cfg.instance_count

    picks = _service_sequence(rng, n, len(catalog.services), cfg.repeat_factor)
    users = rng.integers(0, cfg.user_pool, size=n)
    arrivals = np.floor(np.cumsum(np.atleast_1d(distributions.sample(cfg.arrival_dist, rng, n)))).astype(np.int64)
    spans = np.floor(np.atleast_1d(distributions.sample(cfg.span_dist, rng, n)) * cfg.span_unit_ms).astype(np.int64)

    rows: List[Tuple[int, int, int, str, str, str, int, int, str]] = []
    order = 0
    for i in range(n):
        service = catalog.services[picks[i]]
        arrival, span = int(arrivals[i]), int(spans[i])
        u = rng.random(service.degree - 1)
        if cfg.placement == "front_loaded":
            u = u * u
        offsets = [0] + np.floor(u * span).astype(np.int64).tolist()
        user = user_address(int(users[i]))
        label = f"I{i}"
        for sub, partition, offset in zip(service.sub_services, service.partition_of_subservice, offsets):
            ts = arrival + offset
            rows.append((ts, partition, order, user, sub, service.head_id, arrival // 1000, arrival + span - ts, label))
            order += 1

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    records = [
        TraceRecord(
            invocation=InvocationTuple(seq=seq, timestamp=ts, user_id=user, service_id=sub, head_id=head, instance_ts=its, response_time=resp),
            truth_instance=label,
            partition=partition,
        )
        for seq, (ts, partition, _, user, sub, head, its, resp, label) in enumerate(rows)
    ]
    logger.info(f"Generated trace: {n} instances, {len(records)} tuples, {catalog.partitions} partitions")
    return Trace(partitions=catalog.partitions, records=records)


def write_trace(trace: Trace, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_dataframe().to_csv(path, index=False, lineterminator="\n")


_TOKENIZE_LINE = re.compile(r"line (\d+)")


def read_trace(path: Union[str, Path]) -> Trace:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Trace file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise TraceParseError("missing header", row=1) from e
    except UnicodeDecodeError as e:
        raise TraceParseError(f"not UTF-8 text: {e.reason}", row=1) from e
    except pd.errors.ParserError as e:
        m = _TOKENIZE_LINE.search(str(e))
        raise TraceParseError(str(e), row=int(m.group(1)) if m else 0) from e

    if list(df.columns) != Column.ALL:
        raise TraceParseError(f"expected columns {','.join(Column.ALL)}, got {','.join(map(str, df.columns))}", row=1)

    records = []
    for idx, values in enumerate(df.itertuples(index=False, name=None)):
        row = idx + 2
        fields = dict(zip(Column.ALL, values))
        missing = [k for k, v in fields.items() if not isinstance(v, str) or v == ""]
        if missing:
            raise TraceParseError(f"missing value(s) for {','.join(missing)}", row=row)
        try:
            ints = {k: int(fields[k]) for k in Column.INTEGER}
        except ValueError as e:
            raise TraceParseError(f"non-integer field: {e}", row=row) from e
        try:
            records.append(
                TraceRecord(
                    invocation=InvocationTuple(
                        seq=idx,
                        timestamp=ints[Column.timestamp],
                        user_id=fields[Column.user_id],
                        service_id=fields[Column.service_id],
                        head_id=fields[Column.head_id],
                        instance_ts=ints[Column.instance_ts],
                        response_time=ints[Column.response_time],
                    ),
                    truth_instance=fields[Column.truth_instance],
                    partition=ints[Column.partition],
                )
            )
        except ValueError as e:
            raise TraceParseError(str(e).splitlines()[0], row=row) from e
    partitions = max((r.partition for r in records), default=-1) + 1
    return Trace(partitions=partitions, records=records)


def instance_stats(trace: Trace) -> List[InstanceStats]:
    """Per ground-truth instance: degree, first and last timestamp, observed span."""
    acc: Dict[str, InstanceStats] = {}
    for r in trace.records:
        t = r.invocation
        s = acc.get(r.truth_instance)
        if s is None:
            acc[r.truth_instance] = InstanceStats(
                truth_instance=r.truth_instance,
                head_id=t.head_id,
                degree=1,
                first_ms=t.timestamp,
                last_ms=t.timestamp,
                span_ms=0,
                service_span_ms=t.response_time,
            )
            continue
        s.degree += 1
        s.first_ms = min(s.first_ms, t.timestamp)
        s.last_ms = max(s.last_ms, t.timestamp)
        s.span_ms = s.last_ms - s.first_ms
        s.service_span_ms = max(s.service_span_ms or 0, t.response_time)
    return list(acc.values())


class LogicalClock:
    """Event-time clock driven by tuple timestamps; timers fire on a fixed sweep grid."""

    def __init__(self, sweep_interval_ms: int = DEFAULT_SWEEP_INTERVAL_MS):
        if sweep_interval_ms < 1:
            raise ConfigError(f"Sweep interval must be >= 1 ms, got {sweep_interval_ms}")
        self.sweep_interval_ms = sweep_interval_ms
        self.now: Optional[int] = None

    def advance(self, timestamp: int):
        if self.now is not None and timestamp < self.now:
            raise ConfigError(f"Event time moved backwards: {timestamp} < {self.now}")
        self.now = timestamp

    def first_tick_after(self, t: int) -> int:
        return (t // self.sweep_interval_ms + 1) * self.sweep_interval_ms


class StreamFeed:
    """Per-partition, timestamp-ordered delivery of the tuples of one trace.

    Ground truth and partition columns are not part of the delivered tuples.
    """

    def __init__(self, partitions: List[List[InvocationTuple]], mode: ReplayMode, clock: Optional[LogicalClock] = None):
        self.partitions = partitions
        self.mode = mode
        self.clock = clock

    def __len__(self) -> int:
        return sum(len(p) for p in self.partitions)

    def partition(self, index: int) -> Iterator[InvocationTuple]:
        return iter(self.partitions[index])

    def merged(self) -> Iterator[Tuple[int, InvocationTuple]]:
        """Global order: timestamp, then partition index, then input order."""
        streams = [(((t.timestamp, p, i), p, t) for i, t in enumerate(feed)) for p, feed in enumerate(self.partitions)]
        for _, p, t in heapq.merge(*streams, key=lambda x: x[0]):
            yield p, t


def replay(trace: Trace, mode: ReplayMode = "event-time", sweep_interval_ms: int = DEFAULT_SWEEP_INTERVAL_MS) -> StreamFeed:
    if mode not in ("as-fast-as-possible", "event-time"):
        raise ConfigError(f"Unknown replay mode '{mode}'")
    count = max(trace.partitions, max((r.partition for r in trace.records), default=-1) + 1)
    partitions: List[List[InvocationTuple]] = [[] for _ in range(count)]
    for r in trace.records:
        feed = partitions[r.partition]
        if feed and r.invocation.timestamp < feed[-1].timestamp:
            raise ConfigError(f"Trace is not sorted in partition {r.partition} at seq {r.invocation.seq}")
        feed.append(r.invocation)
    clock = LogicalClock(sweep_interval_ms) if mode == "event-time" else None
    return StreamFeed(partitions, mode, clock)
