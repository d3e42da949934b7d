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

import asyncio
import heapq
import logging
from collections import deque
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from swa_bench.app.config import DEFAULT_SWEEP_INTERVAL_MS, DEFAULT_TUPLE_SIZE
from swa_bench.common.errors import ConfigError
from swa_bench.models.engine import (
    AggregateConfig,
    AssociationStrategy,
    BoundedQueueSpec,
    CloseReason,
    EmittedInstance,
    Key,
    OperatorStats,
    PipelineConfig,
    PipelineResult,
    WindowParams,
)
from swa_bench.models.trace import InvocationTuple, Trace
from swa_bench.observer import DEFAULT_OBSERVER, Observer, RunEvent
from swa_bench.trace import LogicalClock, ReplayMode, replay

logger = logging.getLogger(__name__)


def extract_key(t: InvocationTuple, strategy: AssociationStrategy) -> Key:
    strategy = AssociationStrategy(strategy)
    if strategy == AssociationStrategy.head:
        return (t.head_id,)
    if strategy == AssociationStrategy.head_ts:
        return (t.head_id, t.instance_ts)
    if strategy == AssociationStrategy.head_ip:
        return (t.head_id, t.user_id)
    return (t.head_id, t.instance_ts, t.user_id)


def build_instance(key: Key, tuples: List[InvocationTuple], opened_at: int, closed_at: int, reason: CloseReason, evaluation: bool) -> EmittedInstance:
    responses = [t.response_time for t in tuples]
    stamps = [t.timestamp for t in tuples]
    return EmittedInstance(
        key=key,
        k=len(tuples),
        members=[t.seq for t in tuples] if evaluation else None,
        count=len(tuples),
        min_response_ms=min(responses),
        max_response_ms=max(responses),
        avg_response_ms=sum(responses) / len(responses),
        span_ms=max(stamps) - min(stamps),
        opened_at=opened_at,
        closed_at=closed_at,
        close_reason=reason,
    )


# UNION


class UnionOperator:
    """Stateless router in front of a bounded drop-on-full queue.

    The consumer processes one tuple at a time for ``service_time_ms``.
    Occupancy counts the tuple in service; an arrival that finds
    ``capacity`` tuples in the system is rejected.
    """

    def __init__(self, queue: BoundedQueueSpec, name: str = "union"):
        if queue.capacity < 1:
            raise ConfigError(f"UNION queue capacity must be >= 1, got {queue.capacity}")
        self.queue = queue
        self.capacity = queue.capacity
        self.service_time_ms = queue.service_time_ms
        self.in_system: Deque[float] = deque()
        self.last_departure = 0.0
        self.stats = OperatorStats(name=name, tuple_size=queue.tuple_size)

    def offer(self, t: InvocationTuple) -> bool:
        now = float(t.timestamp)
        while self.in_system and self.in_system[0] <= now:
            self.in_system.popleft()
        self.stats.tuples_in += 1
        self.stats.queue_lengths.append(len(self.in_system))
        if len(self.in_system) >= self.capacity:
            self.stats.tuples_dropped += 1
            return False
        departure = max(now, self.last_departure) + self.service_time_ms
        self.last_departure = departure
        self.in_system.append(departure)
        self.stats.tuples_out += 1
        self.stats.residence_ms.append(departure - now)
        self.stats.tuples_resident.append(len(self.in_system))
        self.stats.storage_bytes.append(len(self.in_system) * self.queue.tuple_size)
        return True


def union(inputs: List[Iterable[InvocationTuple]], queue: BoundedQueueSpec) -> Tuple[List[InvocationTuple], OperatorStats]:
    """Timestamp-ordered merge of ``inputs`` through one bounded queue; ties go to the lower input index."""

    op = UnionOperator(queue)
    streams = [(((t.timestamp, p, i), t) for i, t in enumerate(feed)) for p, feed in enumerate(inputs)]
    merged = [t for _, t in heapq.merge(*streams, key=lambda x: x[0]) if op.offer(t)]
    return merged, op.stats


# AGGREGATE


class SmallWindow:
    __slots__ = ("key", "capacity", "tuples", "opened_at")

    def __init__(self, key: Key, capacity: int, first: InvocationTuple):
        self.key = key
        self.capacity = capacity
        self.tuples = [first]
        self.opened_at = first.timestamp


class SmallWindowArray:
    """Keyed map of fixed-capacity windows, at most one open window per key.

    A window closes when it holds ``capacity`` tuples or once it has been open
    longer than the timeout. With a clock, expiry happens on the clock's sweep
    grid; without one, only arrivals trigger the sweep.
    """

    def __init__(
        self,
        params: WindowParams,
        strategy: AssociationStrategy,
        clock: Optional[LogicalClock] = None,
        evaluation: bool = True,
        tuple_size: int = DEFAULT_TUPLE_SIZE,
        name: str = "aggregate",
    ):
        self.params = params
        self.strategy = AssociationStrategy(strategy)
        self.clock = clock
        self.evaluation = evaluation
        self.tuple_size = tuple_size
        self.windows: Dict[Key, SmallWindow] = {}
        self.resident_tuples = 0
        self.last_seen: Optional[int] = None
        self.stats = OperatorStats(name=name, tuple_size=tuple_size)

    def _expiry(self, window: SmallWindow, now: int) -> int:
        """Close time of an expired window: the first sweep tick past its deadline, or ``now`` without a clock."""
        if self.clock is None:
            return now
        return min(self.clock.first_tick_after(window.opened_at + self.params.timeout_ms), now)

    def _close(self, window: SmallWindow, closed_at: int, reason: CloseReason) -> EmittedInstance:
        del self.windows[window.key]
        self.resident_tuples -= len(window.tuples)
        self.stats.tuples_out += len(window.tuples)
        self.stats.instances_out += 1
        self.stats.residence_ms.extend(closed_at - t.timestamp for t in window.tuples)
        return build_instance(window.key, window.tuples, window.opened_at, closed_at, reason, self.evaluation)

    def sweep(self, now: int) -> List[EmittedInstance]:
        # windows are kept in opening order, so expired ones form a prefix
        emitted = []
        while self.windows:
            window = next(iter(self.windows.values()))
            if now - window.opened_at <= self.params.timeout_ms:
                break
            emitted.append(self._close(window, self._expiry(window, now), CloseReason.timeout))
        return emitted

    def on_tuple(self, t: InvocationTuple) -> List[EmittedInstance]:
        now = t.timestamp
        if self.clock is not None:
            self.clock.advance(now)
        self.last_seen = now if self.last_seen is None else max(self.last_seen, now)
        emitted = self.sweep(now)
        self.stats.tuples_in += 1
        self.stats.queue_lengths.append(len(self.windows))

        key = extract_key(t, self.strategy)
        window = self.windows.get(key)
        if window is None:
            window = SmallWindow(key, self.params.capacity, t)
            self.windows[key] = window
        else:
            window.tuples.append(t)
        self.resident_tuples += 1
        if len(window.tuples) >= window.capacity:
            emitted.append(self._close(window, now, CloseReason.full))
        self._sample()
        return emitted

    def _sample(self):
        self.stats.windows_resident.append(len(self.windows))
        self.stats.tuples_resident.append(self.resident_tuples)
        self.stats.storage_bytes.append(len(self.windows) * self.params.capacity * self.tuple_size)

    def flush(self) -> List[EmittedInstance]:
        """Close every open window with reason timeout at end of stream."""
        emitted = []
        for window in list(self.windows.values()):
            if self.clock is not None:
                closed_at = self.clock.first_tick_after(window.opened_at + self.params.timeout_ms)
            else:
                closed_at = max(self.last_seen or 0, window.opened_at)
            emitted.append(self._close(window, closed_at, CloseReason.timeout))
        self.stats.resident = self.resident_tuples
        return emitted


class SlidingWindow:
    """Count-based window of ``window_size`` tuples advancing by ``step``.

    Each full batch is partitioned by key and every group becomes one
    emitted instance. The trailing partial batch is emitted at end of stream
    with reason timeout.
    """

    def __init__(
        self,
        window_size: int,
        step: Optional[int],
        strategy: AssociationStrategy,
        evaluation: bool = True,
        tuple_size: int = DEFAULT_TUPLE_SIZE,
        name: str = "aggregate",
    ):
        if window_size < 1 or (step is not None and step < 1):
            raise ConfigError(f"Sliding window needs window >= 1 and step >= 1, got {window_size}/{step}")
        self.window_size = window_size
        self.step = step or window_size
        self.strategy = AssociationStrategy(strategy)
        self.evaluation = evaluation
        self.tuple_size = tuple_size
        self.buffer: List[InvocationTuple] = []
        self.skip = 0
        self.fresh = 0
        self.stats = OperatorStats(name=name, tuple_size=tuple_size)

    def _groups(self, batch: List[InvocationTuple], closed_at: int, reason: CloseReason) -> List[EmittedInstance]:
        groups: Dict[Key, List[InvocationTuple]] = {}
        for t in batch:
            groups.setdefault(extract_key(t, self.strategy), []).append(t)
        self.stats.instances_out += len(groups)
        self.stats.residence_ms.extend(closed_at - t.timestamp for t in batch)
        return [build_instance(k, ts, ts[0].timestamp, closed_at, reason, self.evaluation) for k, ts in groups.items()]

    def on_tuple(self, t: InvocationTuple) -> List[EmittedInstance]:
        self.stats.tuples_in += 1
        self.stats.queue_lengths.append(len(self.buffer))
        if self.skip > 0:
            self.skip -= 1
            self.stats.tuples_dropped += 1
            return []
        self.buffer.append(t)
        self.fresh += 1
        emitted = []
        if len(self.buffer) == self.window_size:
            emitted = self._groups(self.buffer, t.timestamp, CloseReason.full)
            self.stats.tuples_out += self.fresh
            self.fresh = 0
            self.buffer = self.buffer[self.step :]
            self.skip = max(0, self.step - self.window_size)
        self.stats.tuples_resident.append(len(self.buffer))
        self.stats.storage_bytes.append(len(self.buffer) * self.tuple_size)
        self.stats.windows_resident.append(1 if self.buffer else 0)
        return emitted

    def flush(self) -> List[EmittedInstance]:
        emitted = []
        if self.fresh > 0:
            emitted = self._groups(self.buffer, self.buffer[-1].timestamp, CloseReason.timeout)
            self.stats.tuples_out += self.fresh
            self.fresh = 0
        self.buffer = []
        return emitted


def aggregate_sliding(
    feed: Iterable[InvocationTuple],
    window_size: int,
    step: Optional[int],
    strategy: AssociationStrategy,
    evaluation: bool = True,
    tuple_size: int = DEFAULT_TUPLE_SIZE,
) -> Tuple[List[EmittedInstance], OperatorStats]:
    op = SlidingWindow(window_size, step, strategy, evaluation=evaluation, tuple_size=tuple_size)
    emitted: List[EmittedInstance] = []
    for t in feed:
        emitted.extend(op.on_tuple(t))
    emitted.extend(op.flush())
    return emitted, op.stats


def aggregate_swa(
    feed: Iterable[InvocationTuple],
    params: WindowParams,
    strategy: AssociationStrategy,
    clock: Optional[LogicalClock] = None,
    evaluation: bool = True,
    tuple_size: int = DEFAULT_TUPLE_SIZE,
) -> Tuple[List[EmittedInstance], OperatorStats]:
    op = SmallWindowArray(params, strategy, clock=clock, evaluation=evaluation, tuple_size=tuple_size)
    emitted: List[EmittedInstance] = []
    for t in feed:
        emitted.extend(op.on_tuple(t))
    emitted.extend(op.flush())
    return emitted, op.stats


def build_aggregate(cfg: AggregateConfig, strategy: AssociationStrategy, clock: Optional[LogicalClock], evaluation: bool, tuple_size: int):
    if cfg.kind == "swa":
        return SmallWindowArray(cfg.window_params(), strategy, clock=clock, evaluation=evaluation, tuple_size=tuple_size)
    if cfg.kind == "sliding":
        return SlidingWindow(cfg.window, cfg.step, strategy, evaluation=evaluation, tuple_size=tuple_size)
    raise ConfigError(f"Unknown aggregate kind '{cfg.kind}'")


# Pipeline: partition feeds -> UNION -> AGGREGATE -> sink


def run_pipeline(
    trace: Trace,
    config: PipelineConfig,
    evaluation: bool = True,
    mode: ReplayMode = "event-time",
    observer: Optional[Observer] = DEFAULT_OBSERVER,
    sweep_interval_ms: int = DEFAULT_SWEEP_INTERVAL_MS,
) -> PipelineResult:
    feed = replay(trace, mode, sweep_interval_ms)
    if len(feed.partitions) < 1:
        raise ConfigError("Pipeline needs at least one partition feed")
    tuple_size = config.queue.tuple_size
    union_op = UnionOperator(config.queue)
    aggregate_op = build_aggregate(config.aggregate, config.strategy, feed.clock, evaluation, tuple_size)
    if observer:
        observer.notify(RunEvent.pipeline_start, {"aggregate": config.aggregate.label, "strategy": config.strategy.value, "tuples": len(feed), "mode": mode})

    emitted: List[EmittedInstance] = []
    for _, t in feed.merged():
        if union_op.offer(t):
            emitted.extend(aggregate_op.on_tuple(t))
    emitted.extend(aggregate_op.flush())

    stats = {"union": union_op.stats, "aggregate": aggregate_op.stats}
    if observer:
        for name, s in stats.items():
            observer.notify(RunEvent.operator_finished, {"operator": name, **s.summary().model_dump()})
        observer.notify(RunEvent.pipeline_end, {"aggregate": config.aggregate.label, "emitted": len(emitted)})
    return PipelineResult(config=config, emitted=emitted, stats=stats)


_END = object()


async def run_pipeline_concurrent(
    trace: Trace,
    config: PipelineConfig,
    evaluation: bool = True,
    observer: Optional[Observer] = DEFAULT_OBSERVER,
) -> PipelineResult:
    """Operators as asyncio tasks joined by bounded queues.

    The UNION input drops on full; the UNION to AGGREGATE edge applies
    back-pressure. Delivery order across partitions depends on scheduling,
    so results are not bit-reproducible.
    """
    feed = replay(trace, "as-fast-as-possible")
    tuple_size = config.queue.tuple_size
    union_stats = OperatorStats(name="union", tuple_size=tuple_size)
    inbox: asyncio.Queue = asyncio.Queue(maxsize=config.queue.capacity)
    outbox: asyncio.Queue = asyncio.Queue(maxsize=config.queue.capacity)
    aggregate_op = build_aggregate(config.aggregate, config.strategy, None, evaluation, tuple_size)
    emitted: List[EmittedInstance] = []
    if observer:
        observer.notify(RunEvent.pipeline_start, {"aggregate": config.aggregate.label, "strategy": config.strategy.value, "tuples": len(feed), "mode": "concurrent"})

    async def produce(partition: int):
        for t in feed.partition(partition):
            union_stats.tuples_in += 1
            union_stats.queue_lengths.append(inbox.qsize())
            try:
                inbox.put_nowait(t)
            except asyncio.QueueFull:
                union_stats.tuples_dropped += 1
            await asyncio.sleep(0)
        await inbox.put(_END)

    async def route():
        remaining = len(feed.partitions)
        while remaining:
            t = await inbox.get()
            if t is _END:
                remaining -= 1
                continue
            union_stats.tuples_out += 1
            await outbox.put(t)
        await outbox.put(_END)

    async def aggregate():
        while True:
            t = await outbox.get()
            if t is _END:
                break
            emitted.extend(aggregate_op.on_tuple(t))
        emitted.extend(aggregate_op.flush())

    await asyncio.gather(*(produce(p) for p in range(len(feed.partitions))), route(), aggregate())
    stats = {"union": union_stats, "aggregate": aggregate_op.stats}
    if observer:
        observer.notify(RunEvent.pipeline_end, {"aggregate": config.aggregate.label, "emitted": len(emitted)})
    return PipelineResult(config=config, emitted=emitted, stats=stats)
