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

from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pandas import DataFrame
from pydantic import BaseModel, Field, model_validator

from swa_bench.app.config import (
    DEFAULT_PAGE_SIZE,
    DEFAULT_PAGES,
    DEFAULT_TUPLE_SIZE,
    DEFAULT_UNION_SERVICE_MS,
)
from swa_bench.common.errors import ConfigError

Key = Tuple[Union[str, int], ...]


class AssociationStrategy(str, Enum):
    head = "head"
    head_ts = "head_ts"
    head_ip = "head_ip"
    head_ts_ip = "head_ts_ip"

    @property
    def arity(self) -> int:
        return {"head": 1, "head_ts": 2, "head_ip": 2, "head_ts_ip": 3}[self.value]


class CloseReason(str, Enum):
    full = "full"
    timeout = "timeout"


class WindowParams(BaseModel):
    capacity: int = Field(..., ge=1, description="Window capacity n (tuples).")
    timeout: int = Field(..., ge=1, description="Window timeout t (seconds).")
    alpha: Optional[float] = Field(None, gt=0, lt=1, description="Target precise completeness the capacity was derived from.")
    beta: Optional[float] = Field(None, gt=0, lt=1, description="Target timeout rate the timeout was derived from.")

    @property
    def timeout_ms(self) -> int:
        return self.timeout * 1000


class BoundedQueueSpec(BaseModel):
    pages: int = Field(DEFAULT_PAGES, ge=1)
    page_size: int = Field(DEFAULT_PAGE_SIZE, ge=1, description="Bytes per page.")
    tuple_size: int = Field(DEFAULT_TUPLE_SIZE, ge=1, description="Bytes per tuple.")
    capacity_override: Optional[int] = Field(None, ge=1, alias="capacity", description="Replaces the page-derived capacity.")
    service_time_ms: float = Field(DEFAULT_UNION_SERVICE_MS, ge=0, description="Per-tuple processing time of the consumer.")

    model_config = {"populate_by_name": True}

    @property
    def derived_capacity(self) -> int:
        return self.pages * (self.page_size // self.tuple_size)

    @property
    def capacity(self) -> int:
        if self.capacity_override is not None:
            return self.capacity_override
        return self.derived_capacity


class AggregateConfig(BaseModel):
    kind: Literal["swa", "sliding"] = "swa"
    capacity: Optional[int] = Field(None, ge=1)
    timeout_s: Optional[int] = Field(None, ge=1)
    window: Optional[int] = Field(None, ge=1)
    step: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_kind(self) -> "AggregateConfig":
        if self.kind == "swa" and (self.capacity is None or self.timeout_s is None):
            raise ConfigError("SWA aggregate needs 'capacity' and 'timeout_s'")
        if self.kind == "sliding" and self.window is None:
            raise ConfigError("Sliding aggregate needs 'window'")
        return self

    def window_params(self) -> WindowParams:
        return WindowParams(capacity=self.capacity, timeout=self.timeout_s)

    @property
    def label(self) -> str:
        if self.kind == "swa":
            return f"SWA {self.capacity}/{self.capacity}/{self.timeout_s}"
        return f"Sliding {self.window}/{self.step or self.window}"


class PipelineConfig(BaseModel):
    queue: BoundedQueueSpec = Field(default_factory=BoundedQueueSpec)
    aggregate: AggregateConfig = Field(default_factory=lambda: AggregateConfig(kind="swa", capacity=13, timeout_s=22))
    strategy: AssociationStrategy = AssociationStrategy.head_ts_ip


class EmittedInstance(BaseModel):
    key: Key
    k: int = Field(..., ge=1, description="Number of tuples gathered.")
    members: Optional[List[int]] = Field(None, description="Sequence ids of member tuples (evaluation mode).")
    count: int
    min_response_ms: Optional[int] = Field(None, description="Not persisted in the emitted CSV.")
    max_response_ms: Optional[int] = None
    avg_response_ms: float
    span_ms: int = Field(..., description="Last minus first member timestamp.")
    opened_at: Optional[int] = None
    closed_at: int
    close_reason: CloseReason

    class Column:
        key = "key"
        k = "k"
        close_reason = "close_reason"
        closed_at = "closed_at_ms"
        avg_response = "avg_response_ms"
        span = "span_ms"
        members = "members"

    @property
    def rendered_key(self) -> str:
        return render_key(self.key)

    @classmethod
    def to_dataframe(cls, emitted: List["EmittedInstance"], with_members: bool = False) -> DataFrame:
        columns = [cls.Column.key, cls.Column.k, cls.Column.close_reason, cls.Column.closed_at, cls.Column.avg_response, cls.Column.span]
        if with_members:
            columns.append(cls.Column.members)
        rows = []
        for e in emitted:
            row = {
                cls.Column.key: e.rendered_key,
                cls.Column.k: e.k,
                cls.Column.close_reason: e.close_reason.value,
                cls.Column.closed_at: e.closed_at,
                cls.Column.avg_response: round(e.avg_response_ms, 6),
                cls.Column.span: e.span_ms,
            }
            if with_members:
                row[cls.Column.members] = " ".join(str(m) for m in (e.members or []))
            rows.append(row)
        if not rows:
            return DataFrame({c: pd.Series(dtype="str") for c in columns})
        return DataFrame(rows, columns=columns)

    @classmethod
    def from_dataframe(cls, df: DataFrame) -> List["EmittedInstance"]:
        missing = [c for c in [cls.Column.key, cls.Column.k, cls.Column.close_reason, cls.Column.closed_at] if c not in df.columns]
        if missing:
            raise ConfigError(f"Emitted file lacks column(s): {','.join(missing)}")
        has_members = cls.Column.members in df.columns
        emitted = []
        for row in df.to_dict(orient="records"):
            members = None
            if has_members:
                text = str(row[cls.Column.members]).strip()
                members = [int(m) for m in text.split()] if text else []
            k = int(row[cls.Column.k])
            emitted.append(
                cls(
                    key=tuple(str(row[cls.Column.key]).split("|")),
                    k=k,
                    members=members,
                    count=k,
                    avg_response_ms=float(row.get(cls.Column.avg_response, 0.0)),
                    span_ms=int(row.get(cls.Column.span, 0)),
                    closed_at=int(row[cls.Column.closed_at]),
                    close_reason=CloseReason(row[cls.Column.close_reason]),
                )
            )
        return emitted


def render_key(key: Key) -> str:
    return "|".join(str(x) for x in key)


class StatsSummary(BaseModel):
    tuples_in: int
    tuples_out: int
    tuples_dropped: int
    resident: int
    instances_out: int
    avg_queue_length: float
    peak_queue_length: int
    avg_residence_ms: float
    avg_windows: float
    peak_windows: int
    avg_tuples: float
    peak_tuples: int
    avg_storage_bytes: float
    peak_storage_bytes: int


class OperatorStats(BaseModel):
    """Counters and samples collected by one operator over one run."""

    name: str
    tuples_in: int = 0
    tuples_out: int = 0
    tuples_dropped: int = 0
    resident: int = 0
    instances_out: int = 0
    tuple_size: int = DEFAULT_TUPLE_SIZE
    residence_ms: List[float] = Field(default_factory=list, exclude=True)
    queue_lengths: List[int] = Field(default_factory=list, exclude=True)
    windows_resident: List[int] = Field(default_factory=list, exclude=True)
    tuples_resident: List[int] = Field(default_factory=list, exclude=True)
    storage_bytes: List[int] = Field(default_factory=list, exclude=True)

    def check_conservation(self) -> bool:
        return self.tuples_in == self.tuples_out + self.tuples_dropped + self.resident

    def summary(self) -> StatsSummary:
        def _avg(values) -> float:
            return float(np.mean(values)) if len(values) else 0.0

        def _peak(values) -> int:
            return int(max(values)) if len(values) else 0

        return StatsSummary(
            tuples_in=self.tuples_in,
            tuples_out=self.tuples_out,
            tuples_dropped=self.tuples_dropped,
            resident=self.resident,
            instances_out=self.instances_out,
            avg_queue_length=_avg(self.queue_lengths),
            peak_queue_length=_peak(self.queue_lengths),
            avg_residence_ms=_avg(self.residence_ms),
            avg_windows=_avg(self.windows_resident),
            peak_windows=_peak(self.windows_resident),
            avg_tuples=_avg(self.tuples_resident),
            peak_tuples=_peak(self.tuples_resident),
            avg_storage_bytes=_avg(self.storage_bytes),
            peak_storage_bytes=_peak(self.storage_bytes),
        )


class PipelineResult(BaseModel):
    config: PipelineConfig
    emitted: List[EmittedInstance]
    stats: Dict[str, OperatorStats]

    @property
    def label(self) -> str:
        return self.config.aggregate.label
