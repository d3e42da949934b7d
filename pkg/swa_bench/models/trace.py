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

from typing import List, Literal, Optional

import pandas as pd
from pandas import DataFrame
from pydantic import BaseModel, ConfigDict, Field, model_validator

from swa_bench import presets
from swa_bench.app.config import DEFAULT_PARTITIONS, DEFAULT_SERVICE_COUNT
from swa_bench.common.errors import ConfigError
from swa_bench.models.distribution import Distribution


class ServiceDef(BaseModel):
    service_id: str = Field(..., description="Identifier of the composite service (its head sub-service).")
    head_id: str = Field(..., description="Head sub-service; equals service_id for a composite service.")
    degree: int = Field(..., ge=1, description="Number of sub-services, head included.")
    sub_services: List[str] = Field(..., description="Sub-service ids, head first.")
    partition_of_subservice: List[int] = Field(..., description="Monitoring stream of each sub-service.")

    @model_validator(mode="after")
    def check_degree(self) -> "ServiceDef":
        if len(self.sub_services) != self.degree or len(self.partition_of_subservice) != self.degree:
            raise ConfigError(f"Service {self.service_id}: degree {self.degree} does not match its sub-service list")
        return self


class ServiceCatalog(BaseModel):
    services: List[ServiceDef] = Field(..., min_length=1)
    partitions: int = Field(DEFAULT_PARTITIONS, ge=1, description="Number of monitoring streams.")
    shared_atomics: bool = Field(False, description="Allow an atomic sub-service to appear under more than one head.")

    @model_validator(mode="after")
    def check_ownership(self) -> "ServiceCatalog":
        if not self.shared_atomics:
            seen = {}
            for s in self.services:
                for sub in s.sub_services:
                    if sub in seen and seen[sub] != s.service_id:
                        raise ConfigError(f"Sub-service {sub} belongs to both {seen[sub]} and {s.service_id}")
                    seen[sub] = s.service_id
        return self


class TraceConfig(BaseModel):
    instance_count: int = Field(13997, ge=1, description="Number of service instances to synthesize.")
    degree_dist: Distribution = Field(default_factory=lambda: presets.DEGREE_ERLANG, description="Service degree distribution.")
    arrival_dist: Distribution = Field(default_factory=lambda: presets.instance_arrival(), description="Primary inter-arrival time (ms).")
    span_dist: Distribution = Field(default_factory=lambda: presets.SPAN_HYPER_ERLANG, description="Instance response-time span.")
    span_unit_ms: float = Field(1000.0, gt=0, description="Milliseconds per unit of span_dist.")
    user_pool: int = Field(1000, ge=1, description="Number of distinct clients.")
    repeat_factor: float = Field(1.3997, ge=1, description="Instances per unique service.")
    service_count: int = Field(DEFAULT_SERVICE_COUNT, ge=1, description="Catalog size when the catalog is built from this config.")
    partitions: int = Field(DEFAULT_PARTITIONS, ge=1)
    shared_atomics: bool = False
    placement: Literal["uniform", "front_loaded"] = Field("uniform", description="Placement of subordinate tuples inside the span.")
    seed: int = Field(1, ge=0, lt=2**64)


class InvocationTuple(BaseModel):
    """One monitored invocation as the operators see it."""

    model_config = ConfigDict(frozen=True)

    seq: int = Field(..., description="Position in the trace file.")
    timestamp: int = Field(..., ge=0, description="Milliseconds since trace start.")
    user_id: str
    service_id: str
    head_id: str
    instance_ts: int = Field(..., ge=0, description="Head invocation time, whole seconds.")
    response_time: int = Field(..., ge=0, description="Milliseconds.")


class TraceRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    invocation: InvocationTuple
    truth_instance: str
    partition: int = Field(..., ge=0)

    class Column:
        timestamp = "timestamp_ms"
        user_id = "user_id"
        service_id = "service_id"
        head_id = "head_id"
        instance_ts = "instance_ts_s"
        response_time = "response_ms"
        truth_instance = "truth_instance"
        partition = "partition"

        ALL = [timestamp, user_id, service_id, head_id, instance_ts, response_time, truth_instance, partition]
        INTEGER = [timestamp, instance_ts, response_time, partition]

    @classmethod
    def to_dataframe(cls, records: List["TraceRecord"]) -> DataFrame:
        if len(records) == 0:
            return DataFrame({c: pd.Series(dtype="int64" if c in cls.Column.INTEGER else "str") for c in cls.Column.ALL})
        rows = [
            {
                cls.Column.timestamp: r.invocation.timestamp,
                cls.Column.user_id: r.invocation.user_id,
                cls.Column.service_id: r.invocation.service_id,
                cls.Column.head_id: r.invocation.head_id,
                cls.Column.instance_ts: r.invocation.instance_ts,
                cls.Column.response_time: r.invocation.response_time,
                cls.Column.truth_instance: r.truth_instance,
                cls.Column.partition: r.partition,
            }
            for r in records
        ]
        return DataFrame(rows, columns=cls.Column.ALL)


class Trace(BaseModel):
    partitions: int = Field(DEFAULT_PARTITIONS, ge=0)
    records: List[TraceRecord] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def partition_feed(self, partition: int) -> List[InvocationTuple]:
        return [r.invocation for r in self.records if r.partition == partition]

    def to_dataframe(self) -> DataFrame:
        return TraceRecord.to_dataframe(self.records)


class InstanceStats(BaseModel):
    truth_instance: str
    head_id: str
    degree: int
    first_ms: int
    last_ms: int
    span_ms: int
    service_span_ms: Optional[int] = Field(None, description="Full response-time span of the instance as generated.")
