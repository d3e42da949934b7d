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

from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from swa_bench.common.errors import ConfigError
from swa_bench.models.distribution import Distribution


class QueueModel(BaseModel):
    """Kendall-style description A/B/c/N with optional batch service [a, b]."""

    arrival: Distribution = Field(..., description="Inter-arrival time distribution.")
    service: Distribution = Field(..., description="Service time distribution (per tuple, or per batch).")
    servers: Union[int, Literal["ample"]] = Field(1, description="Number of servers c.")
    buffer: Optional[int] = Field(None, ge=1, description="System capacity N, in service included; null for unbounded.")
    batch_min: int = Field(1, ge=1, alias="a", description="Service starts once at least a tuples wait.")
    batch_max: int = Field(1, ge=1, alias="b", description="At most b tuples are served together.")
    discipline: Literal["FCFS"] = "FCFS"

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def check_model(self) -> "QueueModel":
        if isinstance(self.servers, int) and self.servers < 1:
            raise ConfigError(f"servers must be >= 1 or 'ample', got {self.servers}")
        if self.batch_min > self.batch_max:
            raise ConfigError(f"batch bounds need a <= b, got a={self.batch_min}, b={self.batch_max}")
        if self.is_batch:
            if self.servers != 1:
                raise ConfigError("batch service needs exactly one server")
            if self.buffer is None:
                raise ConfigError("batch service needs a finite buffer")
        if self.buffer is not None and self.buffer < self.batch_max:
            raise ConfigError(f"buffer N={self.buffer} is smaller than the batch size b={self.batch_max}")
        return self

    @property
    def is_batch(self) -> bool:
        return self.batch_max > 1 or self.batch_min > 1


class PerfIndicators(BaseModel):
    L: float = Field(..., description="Mean number in system.")
    Lq: float = Field(..., description="Mean number waiting.")
    W: float = Field(..., description="Mean residence time.")
    Wq: float = Field(..., description="Mean waiting time.")
    Pbusy: float = Field(..., description="Probability an arrival finds the server busy.")
    Ploss: float = Field(..., description="Probability an arrival is rejected.")
    arrival_rate: Optional[float] = Field(None, description="Offered arrival rate lambda.")
    method: Optional[str] = None


class SimulationResult(BaseModel):
    indicators: PerfIndicators
    half_width: Dict[str, float] = Field(default_factory=dict, description="95% confidence half-width per indicator.")
    arrivals: int
    batches: int
    seed: int


class LinearFit(BaseModel):
    slope: float
    intercept: float
    r2: float


class BatchScan(BaseModel):
    sizes: List[int]
    L: List[float]
    W: List[float]
    fit_L: LinearFit
    fit_W: LinearFit
