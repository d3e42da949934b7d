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

from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from swa_bench.common.errors import DistributionError

WEIGHT_TOLERANCE = 1e-12


class ErlangDist(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    type: Literal["erlang"] = "erlang"
    rate: float = Field(..., alias="lambda", gt=0, description="Rate of each phase, per unit of the variable.")
    k: int = Field(..., ge=1, description="Number of phases.")


class ErlangBranch(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    alpha: float = Field(..., ge=0, le=1, description="Branch weight.")
    rate: float = Field(..., alias="lambda", gt=0, description="Rate of each phase of the branch.")
    k: int = Field(..., ge=1, description="Number of phases of the branch.")


class HyperErlangDist(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    type: Literal["hyper_erlang"] = "hyper_erlang"
    branches: List[ErlangBranch] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_weights(self) -> "HyperErlangDist":
        total = sum(b.alpha for b in self.branches)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise DistributionError(f"Hyper-Erlang branch weights sum to {total:.15g}, expected 1")
        return self


class PhaseTypeDist(BaseModel):
    """Time to absorption of a finite CTMC started in ``alpha`` with transient generator ``T``.

    Only the shape is checked on construction. Sign and row-sum constraints are
    checked by ``distributions.validate_generator`` so that published matrices
    which break them can still be loaded and repaired explicitly.
    """

    model_config = ConfigDict(frozen=True)

    type: Literal["ph"] = "ph"
    alpha: List[float] = Field(..., min_length=1, description="Initial probability vector.")
    T: List[List[float]] = Field(..., min_length=1, description="Transient generator block.")

    @model_validator(mode="after")
    def check_shape(self) -> "PhaseTypeDist":
        n = len(self.alpha)
        if len(self.T) != n or any(len(row) != n for row in self.T):
            raise DistributionError(f"PH generator must be {n}x{n} to match alpha of length {n}")
        return self

    @property
    def order(self) -> int:
        return len(self.alpha)

    def alpha_vector(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    def generator(self) -> np.ndarray:
        return np.asarray(self.T, dtype=float)

    def exit_vector(self) -> np.ndarray:
        return -self.generator().sum(axis=1)


class DeterministicDist(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: Literal["deterministic"] = "deterministic"
    value: float = Field(..., ge=0)


class MomentDist(BaseModel):
    """Two-moment description (mean and squared coefficient of variation)."""

    model_config = ConfigDict(frozen=True)

    type: Literal["moments"] = "moments"
    mean: float = Field(..., gt=0)
    scv: float = Field(..., ge=0)


Distribution = Annotated[
    Union[ErlangDist, HyperErlangDist, PhaseTypeDist, DeterministicDist, MomentDist],
    Field(discriminator="type"),
]
DistributionAdapter = TypeAdapter(Distribution)


class EmpiricalSample(BaseModel):
    values: List[float] = Field(..., min_length=1)
    unit: str = Field("", description="Unit label of the values.")

    @model_validator(mode="after")
    def check_values(self) -> "EmpiricalSample":
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DistributionError("Sample values must be finite and nonnegative")
        return self

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class RepairLogEntry(BaseModel):
    position: Tuple[int, int] = Field(..., description="1-based (row, col); row 0 addresses the initial vector.")
    old: float
    new: float
    action: str


class FitResult(BaseModel):
    dist: HyperErlangDist
    log_likelihood: float
    history: List[float] = Field(default_factory=list, description="Log-likelihood per iteration.")
    iterations: int
    converged: bool
    degenerate: bool = Field(False, description="True when the sample was constant and a near-point-mass was fitted.")
    message: Optional[str] = None
