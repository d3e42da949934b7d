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

from typing import Dict, List

from pydantic import BaseModel, Field


class CompletenessRow(BaseModel):
    gamma: float = Field(..., gt=0, le=1)
    integrated: int = Field(..., description="Truth instances whose best window has K/N >= gamma.")
    total: int
    ratio: float


class EvaluationReport(BaseModel):
    completeness: List[CompletenessRow]
    capture_rate: float = Field(..., description="Fraction of invocation tuples inside some emitted instance.")
    captured_tuples: int
    total_tuples: int
    instance_capture_rate: float = Field(..., description="Fraction of truth instances with at least one captured tuple.")
    recall: float
    recalled_instances: int
    correct_rate: float
    correct_instances: int
    emitted_instances: int
    truth_instances: int

    def completeness_at(self, gamma: float) -> float:
        for row in self.completeness:
            if abs(row.gamma - gamma) < 1e-12:
                return row.ratio
        raise KeyError(gamma)

    def to_table_rows(self) -> Dict[str, float]:
        rows = {}
        for row in self.completeness:
            rows[f"Integration Completeness(γ={row.gamma:g})"] = row.ratio
        rows["Integration Completeness(0<γ≤1)"] = self.instance_capture_rate
        rows["Invocation capture rate"] = self.capture_rate
        rows["Recall"] = self.recall
        rows["Correct rate"] = self.correct_rate
        return rows
