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

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    command: str = Field(..., description="Subcommand that produced the artifacts.")
    tool_version: str
    seed: Optional[int] = Field(None, description="The single seed all randomness of the run flows from.")
    config: Dict[str, Any] = Field(default_factory=dict, description="Effective configuration after flag overrides.")
    inputs: List[str] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)
    wall_time_s: float = Field(..., description="Only field that differs between identical runs.")
