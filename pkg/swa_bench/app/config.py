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

import os
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_SEED = 7
DEFAULT_TUPLE_SIZE = 135
DEFAULT_PAGES = 10
DEFAULT_PAGE_SIZE = 1024
DEFAULT_SWEEP_INTERVAL_MS = 100
DEFAULT_UNION_SERVICE_MS = 0.005364
DEFAULT_PARTITIONS = 2
DEFAULT_SERVICE_COUNT = 10000

MAX_CTMC_STATES = 100000
EM_TOL = 1e-7
EM_MAX_ITER = 2000
DES_BATCHES = 20

PROJECT_LOG_LEVEL = os.getenv("PROJECT_LOG_LEVEL", "")
ROOT_LOG_LEVEL = os.getenv("ROOT_LOG_LEVEL", "")


class AppConfig(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", env_prefix="SWA_BENCH_", extra="ignore")

    seed: int = Field(DEFAULT_SEED, description="Seed used when a command is run without --seed.")
    tuple_size: int = Field(DEFAULT_TUPLE_SIZE, description="Bytes per invocation tuple, used for storage accounting.")
    sweep_interval_ms: int = Field(DEFAULT_SWEEP_INTERVAL_MS, description="Event-time period of the window timeout sweep.")
    union_service_ms: float = Field(DEFAULT_UNION_SERVICE_MS, description="Per-tuple processing time of the UNION consumer (ms).")
    max_states: int = Field(MAX_CTMC_STATES, description="Largest CTMC the exact solvers will build.")
    em_tol: float = Field(EM_TOL, description="Relative log-likelihood change that stops EM fitting.")
    em_max_iter: int = Field(EM_MAX_ITER, description="Upper bound on EM iterations.")
    des_batches: int = Field(DES_BATCHES, description="Number of batch means in queue simulation.")
    output_dir: Optional[str] = Field(None, description="Default output directory when --out is not given.")


def get_app_config() -> AppConfig:
    return AppConfig()
