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

import logging

import numpy as np

from swa_bench import distributions
from swa_bench.common.errors import ConfigError, NoSolutionError
from swa_bench.models.distribution import Distribution
from swa_bench.models.engine import WindowParams

logger = logging.getLogger(__name__)

CDF_TOLERANCE = 1e-12
DEFAULT_MAX_DEGREE = 200
DEFAULT_MAX_TIMEOUT_S = 3600


def _smallest_covering(dist: Distribution, target: float, upper: int) -> int:
    grid = np.arange(1, upper + 1)
    values = np.asarray(distributions.cdf(dist, grid))
    hits = np.flatnonzero(values >= target - CDF_TOLERANCE)
    if len(hits) == 0:
        raise NoSolutionError(f"CDF({upper}) = {values[-1]:.6f} never reaches {target:.6f} within [1, {upper}]")
    return int(grid[hits[0]])


def estimate_capacity(degree_cdf: Distribution, alpha: float, max_degree: int = DEFAULT_MAX_DEGREE) -> int:
    """Smallest window capacity n in [1, max_degree] with F_degree(n) >= alpha."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    n = _smallest_covering(degree_cdf, alpha, max_degree)
    logger.debug(f"Capacity {n} covers alpha={alpha}")
    return n


def estimate_timeout(span_cdf: Distribution, beta: float, max_t: int = DEFAULT_MAX_TIMEOUT_S) -> int:
    """Smallest whole-second timeout t with F_time(t) >= 1 - beta."""
    if not 0 < beta < 1:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    t = _smallest_covering(span_cdf, 1.0 - beta, max_t)
    logger.debug(f"Timeout {t}s covers beta={beta}")
    return t


def estimate_window_params(degree_cdf: Distribution, span_cdf: Distribution, alpha: float, beta: float) -> WindowParams:
    return WindowParams(capacity=estimate_capacity(degree_cdf, alpha), timeout=estimate_timeout(span_cdf, beta), alpha=alpha, beta=beta)
