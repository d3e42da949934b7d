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
import math
from typing import Literal, Sequence, Union

import numpy as np
from scipy import stats

from swa_bench import distributions
from swa_bench.app.config import MAX_CTMC_STATES
from swa_bench.common.errors import ConfigError, DistributionError, InstabilityError
from swa_bench.models.distribution import MomentDist
from swa_bench.models.queueing import BatchScan, LinearFit, PerfIndicators, QueueModel
from swa_bench.queueing.ctmc import solve_batch_ph_ph_1_n, solve_ph_ph_1_n

logger = logging.getLogger(__name__)

MB = 2**20


def erlang_c(c: int, offered: float) -> float:
    """Probability of waiting in M/M/c with offered load ``offered`` = lambda / mu."""
    blocking = 1.0
    for k in range(1, c + 1):
        blocking = offered * blocking / (k + offered * blocking)
    rho = offered / c
    return blocking / (1.0 - rho * (1.0 - blocking))


def min_servers(lam: float, mu: float) -> int:
    """Smallest c with lambda / (c mu) < 1."""
    if lam <= 0 or mu <= 0:
        raise ConfigError(f"lambda and mu must be positive, got {lam}, {mu}")
    return math.floor(lam / mu) + 1


def storage_estimate(c: int, capacity: int, tuple_size: int) -> int:
    """Bytes held by c small windows of ``capacity`` tuples."""
    return c * capacity * tuple_size


def buffer_capacity(pages: int, page_size: int, tuple_size: int) -> int:
    if pages < 1 or page_size < 1 or tuple_size < 1:
        raise ConfigError(f"pages, page_size and tuple_size must be positive, got {pages}, {page_size}, {tuple_size}")
    if tuple_size > page_size:
        logger.warning(f"Tuple of {tuple_size} bytes does not fit a {page_size}-byte page; buffer capacity is 0")
        return 0
    return pages * (page_size // tuple_size)


def solve_ggc_approx(lam: float, ca2: float, service_mean: float, cs2: float, c: Union[int, Literal["ample"]]) -> PerfIndicators:
    """Allen-Cunneen G/G/c: the M/M/c wait scaled by (ca2 + cs2) / 2."""
    if lam <= 0 or service_mean <= 0:
        raise ConfigError(f"lambda and service mean must be positive, got {lam}, {service_mean}")
    offered = lam * service_mean
    if c == "ample":
        return PerfIndicators(L=offered, Lq=0.0, W=service_mean, Wq=0.0, Pbusy=0.0, Ploss=0.0, arrival_rate=lam, method="ggc-ample")
    rho = offered / c
    if rho >= 1:
        raise InstabilityError(f"Traffic intensity rho={rho:.4f} >= 1 with c={c}", hint=f"min_servers={min_servers(lam, 1.0 / service_mean)}")
    p_wait = erlang_c(c, offered)
    wq = p_wait * service_mean / (c - offered) * (ca2 + cs2) / 2.0
    w = wq + service_mean
    return PerfIndicators(L=lam * w, Lq=lam * wq, W=w, Wq=wq, Pbusy=p_wait, Ploss=0.0, arrival_rate=lam, method="ggc")


def _ph_capable(model: QueueModel) -> bool:
    try:
        distributions.to_ph(model.arrival)
        distributions.to_ph(model.service)
    except DistributionError:
        return False
    return True


def predict(model: QueueModel, max_states: int = MAX_CTMC_STATES) -> PerfIndicators:
    """Exact CTMC for a single server with finite buffer and PH inputs, G/G/c otherwise."""
    if model.servers == 1 and model.buffer is not None and _ph_capable(model):
        if model.is_batch:
            return solve_batch_ph_ph_1_n(model, max_states)
        return solve_ph_ph_1_n(model, max_states)
    if model.is_batch:
        raise ConfigError("Batch service needs phase-type arrival and service distributions")
    if model.buffer is not None:
        logger.warning("G/G/c approximation ignores the finite buffer; Ploss is reported as 0")
    lam = 1.0 / distributions.mean(model.arrival)
    return solve_ggc_approx(
        lam,
        distributions.scv(model.arrival),
        distributions.mean(model.service),
        distributions.scv(model.service),
        model.servers,
    )


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    result = stats.linregress(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    return LinearFit(slope=float(result.slope), intercept=float(result.intercept), r2=float(result.rvalue**2))


def scan_batch(model: QueueModel, sizes: Sequence[int], buffer_factor: int = 3, max_states: int = MAX_CTMC_STATES) -> BatchScan:
    """Solve the batch model for a = b = K over ``sizes`` with N = buffer_factor * K."""
    Ls, Ws = [], []
    for k in sizes:
        variant = model.model_copy(update={"batch_min": k, "batch_max": k, "buffer": buffer_factor * k, "servers": 1})
        result = solve_batch_ph_ph_1_n(variant, max_states)
        Ls.append(result.L)
        Ws.append(result.W)
    return BatchScan(sizes=list(sizes), L=Ls, W=Ws, fit_L=fit_linear(sizes, Ls), fit_W=fit_linear(sizes, Ws))


def moments_of(mean: float, std: float) -> MomentDist:
    """Two-moment distribution from a measured mean and standard deviation."""
    return MomentDist(mean=mean, scv=(std / mean) ** 2)
