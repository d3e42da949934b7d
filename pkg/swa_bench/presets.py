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

"""Fitted workload models measured on the crawled page-request trace.

Matrices are stored exactly as they were published. Some of them break PH
generator constraints, so callers pick a ``validate_generator`` policy.
Times are in milliseconds except the response-time span, which is in seconds.
"""

from swa_bench.distributions import scaled, validate_generator
from swa_bench.models.distribution import (
    ErlangBranch,
    ErlangDist,
    HyperErlangDist,
    MomentDist,
    PhaseTypeDist,
)
from swa_bench.models.queueing import QueueModel

# Composite-service degree (number of sub-services, head included).
DEGREE_ERLANG = ErlangDist(rate=8.7963, k=100)

# Instance response-time span in seconds.
SPAN_HYPER_ERLANG = HyperErlangDist(
    branches=[
        ErlangBranch(alpha=0.0247, rate=0.0404, k=1),
        ErlangBranch(alpha=0.9753, rate=0.3666, k=4),
    ]
)

# Primary (instance-level) inter-arrival time, ms.
INSTANCE_ARRIVAL_PH = PhaseTypeDist(alpha=[1.0, 0.0], T=[[-0.1452, -0.0329], [0.0, -0.1191]])
INSTANCE_ARRIVAL_MEAN_MS = 9.7780
INSTANCE_ARRIVAL_RECEIVING_MEAN_MS = 11.8092

# Invocation-level inter-arrival time at the UNION input, ms.
INVOCATION_ARRIVAL_PH = PhaseTypeDist(alpha=[1.0, 0.0], T=[[-1.1215, 0.0001], [0.0, -0.0021]])
INVOCATION_ARRIVAL_MEAN_MS = 0.9457
INVOCATION_ARRIVAL_RECEIVING_MEAN_MS = 1.1049

# UNION per-tuple service time, ms.
UNION_SERVICE_PH = PhaseTypeDist(
    alpha=[1.0, 0.0, 0.0, 0.0],
    T=[
        [-378.3987, 378.3987, 0.0, 0.0],
        [0.0, -378.3987, 378.3987, 0.0],
        [0.0, 0.0, -12669.0969, -0.0000346],
        [0.0, 0.0, 0.0, -0.05120],
    ],
)
UNION_SERVICE_MEAN_MS = 0.005364

# Measured UNION queue indicators at the sending end.
UNION_QUEUE_W_MS = 0.005388
UNION_QUEUE_PLOSS = 2.7e-5

# Mean of the 53-stage batch service (K=20) on the aggregate, ms.
BATCH_SERVICE_MEAN_MS = 0.6121
BATCH_SERVICE_PHASES = 53

# Mean instance response time used for the aggregate's server occupancy, ms.
AGGREGATE_SERVICE_MEAN_MS = 20713.7

UNION_BUFFER = 60
BATCH_BUFFER = 60
BATCH_SIZE = 20


def instance_arrival(policy: str = "reflect", receiving_end: bool = False) -> PhaseTypeDist:
    """Instance-level arrival PH made valid and calibrated to the measured mean."""
    dist, _ = validate_generator(INSTANCE_ARRIVAL_PH, policy)
    target = INSTANCE_ARRIVAL_RECEIVING_MEAN_MS if receiving_end else INSTANCE_ARRIVAL_MEAN_MS
    return scaled(dist, target)


def invocation_arrival(policy: str = "repair", receiving_end: bool = False) -> PhaseTypeDist:
    dist, _ = validate_generator(INVOCATION_ARRIVAL_PH, policy)
    if receiving_end:
        return scaled(dist, INVOCATION_ARRIVAL_RECEIVING_MEAN_MS)
    return dist


def union_service(policy: str = "repair") -> PhaseTypeDist:
    dist, _ = validate_generator(UNION_SERVICE_PH, policy)
    return dist


def union_queue_model(receiving_end: bool = False) -> QueueModel:
    """PH/PH/1/N model of the UNION input queue."""
    return QueueModel(arrival=invocation_arrival(receiving_end=receiving_end), service=union_service(), servers=1, buffer=UNION_BUFFER)


def batch_queue_model(batch_size: int = BATCH_SIZE, receiving_end: bool = False) -> QueueModel:
    """Aggregate batch model: groups of ``batch_size`` served by an Erlang stage chain."""
    service = ErlangDist(rate=BATCH_SERVICE_PHASES / BATCH_SERVICE_MEAN_MS, k=BATCH_SERVICE_PHASES)
    return QueueModel(
        arrival=invocation_arrival(receiving_end=receiving_end),
        service=service,
        servers=1,
        buffer=max(BATCH_BUFFER, batch_size),
        batch_min=batch_size,
        batch_max=batch_size,
    )


def aggregate_queue_model(servers: int = 10000) -> QueueModel:
    """Small-window array seen as G/G/c: one server per open window."""
    return QueueModel(
        arrival=MomentDist(mean=INSTANCE_ARRIVAL_MEAN_MS, scv=1.0),
        service=MomentDist(mean=AGGREGATE_SERVICE_MEAN_MS, scv=1.0),
        servers=servers,
    )


QUEUE_PRESETS = {
    "union": union_queue_model,
    "batch": batch_queue_model,
    "aggregate": aggregate_queue_model,
}
