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
from collections import deque
from typing import Deque, List, Optional

import numpy as np
import simpy
from scipy import stats

from swa_bench import distributions
from swa_bench.app.config import DES_BATCHES
from swa_bench.common.errors import ConfigError
from swa_bench.models.queueing import PerfIndicators, QueueModel, SimulationResult

logger = logging.getLogger(__name__)


class _Monitor:
    """Accumulates time integrals and per-arrival observations, split into batches by arrival index."""

    def __init__(self, env: simpy.Environment, arrivals: int, batches: int):
        self.env = env
        self.arrivals = arrivals
        self.batch_len = arrivals // (batches + 1)
        self.batches = batches
        self.last_t = 0.0
        self.area_L = 0.0
        self.area_Lq = 0.0
        self.n_system = 0
        self.n_waiting = 0
        self.marks: List[tuple] = []
        self.busy_hits = np.zeros(batches + 1)
        self.losses = np.zeros(batches + 1)
        self.counts = np.zeros(batches + 1)
        self.w_sum = np.zeros(batches + 1)
        self.wq_sum = np.zeros(batches + 1)
        self.done = np.zeros(batches + 1)

    def batch_of(self, index: int) -> int:
        return min(index // self.batch_len, self.batches)

    def advance(self):
        now = self.env.now
        self.area_L += self.n_system * (now - self.last_t)
        self.area_Lq += self.n_waiting * (now - self.last_t)
        self.last_t = now

    def on_arrival(self, index: int, busy: bool, lost: bool):
        boundary = index % self.batch_len == 0 and index // self.batch_len <= self.batches
        if boundary or index == self.arrivals - 1:
            self.advance()
            self.marks.append((self.env.now, self.area_L, self.area_Lq))
        b = self.batch_of(index)
        self.counts[b] += 1
        self.busy_hits[b] += busy
        self.losses[b] += lost

    def on_departure(self, index: int, arrived: float, started: float):
        b = self.batch_of(index)
        self.w_sum[b] += self.env.now - arrived
        self.wq_sum[b] += started - arrived
        self.done[b] += 1

    def batch_values(self) -> dict:
        """Per-batch indicator values, warm-up batch dropped."""
        marks = np.array(self.marks[: self.batches + 2])
        dt = np.diff(marks[:, 0])
        values = {
            "L": np.diff(marks[:, 1]) / dt,
            "Lq": np.diff(marks[:, 2]) / dt,
            "W": self.w_sum / np.maximum(self.done, 1),
            "Wq": self.wq_sum / np.maximum(self.done, 1),
            "Pbusy": self.busy_hits / np.maximum(self.counts, 1),
            "Ploss": self.losses / np.maximum(self.counts, 1),
        }
        return {k: v[1 : self.batches + 1] for k, v in values.items()}


def _batch_server(env: simpy.Environment, model: QueueModel, services: np.ndarray, monitor: _Monitor, inter: np.ndarray):
    capacity = model.buffer
    a, b = model.batch_min, model.batch_max
    waiting: Deque[tuple] = deque()
    state = {"busy": False, "wake": env.event()}

    def source():
        for i in range(len(inter)):
            yield env.timeout(inter[i])
            lost = capacity is not None and monitor.n_system >= capacity
            monitor.on_arrival(i, state["busy"], lost)
            if lost:
                continue
            monitor.advance()
            waiting.append((i, env.now))
            monitor.n_system += 1
            monitor.n_waiting += 1
            if not state["busy"] and len(waiting) >= a and not state["wake"].triggered:
                state["wake"].succeed()

    def server():
        served = 0
        while True:
            if len(waiting) < a:
                state["wake"] = env.event()
                yield state["wake"]
            size = min(b, len(waiting))
            members = [waiting.popleft() for _ in range(size)]
            monitor.advance()
            monitor.n_waiting -= size
            state["busy"] = True
            started = env.now
            yield env.timeout(services[served])
            served += 1
            monitor.advance()
            monitor.n_system -= size
            state["busy"] = False
            for index, arrived in members:
                monitor.on_departure(index, arrived, started)

    env.process(source())
    env.process(server())


def _multi_server(env: simpy.Environment, model: QueueModel, services: np.ndarray, monitor: _Monitor, inter: np.ndarray):
    ample = model.servers == "ample"
    resource: Optional[simpy.Resource] = None if ample else simpy.Resource(env, capacity=model.servers)
    capacity = model.buffer

    def customer(index: int, service: float):
        arrived = env.now
        if ample:
            yield env.timeout(service)
            started = arrived
        else:
            with resource.request() as req:
                yield req
                monitor.advance()
                monitor.n_waiting -= 1
                started = env.now
                yield env.timeout(service)
        monitor.advance()
        monitor.n_system -= 1
        monitor.on_departure(index, arrived, started)

    def source():
        for i in range(len(inter)):
            yield env.timeout(inter[i])
            busy = False if ample else resource.count >= resource.capacity
            lost = capacity is not None and monitor.n_system >= capacity
            monitor.on_arrival(i, busy, lost)
            if lost:
                continue
            monitor.advance()
            monitor.n_system += 1
            if not ample:
                monitor.n_waiting += 1
            env.process(customer(i, float(services[i])))

    env.process(source())


def des_simulate(model: QueueModel, arrivals: int, seed: int, batches: int = DES_BATCHES) -> SimulationResult:
    """Event-driven simulation with batch-means 95% confidence half-widths.

    The first of ``batches + 1`` equal arrival blocks is discarded as warm-up.
    """
    if batches < 2:
        raise ConfigError(f"Need at least 2 batches, got {batches}")
    if arrivals < 10 * (batches + 1):
        raise ConfigError(f"Need at least {10 * (batches + 1)} arrivals for {batches} batches, got {arrivals}")
    rng = np.random.default_rng(seed)
    env = simpy.Environment()
    monitor = _Monitor(env, arrivals, batches)
    inter = np.atleast_1d(distributions.sample(model.arrival, rng, arrivals))
    services = np.atleast_1d(distributions.sample(model.service, rng, arrivals))
    if model.servers == 1:
        _batch_server(env, model, services, monitor, inter)
    else:
        _multi_server(env, model, services, monitor, inter)
    env.run()

    values = monitor.batch_values()
    t_crit = stats.t.ppf(0.975, batches - 1)
    means = {k: float(np.mean(v)) for k, v in values.items()}
    half = {k: float(t_crit * np.std(v, ddof=1) / np.sqrt(batches)) for k, v in values.items()}
    indicators = PerfIndicators(**means, arrival_rate=1.0 / distributions.mean(model.arrival), method="des")
    logger.info(f"DES finished: {arrivals} arrivals, seed {seed}, L={means['L']:.6g}, W={means['W']:.6g}")
    return SimulationResult(indicators=indicators, half_width=half, arrivals=arrivals, batches=batches, seed=seed)
