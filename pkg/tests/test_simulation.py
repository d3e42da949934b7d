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

import pytest

from swa_bench import presets
from swa_bench.common.errors import ConfigError
from swa_bench.models.distribution import ErlangDist, PhaseTypeDist
from swa_bench.models.queueing import QueueModel
from swa_bench.queueing import approx, simulation

ARRIVALS = 200000


def exponential(rate: float) -> PhaseTypeDist:
    return PhaseTypeDist(alpha=[1.0], T=[[-rate]])


def assert_agrees(sim, exact, names=("L", "W")):
    for name in names:
        value = getattr(sim.indicators, name)
        target = getattr(exact, name)
        tolerance = max(0.03 * abs(target), 3 * sim.half_width[name])
        assert abs(value - target) <= tolerance, f"{name}: simulated {value} vs analytic {target} (±{tolerance})"


def test_des_matches_ctmc_single_server():
    model = QueueModel(arrival=exponential(1.0), service=ErlangDist(rate=3.0, k=2), servers=1, buffer=10)
    sim = simulation.des_simulate(model, ARRIVALS, seed=7)
    assert_agrees(sim, approx.predict(model), names=("L", "Lq", "W", "Pbusy"))
    assert sim.arrivals == ARRIVALS
    assert sim.batches == 20


def test_des_matches_ctmc_batch_service():
    # M/M^[20,20]/1/60 at half load per batch
    model = QueueModel(arrival=exponential(1.0), service=exponential(0.1), servers=1, buffer=60, a=20, b=20)
    sim = simulation.des_simulate(model, ARRIVALS, seed=7)
    assert_agrees(sim, approx.predict(model))


@pytest.mark.slow
def test_des_matches_ctmc_batch_preset():
    model = presets.QUEUE_PRESETS["batch"]()
    assert (model.batch_min, model.batch_max, model.buffer) == (20, 20, 60)
    sim = simulation.des_simulate(model, ARRIVALS, seed=7)
    assert_agrees(sim, approx.predict(model))


def test_des_losses_on_small_buffer():
    model = QueueModel(arrival=exponential(1.0), service=exponential(1.0), servers=1, buffer=3)
    sim = simulation.des_simulate(model, ARRIVALS, seed=3)
    exact = approx.predict(model)
    assert sim.indicators.Ploss == pytest.approx(exact.Ploss, abs=max(0.01, 3 * sim.half_width["Ploss"]))


def test_des_multi_server_matches_erlang_c():
    lam, mu, c = 2.0, 1.0, 3
    model = QueueModel(arrival=exponential(lam), service=exponential(mu), servers=c)
    sim = simulation.des_simulate(model, ARRIVALS, seed=11)
    exact = approx.solve_ggc_approx(lam, 1.0, 1 / mu, 1.0, c)
    assert_agrees(sim, exact)


@pytest.mark.slow
def test_des_union_queue():
    model = presets.QUEUE_PRESETS["union"]()
    sim = simulation.des_simulate(model, ARRIVALS, seed=5)
    exact = approx.predict(model)
    assert_agrees(sim, exact)
    assert sim.indicators.W == pytest.approx(presets.UNION_QUEUE_W_MS, rel=0.10)


def test_des_is_reproducible():
    model = QueueModel(arrival=exponential(1.0), service=exponential(2.0), servers=1, buffer=10)
    a = simulation.des_simulate(model, 5000, seed=1)
    b = simulation.des_simulate(model, 5000, seed=1)
    assert a == b


def test_des_needs_enough_arrivals():
    model = QueueModel(arrival=exponential(1.0), service=exponential(2.0), servers=1, buffer=10)
    with pytest.raises(ConfigError):
        simulation.des_simulate(model, 100, seed=1)
    with pytest.raises(ConfigError):
        simulation.des_simulate(model, 5000, seed=1, batches=1)
