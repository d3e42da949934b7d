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

import math

import numpy as np
import pytest

from swa_bench import distributions, params, presets
from swa_bench.common.errors import ConfigError, NoSolutionError
from swa_bench.models.distribution import ErlangDist, PhaseTypeDist


def test_published_window_parameters():
    assert params.estimate_capacity(presets.DEGREE_ERLANG, 0.90) == 13
    assert params.estimate_timeout(presets.SPAN_HYPER_ERLANG, 0.05) == 22
    window = params.estimate_window_params(presets.DEGREE_ERLANG, presets.SPAN_HYPER_ERLANG, 0.90, 0.05)
    assert (window.capacity, window.timeout, window.timeout_ms) == (13, 22, 22000)


def test_exponential_timeout_boundary():
    dist = PhaseTypeDist(alpha=[1.0], T=[[-1.0]])
    assert params.estimate_timeout(dist, 0.3679) == 1
    assert params.estimate_timeout(dist, 0.3678) == 2


def test_capacity_matches_linear_scan():
    dist = ErlangDist(rate=1.3, k=6)
    for alpha in np.linspace(0.05, 0.95, 19):
        expected = next(n for n in range(1, 201) if distributions.cdf(dist, n) >= alpha)
        assert params.estimate_capacity(dist, float(alpha)) == expected


def test_capacity_is_monotone_in_alpha():
    values = [params.estimate_capacity(presets.DEGREE_ERLANG, a) for a in (0.5, 0.8, 0.9, 0.95, 0.99)]
    assert values == sorted(values)


def test_no_covering_value():
    slow = ErlangDist(rate=0.001, k=3)
    with pytest.raises(NoSolutionError) as e:
        params.estimate_capacity(slow, 0.9, max_degree=50)
    assert e.value.exit_code == 3


@pytest.mark.parametrize("value", [0.0, 1.0, -0.1, math.nan])
def test_target_out_of_range(value):
    with pytest.raises(ConfigError):
        params.estimate_capacity(presets.DEGREE_ERLANG, value)
    with pytest.raises(ConfigError):
        params.estimate_timeout(presets.SPAN_HYPER_ERLANG, value)
