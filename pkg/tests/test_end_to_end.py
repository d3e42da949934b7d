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

from swa_bench import engine, metrics, trace
from swa_bench.commands import compare_frame
from swa_bench.models.engine import AggregateConfig, PipelineConfig
from swa_bench.models.trace import TraceConfig

pytestmark = pytest.mark.slow

SWA = AggregateConfig(kind="swa", capacity=13, timeout_s=22)


def sliding(window: int) -> AggregateConfig:
    return AggregateConfig(kind="sliding", window=window, step=window)


@pytest.fixture(scope="module")
def benchmark_trace():
    cfg = TraceConfig(instance_count=10000, seed=2024)
    catalog = trace.build_catalog(cfg.service_count, cfg.degree_dist, cfg.seed, cfg.partitions)
    return trace.generate_trace(catalog, cfg)


@pytest.fixture(scope="module")
def swa_run(benchmark_trace):
    result = engine.run_pipeline(benchmark_trace, PipelineConfig(aggregate=SWA))
    return result, metrics.Analyzer(result.emitted, benchmark_trace).to_report()


def test_swa_tracks_the_oracle(benchmark_trace, swa_run):
    _, report = swa_run
    oracle = metrics.completeness_oracle(benchmark_trace, 13, 22)
    assert abs(report.completeness[0].ratio - oracle) <= 0.03


@pytest.mark.parametrize("window", [8000, 16000])
def test_swa_beats_sliding(benchmark_trace, swa_run, window):
    _, swa_report = swa_run
    result = engine.run_pipeline(benchmark_trace, PipelineConfig(aggregate=sliding(window)))
    report = metrics.Analyzer(result.emitted, benchmark_trace).to_report()
    assert swa_report.completeness[0].ratio > report.completeness[0].ratio


def test_compare_frame_layout(benchmark_trace, swa_run):
    swa_result, swa_report = swa_run
    result = engine.run_pipeline(benchmark_trace, PipelineConfig(aggregate=sliding(32000)))
    reports = {swa_result.label: swa_report, result.label: metrics.Analyzer(result.emitted, benchmark_trace).to_report()}
    df = compare_frame([swa_result, result], reports, metrics.completeness_oracle(benchmark_trace, 13, 22))

    assert list(df.columns) == ["SWA 13/13/22", "Sliding 32000/32000"]
    row = "Integration Completeness(γ=1)"
    assert df.loc[row, "SWA 13/13/22"] > df.loc[row, "Sliding 32000/32000"]
    assert df.loc["Max storage (MB)", "SWA 13/13/22"] > 0
    assert 0 <= df.loc["Oracle completeness(γ=1)", "SWA 13/13/22"] <= 100
