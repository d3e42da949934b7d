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

import hashlib
import json
from pathlib import Path

import pandas as pd
import pytest

from swa_bench.main import main


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def trace_csv(tmp_path) -> Path:
    out = tmp_path / "trace"
    assert main(["gen-trace", "--instances", "300", "--seed", "7", "--out", str(out)]) == 0
    return out / "trace.csv"


def test_gen_trace_is_reproducible(tmp_path, trace_csv):
    again = tmp_path / "again"
    assert main(["gen-trace", "--instances", "300", "--seed", "7", "--out", str(again)]) == 0
    assert sha256(again / "trace.csv") == sha256(trace_csv)

    other = tmp_path / "other"
    assert main(["gen-trace", "--instances", "300", "--seed", "8", "--out", str(other)]) == 0
    assert sha256(other / "trace.csv") != sha256(trace_csv)

    manifest = json.loads((again / "gen-trace-manifest.json").read_text())
    assert manifest["command"] == "gen-trace"
    assert manifest["seed"] == 7
    assert manifest["artifacts"] == ["trace.csv"]
    assert manifest["config"]["instance_count"] == 300


def test_gen_trace_from_config(tmp_path):
    config = tmp_path / "trace.yaml"
    config.write_text("instance_count: 40\nseed: 3\nplacement: front_loaded\npartitions: 3\n")
    assert main(["gen-trace", "--config", str(config), "--shared-atomics", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "gen-trace-manifest.json").read_text())
    assert manifest["config"]["shared_atomics"] is True
    assert manifest["config"]["partitions"] == 3
    df = pd.read_csv(tmp_path / "trace.csv")
    assert df["truth_instance"].nunique() == 40


def test_estimate_params(tmp_path, capsys):
    assert main(["estimate-params", "--alpha", "0.90", "--beta", "0.05", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == '{"capacity":13,"timeout_s":22}'
    assert json.loads((tmp_path / "params.json").read_text()) == {"capacity": 13, "timeout_s": 22}
    assert (tmp_path / "estimate-params-manifest.json").exists()


def test_estimate_params_with_documents(tmp_path, capsys):
    span = tmp_path / "s.json"
    span.write_text(json.dumps({"type": "ph", "alpha": [1.0], "T": [[-1.0]]}))
    assert main(["estimate-params", "--span-dist", str(span), "--beta", "0.3679", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out) == {"capacity": 13, "timeout_s": 1}


def test_pipeline_then_evaluate(tmp_path, trace_csv, capsys):
    run = tmp_path / "run"
    assert main(["run-pipeline", "--trace", str(trace_csv), "--out", str(run)]) == 0
    emitted = pd.read_csv(run / "emitted.csv", keep_default_na=False)
    assert list(emitted.columns) == ["key", "k", "close_reason", "closed_at_ms", "avg_response_ms", "span_ms", "members"]
    stats = json.loads((run / "stats.json").read_text())
    assert stats["union"]["tuples_in"] == len(pd.read_csv(trace_csv))

    again = tmp_path / "again"
    assert main(["run-pipeline", "--trace", str(trace_csv), "--out", str(again)]) == 0
    assert sha256(again / "emitted.csv") == sha256(run / "emitted.csv")

    capsys.readouterr()
    assert main(["evaluate", "--emitted", str(run / "emitted.csv"), "--trace", str(trace_csv), "--gamma", "1,0.85,0.75", "--out", str(run)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert 0 < rows["Integration Completeness(γ=1)"] <= rows["Integration Completeness(γ=0.75)"] <= 1
    report = json.loads((run / "evaluation.json").read_text())
    assert report["details"]["truth_instances"] == 300


def test_pipeline_overrides(tmp_path, trace_csv):
    config = tmp_path / "pipeline.json"
    config.write_text(
        json.dumps(
            {
                "queue": {"pages": 10, "page_size": 1024, "tuple_size": 135},
                "aggregate": {"kind": "sliding", "window": 32000, "step": 32000},
                "strategy": "head",
            }
        )
    )
    out = tmp_path / "out"
    args = ["run-pipeline", "--trace", str(trace_csv), "--config", str(config), "--window", "500", "--queue-capacity", "60", "--out", str(out)]
    assert main(args) == 0
    manifest = json.loads((out / "run-pipeline-manifest.json").read_text())
    assert manifest["config"]["aggregate"]["window"] == 500
    assert manifest["config"]["queue"]["capacity"] == 60
    assert manifest["config"]["strategy"] == "head"
    assert set(pd.read_csv(out / "emitted.csv")["close_reason"]) <= {"full", "timeout"}


def test_fit_dist_from_trace(tmp_path, trace_csv):
    out = tmp_path / "fit"
    assert main(["fit-dist", "--trace", str(trace_csv), "--of", "span", "--branches", "2", "--max-phases", "10", "--emit-curves", "--out", str(out)]) == 0
    fitted = json.loads((out / "fitted-dist.json").read_text())
    assert fitted["type"] == "hyper_erlang"
    assert len(fitted["branches"]) == 2
    curves = pd.read_csv(out / "curves.csv")
    assert list(curves.columns) == ["x", "pdf", "cdf", "empirical_cdf"]
    assert len(curves) == 200


def test_fit_dist_from_sample_file(tmp_path):
    sample = tmp_path / "sample.txt"
    sample.write_text("\n".join(str(v) for v in [1.0, 2.0, 3.0, 2.5, 1.5] * 10) + "\n")
    assert main(["fit-dist", "--sample", str(sample), "--max-phases", "20", "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "fit-result.json").read_text())
    assert result["iterations"] == len(result["history"])
    assert result["dist"]["type"] == "hyper_erlang"


def test_predict_and_simulate(tmp_path, capsys):
    assert main(["predict", "--preset", "union", "--out", str(tmp_path)]) == 0
    block = json.loads(capsys.readouterr().out)
    assert set(block) == {"L", "Lq", "W", "Wq", "Pbusy", "Ploss"}

    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate-queue", "--preset", "union", "--arrivals", "5000", "--seed", "7", "--out", str(out)]) == 0
        runs.append(sha256(out / "simulation.json"))
    assert runs[0] == runs[1]


def test_predict_scan_batch(tmp_path, capsys):
    assert main(["predict", "--preset", "batch", "--scan-batch", "10:40:10", "--out", str(tmp_path)]) == 0
    scan = json.loads((tmp_path / "batch-scan.json").read_text())
    assert scan["sizes"] == [10, 20, 30, 40]
    assert (tmp_path / "batch-scan.md").exists()


def test_compare_writes_reports(tmp_path, trace_csv):
    assert main(["compare", "--trace", str(trace_csv), "--sliding", "1000,2000", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert list(doc["reports"]) == ["SWA 13/13/22", "Sliding 1000/1000", "Sliding 2000/2000"]
    md = (tmp_path / "compare.md").read_text()
    assert "Integration Completeness(γ=1)" in md
    assert "Max storage (MB)" in md


def test_unknown_flag_exits_with_usage():
    with pytest.raises(SystemExit) as e:
        main(["gen-trace", "--no-such-flag"])
    assert e.value.code == 1


def test_config_errors_exit_2(tmp_path):
    assert main(["estimate-params", "--alpha", "1.5", "--out", str(tmp_path)]) == 2
    assert main(["evaluate", "--emitted", str(tmp_path / "x.csv"), "--trace", str(tmp_path / "t.csv"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp_ms\n1\n")
    assert main(["run-pipeline", "--trace", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_bytes(b"timestamp_ms\n\xff\xfe\n")
    assert main(["run-pipeline", "--trace", str(bad), "--out", str(tmp_path)]) == 2


def test_numerical_errors_exit_3(tmp_path):
    model = tmp_path / "m.json"
    model.write_text(
        json.dumps(
            {
                "arrival": {"type": "moments", "mean": 1.0, "scv": 1.0},
                "service": {"type": "moments", "mean": 5.0, "scv": 1.0},
                "servers": 2,
            }
        )
    )
    assert main(["predict", "--model", str(model), "--out", str(tmp_path)]) == 3
    slow = tmp_path / "slow.json"
    slow.write_text(json.dumps({"type": "erlang", "lambda": 0.001, "k": 3}))
    assert main(["estimate-params", "--degree-dist", str(slow), "--out", str(tmp_path)]) == 3


def test_state_limit_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SWA_BENCH_MAX_STATES", "10")
    assert main(["predict", "--preset", "union", "--out", str(tmp_path)]) == 3
    monkeypatch.setenv("SWA_BENCH_OUTPUT_DIR", str(tmp_path / "env-out"))
    monkeypatch.delenv("SWA_BENCH_MAX_STATES")
    assert main(["predict", "--preset", "union"]) == 0
    assert (tmp_path / "env-out" / "prediction.json").exists()
