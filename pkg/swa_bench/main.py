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

import argparse
import logging
import sys

from swa_bench import commands
from swa_bench.common import log
from swa_bench.common.errors import SwaBenchError
from swa_bench.models.engine import AssociationStrategy
from swa_bench.presets import QUEUE_PRESETS

logger = logging.getLogger(__name__)

STRATEGIES = [s.value for s in AssociationStrategy]


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_out(parser: argparse.ArgumentParser):
    parser.add_argument("--out", type=str, help="Output directory (default: SWA_BENCH_OUTPUT_DIR or the current directory).")


def _add_queue_model(parser: argparse.ArgumentParser):
    parser.add_argument("--model", type=str, help="Path to a queue model (JSON/YAML).")
    parser.add_argument("--preset", type=str, choices=sorted(QUEUE_PRESETS), help="Use a built-in queue model instead of --model.")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="swa-bench", description="Small-window-array stream aggregation benchmark")
    parser.add_argument("-v", "--verbose", help="Display verbose output", action="count", default=0)

    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    # gen-trace
    p = subparsers.add_parser("gen-trace", description="Synthesize a workload trace", help="see `gen-trace -h`")
    p.add_argument("--config", type=str, help="Path to a trace configuration (JSON/YAML).")
    p.add_argument("--seed", type=int, help="Seed for the catalog and the trace.")
    p.add_argument("--instances", type=int, help="Number of service instances.")
    p.add_argument("--service-count", type=int, help="Catalog size.")
    p.add_argument("--user-pool", type=int, help="Number of distinct clients.")
    p.add_argument("--repeat-factor", type=float, help="Instances per unique service.")
    p.add_argument("--partitions", type=int, help="Number of monitoring streams.")
    p.add_argument("--placement", type=str, choices=["uniform", "front_loaded"], help="Placement of subordinate tuples.")
    p.add_argument("--shared-atomics", action="store_true", help="Share atomic sub-services between neighbouring heads.")
    _add_out(p)

    # fit-dist
    p = subparsers.add_parser("fit-dist", description="Fit a Hyper-Erlang distribution by EM", help="see `fit-dist -h`")
    p.add_argument("--sample", type=str, help="Sample values: JSON/YAML document or one value per line.")
    p.add_argument("--trace", type=str, help="Trace CSV to take per-instance values from.")
    p.add_argument("--of", type=str, choices=["degree", "span"], default="degree", help="Per-instance value taken from --trace (default: degree).")
    p.add_argument("--branches", type=int, default=1, help="Number of Erlang branches (default: 1).")
    p.add_argument("--max-phases", type=int, default=100, help="Largest phase count per branch (default: 100).")
    p.add_argument("--tol", type=float, help="Relative log-likelihood tolerance.")
    p.add_argument("--max-iter", type=int, help="Maximum EM iterations.")
    p.add_argument("--emit-curves", action="store_true", help="Write x, pdf, cdf grids to curves.csv.")
    p.add_argument("--grid-points", type=int, default=200, help="Grid size for --emit-curves (default: 200).")
    _add_out(p)

    # estimate-params
    p = subparsers.add_parser("estimate-params", description="Derive window capacity and timeout", help="see `estimate-params -h`")
    p.add_argument("--alpha", type=float, default=0.90, help="Target share of instances fitting one window (default: 0.90).")
    p.add_argument("--beta", type=float, default=0.05, help="Tolerated timeout rate (default: 0.05).")
    p.add_argument("--degree-dist", type=str, help="Degree distribution document (default: built-in fit).")
    p.add_argument("--span-dist", type=str, help="Span distribution document in seconds (default: built-in fit).")
    p.add_argument("--max-degree", type=int, default=200, help="Largest capacity searched (default: 200).")
    p.add_argument("--max-timeout", type=int, default=3600, help="Largest timeout searched, seconds (default: 3600).")
    _add_out(p)

    # run-pipeline
    p = subparsers.add_parser("run-pipeline", description="Replay a trace through UNION and AGGREGATE", help="see `run-pipeline -h`")
    p.add_argument("--trace", type=str, required=True, help="Trace CSV.")
    p.add_argument("--config", type=str, help="Pipeline configuration (JSON/YAML).")
    p.add_argument("--kind", type=str, choices=["swa", "sliding"], help="Aggregate kind.")
    p.add_argument("--capacity", type=int, help="SWA window capacity.")
    p.add_argument("--timeout-s", type=int, help="SWA window timeout in seconds.")
    p.add_argument("--window", type=int, help="Sliding window size in tuples.")
    p.add_argument("--step", type=int, help="Sliding window advance step in tuples.")
    p.add_argument("--strategy", type=str, choices=STRATEGIES, help="Association strategy.")
    p.add_argument("--queue-capacity", type=int, help="Override the page-derived UNION queue capacity.")
    p.add_argument("--mode", type=str, choices=["event-time", "as-fast-as-possible"], default="event-time", help="Replay mode (default: event-time).")
    p.add_argument("--concurrent", action="store_true", help="Run operators as asyncio tasks (not reproducible).")
    p.add_argument("--no-members", action="store_true", help="Leave the members column out of emitted.csv.")
    _add_out(p)

    # evaluate
    p = subparsers.add_parser("evaluate", description="Score emitted instances against ground truth", help="see `evaluate -h`")
    p.add_argument("--emitted", type=str, required=True, help="Emitted instances CSV with members.")
    p.add_argument("--trace", type=str, required=True, help="Trace CSV the instances came from.")
    p.add_argument("--gamma", type=str, help="Comma-separated completeness thresholds (default: 1,0.85,0.75).")
    _add_out(p)

    # predict
    p = subparsers.add_parser("predict", description="Analytic queue performance indicators", help="see `predict -h`")
    _add_queue_model(p)
    p.add_argument("--scan-batch", type=str, help="Batch sizes start:stop:step; fits L and W linearly in K.")
    _add_out(p)

    # simulate-queue
    p = subparsers.add_parser("simulate-queue", description="Discrete-event simulation of a queue model", help="see `simulate-queue -h`")
    _add_queue_model(p)
    p.add_argument("--arrivals", type=int, default=1000000, help="Number of simulated arrivals (default: 1000000).")
    p.add_argument("--seed", type=int, help="Simulation seed.")
    p.add_argument("--batches", type=int, help="Number of batch means.")
    _add_out(p)

    # compare
    p = subparsers.add_parser("compare", description="SWA against sliding windows on one trace", help="see `compare -h`")
    p.add_argument("--trace", type=str, required=True, help="Trace CSV.")
    p.add_argument("--config", type=str, help="Pipeline configuration supplying queue and strategy.")
    p.add_argument("--capacity", type=int, default=13, help="SWA window capacity (default: 13).")
    p.add_argument("--timeout-s", type=int, default=22, help="SWA window timeout in seconds (default: 22).")
    p.add_argument("--sliding", type=str, help="Comma-separated sliding window sizes, step equal to size (default: 8000,16000,32000).")
    p.add_argument("--strategy", type=str, choices=STRATEGIES, help="Association strategy.")
    p.add_argument("--gamma", type=str, help="Comma-separated completeness thresholds.")
    p.add_argument("--mode", type=str, choices=["event-time", "as-fast-as-possible"], default="event-time", help="Replay mode (default: event-time).")
    _add_out(p)

    return parser


HANDLERS = {
    "gen-trace": commands.gen_trace,
    "fit-dist": commands.fit_dist,
    "estimate-params": commands.estimate_params,
    "run-pipeline": commands.run_pipeline_command,
    "evaluate": commands.evaluate,
    "predict": commands.predict_command,
    "simulate-queue": commands.simulate_queue,
    "compare": commands.compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose > 0:
        log.init(logging.DEBUG)
    else:
        log.init()

    try:
        HANDLERS[args.command](args)
    except SwaBenchError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
