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
from typing import Dict, List, Sequence

import pandas as pd
from pandas import DataFrame

from swa_bench.common.errors import ConfigError
from swa_bench.models.engine import EmittedInstance
from swa_bench.models.metrics import CompletenessRow, EvaluationReport
from swa_bench.models.trace import Trace
from swa_bench.trace import instance_stats

logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = (1.0, 0.85, 0.75)
GAMMA_SLACK = 1e-9


class Column:
    emission = "emission"
    seq = "seq"
    label = "truth_instance"
    rank = "rank"
    hits = "k"
    size = "size"
    degree = "n"


class Analyzer:
    """Scores emitted instances against the ground truth carried by a trace."""

    def __init__(self, emitted: List[EmittedInstance], trace: Trace) -> None:
        if any(e.members is None for e in emitted):
            raise ConfigError("Evaluation needs emitted instances with member ids (run the pipeline in evaluation mode)")
        self.emitted = emitted
        self.trace = trace
        self.truth = self._truth_frame(trace)
        self.members = self._member_frame(emitted, self.truth)
        self.mapping = self._match(self.members)

    @staticmethod
    def _truth_frame(trace: Trace) -> DataFrame:
        df = DataFrame(
            {
                Column.seq: [r.invocation.seq for r in trace.records],
                Column.label: [r.truth_instance for r in trace.records],
                "timestamp": [r.invocation.timestamp for r in trace.records],
            }
        )
        # tie rule: earliest primary arrival, then label
        first = df.groupby(Column.label, sort=False).agg(first_ts=("timestamp", "min"), first_seq=(Column.seq, "min")).reset_index()
        first = first.sort_values(["first_ts", "first_seq", Column.label]).reset_index(drop=True)
        first[Column.rank] = range(len(first))
        df = df.merge(first[[Column.label, Column.rank]], on=Column.label, how="left")
        return df

    @staticmethod
    def _member_frame(emitted: List[EmittedInstance], truth: DataFrame) -> DataFrame:
        rows = [(i, m) for i, e in enumerate(emitted) for m in e.members]
        members = DataFrame(rows, columns=[Column.emission, Column.seq]) if rows else DataFrame({Column.emission: [], Column.seq: []}, dtype="int64")
        merged = members.merge(truth[[Column.seq, Column.label, Column.rank]], on=Column.seq, how="left")
        if merged[Column.label].isna().any():
            unknown = merged.loc[merged[Column.label].isna(), Column.seq].head(5).tolist()
            raise ConfigError(f"Emitted members reference tuples missing from the trace: {unknown}")
        return merged

    @staticmethod
    def _match(members: DataFrame) -> DataFrame:
        """One row per emission: majority label, its count K and the emission size."""
        if members.empty:
            return DataFrame({Column.emission: [], Column.label: [], Column.hits: [], Column.size: []})
        counts = members.groupby([Column.emission, Column.label, Column.rank], sort=False).size().reset_index(name=Column.hits)
        counts = counts.sort_values([Column.emission, Column.hits, Column.rank], ascending=[True, False, True])
        best = counts.drop_duplicates(subset=[Column.emission], keep="first")
        sizes = members.groupby(Column.emission).size().rename(Column.size)
        return best.join(sizes, on=Column.emission)[[Column.emission, Column.label, Column.hits, Column.size]].reset_index(drop=True)

    def match_instances(self) -> Dict[int, str]:
        return dict(zip(self.mapping[Column.emission].astype(int), self.mapping[Column.label]))

    def best_k(self) -> DataFrame:
        """Per truth instance: degree N and the largest K among windows mapped to it (0 when none)."""
        degrees = self.truth.groupby(Column.label).size().rename(Column.degree)
        best = self.mapping.groupby(Column.label)[Column.hits].max()
        out = degrees.to_frame().join(best, how="left")
        out[Column.hits] = out[Column.hits].fillna(0).astype(int)
        return out

    def calc_completeness(self, gamma: float) -> CompletenessRow:
        if not 0 < gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
        best = self.best_k()
        total = len(best)
        integrated = int((best[Column.hits] >= gamma * best[Column.degree] - GAMMA_SLACK).sum())
        return CompletenessRow(gamma=gamma, integrated=integrated, total=total, ratio=integrated / total if total else 0.0)

    def calc_capture_rate(self) -> float:
        total = len(self.truth)
        return self.members[Column.seq].nunique() / total if total else 0.0

    def calc_instance_capture_rate(self) -> float:
        total = self.truth[Column.label].nunique()
        return self.members[Column.label].nunique() / total if total else 0.0

    def calc_recall(self) -> float:
        best = self.best_k()
        return float((best[Column.hits] > 0).mean()) if len(best) else 0.0

    def calc_correct_rate(self) -> float:
        if self.mapping.empty:
            return 0.0
        return float((self.mapping[Column.hits] == self.mapping[Column.size]).mean())

    def to_report(self, gammas: Sequence[float] = DEFAULT_GAMMAS) -> EvaluationReport:
        best = self.best_k()
        rows = [self.calc_completeness(g) for g in gammas]
        correct = int((self.mapping[Column.hits] == self.mapping[Column.size]).sum()) if not self.mapping.empty else 0
        report = EvaluationReport(
            completeness=rows,
            capture_rate=self.calc_capture_rate(),
            captured_tuples=int(self.members[Column.seq].nunique()),
            total_tuples=len(self.truth),
            instance_capture_rate=self.calc_instance_capture_rate(),
            recall=self.calc_recall(),
            recalled_instances=int((best[Column.hits] > 0).sum()),
            correct_rate=self.calc_correct_rate(),
            correct_instances=correct,
            emitted_instances=len(self.emitted),
            truth_instances=len(best),
        )
        logger.debug(f"Evaluation: {report.to_table_rows()}")
        return report


def match_instances(emitted: List[EmittedInstance], trace: Trace) -> Dict[int, str]:
    return Analyzer(emitted, trace).match_instances()


def completeness(emitted: List[EmittedInstance], trace: Trace, gamma: float) -> float:
    return Analyzer(emitted, trace).calc_completeness(gamma).ratio


def capture_rate(emitted: List[EmittedInstance], trace: Trace) -> float:
    return Analyzer(emitted, trace).calc_capture_rate()


def recall_and_correct_rate(emitted: List[EmittedInstance], trace: Trace):
    analyzer = Analyzer(emitted, trace)
    return analyzer.calc_recall(), analyzer.calc_correct_rate()


def evaluate(emitted: List[EmittedInstance], trace: Trace, gammas: Sequence[float] = DEFAULT_GAMMAS) -> EvaluationReport:
    return Analyzer(emitted, trace).to_report(gammas)


def completeness_oracle(trace: Trace, capacity: int, timeout_s: int) -> float:
    """Share of truth instances with degree <= capacity and observed span <= timeout."""
    stats = instance_stats(trace)
    if not stats:
        return 0.0
    ok = sum(1 for s in stats if s.degree <= capacity and s.span_ms <= timeout_s * 1000)
    return ok / len(stats)


def to_report_frame(reports: Dict[str, EvaluationReport]) -> pd.DataFrame:
    """Table of report rows (index) against run labels (columns), in percent."""
    data = {label: {k: v * 100 for k, v in r.to_table_rows().items()} for label, r in reports.items()}
    return DataFrame(data)
