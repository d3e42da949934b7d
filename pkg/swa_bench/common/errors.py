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

from typing import List, Optional, Tuple


class SwaBenchError(Exception):
    exit_code = 1


class ConfigError(SwaBenchError):
    exit_code = 2


class TraceParseError(ConfigError):

    def __init__(self, message: str, row: int):
        self.message = message
        self.row = row
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        return f"Trace parse error at row {self.row}: {self.message}"


class DistributionError(SwaBenchError):
    exit_code = 2


class GeneratorValidationError(DistributionError):

    def __init__(self, violations: List[Tuple[Tuple[int, int], float, str]]):
        self.violations = violations
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        entries = ", ".join(f"({r},{c})={v:g} [{rule}]" for (r, c), v, rule in self.violations)
        return f"Invalid PH generator: {entries}"


class NumericalError(SwaBenchError):
    exit_code = 3

    def __init__(self, message: str, hint: Optional[str] = None):
        self.message = message
        self.hint = hint
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        if self.hint:
            return f"{self.message} (hint: {self.hint})"
        return self.message


class CapacityError(NumericalError):
    pass


class InstabilityError(NumericalError):
    pass


class NoSolutionError(SwaBenchError):
    exit_code = 3
