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

"""Run events of the benchmark: command lifecycle and pipeline progress.

Subscribers are plain callables; a failing subscriber is logged and skipped
so that it never aborts a run.
"""

import json
import logging
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)


class RunEvent(str, Enum):
    command_start = "command:start"
    command_end = "command:end"
    pipeline_start = "pipeline:start"
    operator_finished = "operator:finished"
    pipeline_end = "pipeline:end"


# per-operator summaries are bulky; logged only at debug level
_DEBUG_EVENTS = frozenset({RunEvent.operator_finished.value})


class EventData(BaseModel):
    event: str
    timestamp: Optional[datetime] = None
    data: Dict[str, Any] = Field(default_factory=dict)


Callback = Callable[[EventData], None]


class Observer:
    def __init__(self):
        self.callbacks: List[Tuple[Callback, Optional[FrozenSet[str]]]] = []

    def register(self, callback: Callback, events: Optional[Iterable[str]] = None):
        """Subscribe ``callback`` to ``events`` (all events when None)."""
        selected = None if events is None else frozenset(RunEvent(e).value for e in events)
        self.callbacks.append((callback, selected))

    def notify(self, event: str, data: Dict[str, Any]):
        name = RunEvent(event).value
        event_data = EventData(event=name, data=data, timestamp=datetime.now(timezone.utc))
        for callback, selected in self.callbacks:
            if selected is not None and name not in selected:
                continue
            try:
                callback(event_data)
            except Exception as e:
                logger.warning(f"Callback {getattr(callback, '__name__', callback)} failed on event {name}: {e}")


def custom_serializer(obj):
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (datetime, date)):
        return obj.isoformat()
    if isinstance(obj, Path):
        return obj.as_posix()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Type {type(obj)} not serializable")


def gen_json_logging_callback(logger: logging.Logger) -> Callback:
    def json_logging(event_data: EventData):
        level = logging.DEBUG if event_data.event in _DEBUG_EVENTS else logging.INFO
        if logger.isEnabledFor(level):
            logger.log(level, json.dumps({"event": event_data.event, **event_data.data}, default=custom_serializer))

    return json_logging


DEFAULT_OBSERVER = Observer()
DEFAULT_OBSERVER.register(gen_json_logging_callback(logger))
