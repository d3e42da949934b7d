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

"""Exact steady-state solvers for PH/PH/1/N queues, with and without batch service.

Arrival PH (alpha, S) has order m and exit vector s = -S1; service PH
(beta, U) has order n and exit vector u = -U1. Pbusy and Ploss are taken at
arrival instants, weighting each state by the arrival-completion rate of its
arrival phase.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from swa_bench import distributions
from swa_bench.app.config import MAX_CTMC_STATES
from swa_bench.common.errors import CapacityError, ConfigError, NumericalError
from swa_bench.models.distribution import PhaseTypeDist
from swa_bench.models.queueing import PerfIndicators, QueueModel

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10


class _Assembler:
    def __init__(self):
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add(self, r0: int, c0: int, block: np.ndarray):
        r, c = np.nonzero(block)
        self.rows.append(r + r0)
        self.cols.append(c + c0)
        self.vals.append(block[r, c])

    def build(self, size: int) -> sparse.csr_matrix:
        if not self.rows:
            return sparse.csr_matrix((size, size))
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(size, size),
        ).tocsr()


def _ph_inputs(model: QueueModel) -> Tuple[PhaseTypeDist, PhaseTypeDist]:
    if model.servers != 1:
        raise ConfigError(f"Exact solver handles a single server, got servers={model.servers}")
    if model.buffer is None:
        raise ConfigError("Exact solver needs a finite buffer N")
    arrival = distributions.to_ph(model.arrival)
    service = distributions.to_ph(model.service)
    for dist in (arrival, service):
        distributions.validate_generator(dist, "strict")
    return arrival, service


def _check_size(size: int, max_states: int):
    if size > max_states:
        raise CapacityError(f"CTMC has {size} states, above the limit of {max_states}", hint="reduce N or the PH orders")


def stationary(Q: sparse.csr_matrix) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 by a direct sparse solve."""
    size = Q.shape[0]
    A = Q.T.tolil()
    A[size - 1, :] = np.ones(size)
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        pi = spsolve(A.tocsc(), b)
    except RuntimeError as e:
        raise NumericalError(f"Steady-state solve failed: {e}") from e
    if not np.all(np.isfinite(pi)):
        raise NumericalError("Steady-state solve produced non-finite probabilities (singular generator)")
    residual = np.abs(Q.T @ pi).max()
    if residual > RESIDUAL_TOLERANCE * max(1.0, np.abs(Q).max()):
        logger.warning(f"Steady-state residual {residual:.3e} above tolerance")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _indicators(pi, arrival_phase, exit_rates, in_system, waiting, busy, full, method: str) -> PerfIndicators:
    weights = pi * exit_rates[arrival_phase]
    lam = weights.sum()
    p_loss = float(weights[full].sum() / lam)
    p_busy = float(weights[busy].sum() / lam)
    L = float(pi @ in_system)
    Lq = float(pi @ waiting)
    accepted = lam * (1.0 - p_loss)
    return PerfIndicators(L=L, Lq=Lq, W=L / accepted, Wq=Lq / accepted, Pbusy=p_busy, Ploss=p_loss, arrival_rate=float(lam), method=method)


def solve_ph_ph_1_n(model: QueueModel, max_states: int = MAX_CTMC_STATES) -> PerfIndicators:
    """PH/PH/1/N as a level-structured CTMC: level 0 keeps the arrival phase, level l >= 1 the (arrival, service) phases."""
    arrival, service = _ph_inputs(model)
    alpha, S, s = arrival.alpha_vector(), arrival.generator(), arrival.exit_vector()
    beta, U, u = service.alpha_vector(), service.generator(), service.exit_vector()
    m, n, N = arrival.order, service.order, model.buffer
    size = m + N * m * n
    _check_size(size, max_states)

    D1 = np.outer(s, alpha)
    Im, In = np.eye(m), np.eye(n)
    local = np.kron(S, In) + np.kron(Im, U)
    up = np.kron(D1, In)
    down = np.kron(Im, np.outer(u, beta))
    to_empty = np.kron(Im, u[:, None])

    def offset(level: int) -> int:
        return 0 if level == 0 else m + (level - 1) * m * n

    q = _Assembler()
    q.add(0, 0, S)
    q.add(0, offset(1), np.kron(D1, beta[None, :]))
    for level in range(1, N + 1):
        r = offset(level)
        q.add(r, r, local + (up if level == N else 0))
        if level < N:
            q.add(r, offset(level + 1), up)
        if level == 1:
            q.add(r, 0, to_empty)
        else:
            q.add(r, offset(level - 1), down)
    pi = stationary(q.build(size))

    level = np.concatenate([np.zeros(m, dtype=int)] + [np.full(m * n, lv) for lv in range(1, N + 1)])
    phase = np.concatenate([np.arange(m)] + [np.repeat(np.arange(m), n)] * N)
    return _indicators(
        pi,
        phase,
        s,
        in_system=level.astype(float),
        waiting=np.maximum(level - 1, 0).astype(float),
        busy=level >= 1,
        full=level == N,
        method="ctmc",
    )


def solve_batch_ph_ph_1_n(model: QueueModel, max_states: int = MAX_CTMC_STATES) -> PerfIndicators:
    """Batch service [a, b]: an idle server starts once a tuples wait and takes min(b, waiting) of them.

    States are idle(w, i) for w < a and busy(w, size, i, j) with w <= N - size.
    W follows from Little's law over tuples in the waiting room plus the batch
    in service, so it is the mean wait of a batch member plus the batch service time.
    """
    arrival, service = _ph_inputs(model)
    alpha, S, s = arrival.alpha_vector(), arrival.generator(), arrival.exit_vector()
    beta, U, u = service.alpha_vector(), service.generator(), service.exit_vector()
    m, n, N = arrival.order, service.order, model.buffer
    a, b = model.batch_min, model.batch_max

    idle_index = {w: w * m for w in range(a)}
    busy_index = {}
    size = a * m
    for batch in range(a, b + 1):
        for w in range(0, N - batch + 1):
            busy_index[(w, batch)] = size
            size += m * n
    _check_size(size, max_states)

    D1 = np.outer(s, alpha)
    Im, In = np.eye(m), np.eye(n)
    local = np.kron(S, In) + np.kron(Im, U)
    up = np.kron(D1, In)
    restart = np.kron(Im, np.outer(u, beta))
    to_idle = np.kron(Im, u[:, None])

    q = _Assembler()
    for w, r in idle_index.items():
        q.add(r, r, S)
        if w + 1 < a:
            q.add(r, idle_index[w + 1], D1)
        else:
            batch = min(b, w + 1)
            q.add(r, busy_index[(w + 1 - batch, batch)], np.kron(D1, beta[None, :]))
    for (w, batch), r in busy_index.items():
        if w < N - batch:
            q.add(r, r, local)
            q.add(r, busy_index[(w + 1, batch)], up)
        else:
            q.add(r, r, local + up)
        if w >= a:
            nxt = min(b, w)
            q.add(r, busy_index[(w - nxt, nxt)], restart)
        else:
            q.add(r, idle_index[w], to_idle)
    pi = stationary(q.build(size))

    phase = np.zeros(size, dtype=int)
    in_system = np.zeros(size)
    waiting = np.zeros(size)
    busy = np.zeros(size, dtype=bool)
    full = np.zeros(size, dtype=bool)
    for w, r in idle_index.items():
        phase[r : r + m] = np.arange(m)
        in_system[r : r + m] = w
        waiting[r : r + m] = w
    for (w, batch), r in busy_index.items():
        sl = slice(r, r + m * n)
        phase[sl] = np.repeat(np.arange(m), n)
        in_system[sl] = w + batch
        waiting[sl] = w
        busy[sl] = True
        full[sl] = w == N - batch
    return _indicators(pi, phase, s, in_system, waiting, busy, full, method="ctmc-batch")
