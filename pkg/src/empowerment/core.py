"""n-step empowerment over finite transition models.

Action sequences are open-loop: a sequence of ``n`` actions is fixed in
advance and the sensor is read after the last one. Sequences are indexed
lexicographically with the first action most significant.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .infotheory import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITER,
    ValidationError,
    as_distribution,
    blahut_arimoto,
)
from .model import TransitionModel

DEFAULT_BUDGET = 10**6


class HorizonTooLargeError(ValidationError):
    pass


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    budget: int = DEFAULT_BUDGET

    def capacity(self, channel) -> float:
        return blahut_arimoto(channel, self.epsilon, self.max_iter, validate=False).capacity_bits


DEFAULT_SOLVER = SolverParams()


@dataclass(frozen=True)
class EmpowermentMap:
    """Empowerment per state, in bits."""

    states: tuple
    values: np.ndarray
    horizon: int
    model_id: str
    method: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "horizon": self.horizon,
            "method": self.method,
            **self.extra,
            "values": [[_label(s), float(v)] for s, v in zip(self.states, self.values)],
        }

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["state", "empowerment_bits"])
            for s, v in zip(self.states, self.values):
                writer.writerow([_state_str(s), repr(float(v))])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def _label(s):
    if isinstance(s, tuple):
        return [_label(x) for x in s]
    if isinstance(s, np.integer):
        return int(s)
    return s


def _state_str(s) -> str:
    if isinstance(s, tuple):
        return ";".join(_state_str(x) for x in s)
    return str(s)


def check_horizon(model: TransitionModel, n: int, budget: int = DEFAULT_BUDGET) -> int:
    if n < 1:
        raise ValidationError("horizon n must be >= 1")
    count = model.n_actions**n
    if count > budget:
        raise HorizonTooLargeError(
            f"horizon too large: |A|^n = {model.n_actions}^{n} = {count} sequences exceeds "
            f"the enumeration budget {budget}; use impoverished mode"
        )
    return count


def action_sequences(n_actions: int, n: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(n_actions), repeat=n))


def _local_dense(model: TransitionModel, local: np.ndarray) -> np.ndarray:
    """Dense (m, A, m) transitions restricted to ``local``; edges leaving it are dropped."""
    pos = {int(s): i for i, s in enumerate(local)}
    m = local.size
    out = np.zeros((m, model.n_actions, m))
    succ = model.succ[local]
    prob = model.prob[local]
    mapped = np.vectorize(lambda s: pos.get(int(s), -1), otypes=[np.int64])(succ) if m else succ
    keep = (prob > 0) & (mapped >= 0)
    r, a, k = np.nonzero(keep)
    np.add.at(out, (r, a, mapped[r, a, k]), prob[r, a, k])
    return out


def propagate(dist: np.ndarray, local_t: np.ndarray, steps: int) -> np.ndarray:
    """Expand (k, m) state distributions through ``steps`` open-loop actions.

    Returns (k * A**steps, m); the row for prefix i and suffix j is at
    ``i * A**steps + j``.
    """
    m = local_t.shape[0]
    for _ in range(steps):
        dist = np.einsum("km,maj->kaj", dist, local_t).reshape(-1, m)
    return dist


def final_state_distributions(model: TransitionModel, state, n: int, budget: int = DEFAULT_BUDGET):
    """Distribution of the final state for every n-step sequence from ``state``.

    Returns ``(local, dist)`` where ``local`` lists the model states that can
    occur and ``dist`` has one row per sequence over those states.
    """
    check_horizon(model, n, budget)
    r = model.index_of(state)
    local = model.reachable_within(r, n)
    t = _local_dense(model, local)
    start = np.zeros((1, local.size))
    start[0, int(np.searchsorted(local, r))] = 1.0
    return local, propagate(start, t, n)


def sequence_channel(
    model: TransitionModel,
    state,
    n: int,
    budget: int = DEFAULT_BUDGET,
    *,
    compact: bool = False,
) -> np.ndarray:
    """Channel from n-step action sequences to the final sensor symbol.

    With ``compact=False`` the columns are the model's full sensor alphabet;
    with ``compact=True`` only symbols that can occur are kept, which leaves
    the capacity unchanged.
    """
    local, dist = final_state_distributions(model, state, n, budget)
    sensors = model.sensor[local]
    if compact:
        symbols, cols = np.unique(sensors, return_inverse=True)
        width = symbols.size
    else:
        cols = sensors
        width = model.n_sensors
    out = np.zeros((dist.shape[0], width))
    np.add.at(out.T, cols, dist.T)
    return out


def deterministic_empowerment(model: TransitionModel, state, n: int) -> float:
    """log2 of the number of distinct sensor symbols reachable by exactly n actions."""
    if n < 1:
        raise ValidationError("horizon n must be >= 1")
    if not model.is_deterministic:
        raise ValidationError(
            "model is stochastic; use state_empowerment (Blahut-Arimoto) instead"
        )
    frontier = np.array([model.index_of(state)], dtype=np.int64)
    nxt = model.succ[..., 0]
    for _ in range(n):
        frontier = np.unique(nxt[frontier])
    count = np.unique(model.sensor[frontier]).size
    return math.log2(count)


def state_empowerment(model: TransitionModel, state, n: int, solver: SolverParams = DEFAULT_SOLVER) -> float:
    """Capacity of the n-step sequence channel at ``state``, in bits."""
    channel = sequence_channel(model, state, n, solver.budget, compact=True)
    channel = _unique_rows(channel)
    return solver.capacity(channel)


ROW_DECIMALS = 10


def _unique_rows(channel: np.ndarray) -> np.ndarray:
    """Drop duplicate inputs (they never change capacity), keeping rows in sorted order.

    Rows are compared after rounding so that rows which are equal but were
    summed in a different order merge the same way under any relabeling.
    """
    if channel.shape[0] <= 1:
        return channel
    _, first = np.unique(np.round(channel, ROW_DECIMALS), axis=0, return_index=True)
    return channel[first]


def _prior(model: TransitionModel, prior) -> np.ndarray:
    if prior is None:
        return np.full(model.n_states, 1.0 / model.n_states)
    p = as_distribution(prior, "state prior")
    if p.size != model.n_states:
        raise ValidationError(f"prior has {p.size} entries for {model.n_states} states")
    return p


def average_state_empowerment(model, prior=None, n: int = 1, solver: SolverParams = DEFAULT_SOLVER) -> float:
    """E(R): prior-weighted mean of state empowerment."""
    p = _prior(model, prior)
    return float(sum(p[r] * state_empowerment(model, r, n, solver) for r in range(model.n_states) if p[r] > 0))


# -- contexts ----------------------------------------------------------------


@dataclass(frozen=True)
class ContextPartition:
    """Assignment of every state to a context id 0..K-1."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(x) for x in self.assignment)
        if not a:
            raise ValidationError("partition must cover at least one state")
        ids = sorted(set(a))
        if ids != list(range(len(ids))) or min(a) < 0:
            raise ValidationError("context ids must be 0..K-1 with every context non-empty")
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_blocks(cls, blocks, n_states: int) -> "ContextPartition":
        assignment = [-1] * n_states
        for k, block in enumerate(blocks):
            for r in block:
                if assignment[r] != -1:
                    raise ValidationError(f"state {r} appears in more than one context")
                assignment[r] = k
        if -1 in assignment:
            raise ValidationError("partition does not cover every state")
        return cls(tuple(assignment)).canonical()

    @classmethod
    def from_labels(cls, labels) -> "ContextPartition":
        """Partition from arbitrary hashable per-state labels, ids by first appearance."""
        remap: dict = {}
        return cls(tuple(remap.setdefault(x, len(remap)) for x in labels))

    @property
    def n_contexts(self) -> int:
        return max(self.assignment) + 1

    def blocks(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_contexts)]
        for r, k in enumerate(self.assignment):
            out[k].append(r)
        return out

    def canonical(self) -> "ContextPartition":
        """Relabel contexts in order of first appearance."""
        remap: dict[int, int] = {}
        return ContextPartition(tuple(remap.setdefault(k, len(remap)) for k in self.assignment))

    def context_prior(self, prior) -> np.ndarray:
        p = np.asarray(prior, dtype=float)
        out = np.zeros(self.n_contexts)
        np.add.at(out, np.asarray(self.assignment), p)
        return out

    def entropy(self, prior) -> float:
        pk = self.context_prior(prior)
        pk = pk[pk > 0]
        return float(max(-np.sum(pk * np.log2(pk)), 0.0))


def _check_partition(model: TransitionModel, partition: ContextPartition):
    if len(partition.assignment) != model.n_states:
        raise ValidationError(
            f"partition covers {len(partition.assignment)} states, model has {model.n_states}"
        )


class _ChannelBank:
    """Full-width sequence channels per state, shared by the context computations."""

    def __init__(self, model: TransitionModel, n: int, solver: SolverParams):
        self.model = model
        self.n = n
        self.solver = solver
        self._channels: dict[int, np.ndarray] = {}
        self._block_values: dict[frozenset, float] = {}

    def channel(self, r: int) -> np.ndarray:
        if r not in self._channels:
            self._channels[r] = sequence_channel(self.model, r, self.n, self.solver.budget)
        return self._channels[r]

    def block_empowerment(self, block, weights) -> float:
        """Capacity of the marginal channel sum_r w_r p(s|a,r) over ``block``."""
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        key = frozenset((int(r), round(float(x), 15)) for r, x in zip(block, w))
        if key not in self._block_values:
            mix = sum(x * self.channel(r) for r, x in zip(block, w))
            mix = mix[:, mix.sum(axis=0) > 0]
            self._block_values[key] = self.solver.capacity(_unique_rows(mix))
        return self._block_values[key]

    def state_value(self, r: int) -> float:
        return self.block_empowerment([r], [1.0])


def contextual_empowerment(model, partition: ContextPartition, prior=None, n: int = 1,
                           solver: SolverParams = DEFAULT_SOLVER, *, _bank=None) -> float:
    """E(K) = sum_k p(k) E(k) with E(k) the capacity of p(s | a, k)."""
    _check_partition(model, partition)
    p = _prior(model, prior)
    bank = _bank or _ChannelBank(model, n, solver)
    total = 0.0
    for block in partition.blocks():
        pk = p[block].sum()
        if pk > 0:
            total += pk * bank.block_empowerment(block, p[block])
    return float(total)


def context_free_empowerment(model, prior=None, n: int = 1, solver: SolverParams = DEFAULT_SOLVER) -> float:
    """Capacity of the state-marginalized channel p(s|a) = sum_r p(s|a,r) p(r)."""
    partition = ContextPartition((0,) * model.n_states)
    return contextual_empowerment(model, partition, prior, n, solver)


MAX_CONTEXT_STATES = 12


def optimal_context_search(model, prior=None, n: int = 1, solver: SolverParams = DEFAULT_SOLVER,
                           tol: float = 1e-6) -> ContextPartition:
    """Minimum-entropy partition whose contextual empowerment reaches E(R) - tol.

    Exhaustive branch-and-bound over set partitions. E(R) - E(K) is a
    p(k)-weighted sum of non-negative per-block gaps, so blocks are scored
    independently and a partial partition is abandoned once its gap exceeds
    ``tol`` or its entropy lower bound exceeds the best found. Ties go to
    fewer contexts, then to the lexicographically smallest assignment.
    """
    R = model.n_states
    if R > MAX_CONTEXT_STATES:
        raise ValidationError(
            f"exhaustive context search supports at most {MAX_CONTEXT_STATES} states, model has {R}"
        )
    p = _prior(model, prior)
    bank = _ChannelBank(model, n, solver)
    e_state = np.array([bank.state_value(r) for r in range(R)])

    gaps: dict[int, tuple[float, float]] = {}

    def block_cost(mask: int) -> tuple[float, float]:
        # (p(k) * gap_k, -p(k) log p(k))
        if mask not in gaps:
            block = [r for r in range(R) if mask >> r & 1]
            pk = p[block].sum()
            if pk <= 0 or len(block) == 1:
                cost = 0.0
            else:
                avg = float(p[block] @ e_state[block])
                cost = max(avg - pk * bank.block_empowerment(block, p[block]), 0.0)
            h = -pk * math.log2(pk) if pk > 0 else 0.0
            gaps[mask] = (cost, h)
        return gaps[mask]

    best = {"key": None, "blocks": None}
    eps = 1e-12

    def key_of(blocks):
        assignment = [0] * R
        for k, mask in enumerate(blocks):
            for r in range(R):
                if mask >> r & 1:
                    assignment[r] = k
        h = sum(block_cost(m)[1] for m in blocks)
        return (h, len(blocks), tuple(assignment))

    def better(key) -> bool:
        cur = best["key"]
        if cur is None:
            return True
        if key[0] < cur[0] - eps:
            return True
        if key[0] > cur[0] + eps:
            return False
        return key[1:] < cur[1:]

    def search(remaining: int, blocks: list[int], gap: float, h: float):
        if remaining == 0:
            key = key_of(blocks)
            if better(key):
                best["key"], best["blocks"] = key, list(blocks)
            return
        if best["key"] is not None:
            rest = p[[r for r in range(R) if remaining >> r & 1]].sum()
            bound = h + (-rest * math.log2(rest) if rest > 0 else 0.0)
            if bound > best["key"][0] + eps:
                return
        low = remaining & -remaining
        others = remaining ^ low
        # largest blocks first so good solutions are found early
        subs = []
        sub = others
        while True:
            subs.append(sub | low)
            if sub == 0:
                break
            sub = (sub - 1) & others
        for mask in subs:
            cost, bh = block_cost(mask)
            if gap + cost > tol:
                continue
            blocks.append(mask)
            search(remaining ^ mask, blocks, gap + cost, h + bh)
            blocks.pop()

    search((1 << R) - 1, [], 0.0, 0.0)
    return ContextPartition(best["key"][2]).canonical()


# -- impoverished empowerment -------------------------------------------------


@dataclass(frozen=True)
class ImpoverishedResult:
    bits: float
    sequences: tuple[tuple[int, ...], ...]
    endpoints: tuple[int, ...]
    stage_bits: tuple[float, ...]
    clamped: bool


def _greedy_select(rows: np.ndarray, budget: int, solver: SolverParams) -> list[int]:
    """Greedy forward selection of ``budget`` row indices maximizing capacity.

    Starts from row 0 (all singletons have zero capacity, ties go to the
    lexicographically first); each round adds the row with the largest
    capacity, lowest index on ties.
    """
    keys = np.round(rows, 12)
    _, first = np.unique(keys, axis=0, return_index=True)
    distinct = sorted(int(i) for i in first)
    selected = [0]
    while len(selected) < budget:
        best_i, best_c = None, -1.0
        chosen = set(selected)
        for i in distinct:
            if i in chosen:
                continue
            sub = rows[selected + [i]]
            sub = sub[:, sub.sum(axis=0) > 0]
            c = solver.capacity(sub)
            if c > best_c + 1e-12:
                best_i, best_c = i, c
        if best_i is None:
            # fewer distinct rows than the budget: pad with duplicates in order
            for i in range(rows.shape[0]):
                if len(selected) >= budget:
                    break
                if i not in chosen:
                    selected.append(i)
                    chosen.add(i)
            break
        selected.append(best_i)
    return selected


def impoverished_empowerment(
    model: TransitionModel,
    state,
    segment_n: int,
    budget: int,
    segments: int = 1,
    solver: SolverParams = DEFAULT_SOLVER,
) -> ImpoverishedResult:
    """Approximate long-horizon empowerment from a pruned sequence skeleton.

    Stage 0 keeps ``budget`` of the |A|^segment_n sequences by greedy
    capacity gain. Each later stage extends every kept sequence by all
    segment_n-step continuations and again keeps ``budget`` of them. Rows
    are exact open-loop outcome distributions from ``state``, so the reduced
    channel is a sub-channel of the full one. The reported value is the
    capacity of the final stage's reduced channel.
    """
    if budget < 2:
        raise ValidationError("budget must be >= 2")
    if segments < 1:
        raise ValidationError("segments must be >= 1")
    per_stage = check_horizon(model, segment_n, solver.budget)
    clamped = budget > per_stage
    budget_0 = min(budget, per_stage)

    r = model.index_of(state)
    local = model.reachable_within(r, segment_n * segments)
    t = _local_dense(model, local)
    symbols, cols = np.unique(model.sensor[local], return_inverse=True)

    def sensor_rows(dist):
        out = np.zeros((dist.shape[0], symbols.size))
        np.add.at(out.T, cols, dist.T)
        return out

    start = np.zeros((1, local.size))
    start[0, int(np.searchsorted(local, r))] = 1.0
    suffixes = action_sequences(model.n_actions, segment_n)

    kept_seqs: list[tuple[int, ...]] = [()]
    kept_dist = start
    stage_bits = []
    for stage in range(segments):
        cand_dist = propagate(kept_dist, t, segment_n)
        cand_seqs = [prefix + suf for prefix in kept_seqs for suf in suffixes]
        order = sorted(range(len(cand_seqs)), key=lambda i: cand_seqs[i])
        cand_dist = cand_dist[order]
        cand_seqs = [cand_seqs[i] for i in order]
        limit = budget_0 if stage == 0 else min(budget, len(cand_seqs))
        rows = sensor_rows(cand_dist)
        chosen = _greedy_select(rows, limit, solver)
        kept_seqs = [cand_seqs[i] for i in chosen]
        kept_dist = cand_dist[chosen]
        sub = rows[chosen]
        sub = sub[:, sub.sum(axis=0) > 0]
        stage_bits.append(solver.capacity(sub))

    # most likely final state, smallest state id on ties
    endpoints = tuple(int(local[int(np.argmax(row))]) for row in kept_dist)
    return ImpoverishedResult(stage_bits[-1], tuple(kept_seqs), endpoints, tuple(stage_bits), clamped)


# -- greedy action selection -----------------------------------------------


class EmpowermentCalculator:
    """Memoized per-state n-step empowerment for one model.

    ``method`` is ``"ba"``, ``"deterministic"`` or ``"auto"`` (deterministic
    counting when the model allows it, Blahut-Arimoto otherwise).
    """

    def __init__(self, model: TransitionModel, n: int, solver: SolverParams = DEFAULT_SOLVER,
                 method: str = "auto"):
        if method not in ("auto", "ba", "deterministic"):
            raise ValidationError(f"unknown method {method!r}")
        if method == "auto":
            method = "deterministic" if model.is_deterministic else "ba"
        self.model = model
        self.n = n
        self.solver = solver
        self.method = method
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()

    def value(self, state) -> float:
        r = self.model.index_of(state)
        cached = self._cache.get(r)
        if cached is not None:
            return cached
        if self.method == "deterministic":
            v = deterministic_empowerment(self.model, r, self.n)
        else:
            v = state_empowerment(self.model, r, self.n, self.solver)
        with self._lock:
            self._cache.setdefault(r, v)
        return v

    def expected(self, state, action: int) -> float:
        r = self.model.index_of(state)
        if not 0 <= action < self.model.n_actions:
            raise ValidationError(f"invalid action {action}")
        return float(sum(p * self.value(int(s)) for s, p in self.model.row(r, action).items()))

    def greedy(self, state) -> int:
        values = [self.expected(state, a) for a in range(self.model.n_actions)]
        best = max(values)
        # lowest action id among (numerically) tied maxima
        return next(a for a, v in enumerate(values) if v >= best - 1e-12)

    def map(self, states=None) -> EmpowermentMap:
        idx = range(self.model.n_states) if states is None else [self.model.index_of(s) for s in states]
        idx = list(idx)
        values = np.array([self.value(r) for r in idx])
        labels = tuple(self.model.states[r] for r in idx)
        return EmpowermentMap(labels, values, self.n, self.model.name, self.method)


def expected_empowerment(model, state, action: int, n: int, solver: SolverParams = DEFAULT_SOLVER,
                         calculator: EmpowermentCalculator | None = None) -> float:
    """E[E(S') | a] = sum_s' p(s' | state, a) E(s')."""
    calc = calculator or EmpowermentCalculator(model, n, solver)
    return calc.expected(state, action)


def greedy_policy_step(model, state, n: int, solver: SolverParams = DEFAULT_SOLVER,
                       calculator: EmpowermentCalculator | None = None) -> int:
    """Action maximizing expected successor empowerment; lowest id wins ties."""
    calc = calculator or EmpowermentCalculator(model, n, solver)
    return calc.greedy(state)


def state_empowerment_map(model, n: int, solver: SolverParams = DEFAULT_SOLVER, method: str = "auto",
                          states=None) -> EmpowermentMap:
    return EmpowermentCalculator(model, n, solver, method).map(states)
