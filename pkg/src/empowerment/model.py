"""Finite transition models p(s' | s, a) with a deterministic sensor map."""
from __future__ import annotations

import json
from collections.abc import Hashable, Sequence
from pathlib import Path

import numpy as np

from .infotheory import SUM_TOL, ValidationError


class TransitionModel:
    """Finite world: states, actions, sparse transition rows and a sensor map.

    Transitions are stored padded: ``succ[r, a, k]`` is the k-th successor of
    state ``r`` under action ``a`` and ``prob[r, a, k]`` its probability
    (zero for padding). ``sensor[r]`` is the sensor symbol index observed in
    state ``r``. Instances are treated as immutable.
    """

    def __init__(
        self,
        succ,
        prob,
        sensor=None,
        *,
        states: Sequence[Hashable] | None = None,
        actions: Sequence[Hashable] | None = None,
        sensors: Sequence[Hashable] | None = None,
        name: str = "model",
    ):
        succ = np.asarray(succ, dtype=np.int64)
        prob = np.asarray(prob, dtype=float)
        if succ.ndim == 2:
            succ = succ[..., None]
            prob = prob[..., None] if prob.ndim == 2 else prob
        if succ.ndim != 3 or succ.shape != prob.shape:
            raise ValidationError(
                f"succ {succ.shape} and prob {prob.shape} must both be (states, actions, k)"
            )
        n_states, n_actions, _ = succ.shape
        if n_states < 1 or n_actions < 1:
            raise ValidationError("model needs at least one state and one action")
        if np.any(prob < 0) or not np.all(np.isfinite(prob)):
            raise ValidationError("transition probabilities must be finite and >= 0")
        sums = prob.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > SUM_TOL)
        if bad.size:
            r, a = bad[0]
            raise ValidationError(
                f"transition row (state {int(r)}, action {int(a)}) sums to {sums[r, a]!r}"
            )
        live = prob > 0
        if np.any(live & ((succ < 0) | (succ >= n_states))):
            raise ValidationError("successor index out of range")
        succ = np.where(live, succ, 0)

        if sensor is None:
            sensor = np.arange(n_states)
        sensor = np.asarray(sensor, dtype=np.int64)
        if sensor.shape != (n_states,):
            raise ValidationError("sensor map must assign a symbol to every state")
        if np.any(sensor < 0):
            raise ValidationError("sensor symbols must be non-negative indices")

        self.succ = succ
        self.prob = prob
        self.sensor = sensor
        self.n_sensors = int(sensor.max()) + 1 if sensors is None else len(sensors)
        if self.sensor.max() >= self.n_sensors:
            raise ValidationError("sensor index exceeds the sensor alphabet")
        if states is None:
            states = range(n_states)
        # lazy Sequence labels are kept as they are; big worlds never materialize them
        self.states = states if isinstance(states, Sequence) and not isinstance(states, list) else tuple(states)
        self.actions = tuple(actions) if actions is not None else tuple(range(n_actions))
        self.sensors = tuple(sensors) if sensors is not None else tuple(range(self.n_sensors))
        if len(self.states) != n_states or len(self.actions) != n_actions:
            raise ValidationError("state/action labels do not match the transition table")
        self.name = name
        for arr in (self.succ, self.prob, self.sensor):
            arr.setflags(write=False)
        self._index = None
        self._deterministic = None

    # -- construction helpers ---------------------------------------------------

    @classmethod
    def from_dense(cls, transition, sensor=None, **kw) -> "TransitionModel":
        """Build from a dense (states, actions, states) array of p(s' | s, a)."""
        t = np.asarray(transition, dtype=float)
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise ValidationError(f"dense transition must be (R, A, R), got {t.shape}")
        width = max(1, int((t > 0).sum(axis=2).max()))
        order = np.argsort(~(t > 0), axis=2, kind="stable")[..., :width]
        prob = np.take_along_axis(t, order, axis=2)
        return cls(order, prob, sensor, **kw)

    @classmethod
    def from_deterministic(cls, next_state, sensor=None, **kw) -> "TransitionModel":
        nxt = np.asarray(next_state, dtype=np.int64)
        return cls(nxt[..., None], np.ones(nxt.shape + (1,)), sensor, **kw)

    # -- properties -------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.succ.shape[0]

    @property
    def n_actions(self) -> int:
        return self.succ.shape[1]

    @property
    def is_deterministic(self) -> bool:
        if self._deterministic is None:
            top = self.prob.max(axis=2)
            self._deterministic = bool(np.all(np.abs(top - 1.0) <= SUM_TOL))
        return self._deterministic

    def index_of(self, state) -> int:
        """Resolve a state index or label to its index; integers are always indices."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if 0 <= state < self.n_states:
                return int(state)
            raise ValidationError(f"state index {state} out of range")
        if self._index is None:
            self._index = {s: i for i, s in enumerate(self.states)}
        if state in self._index:
            return self._index[state]
        raise ValidationError(f"unknown state {state!r}")

    def dense(self, rows=None) -> np.ndarray:
        """Dense (len(rows), A, R) slice of the transition tensor."""
        rows = np.arange(self.n_states) if rows is None else np.asarray(rows)
        out = np.zeros((rows.size, self.n_actions, self.n_states))
        r_idx = np.arange(rows.size)[:, None, None]
        a_idx = np.arange(self.n_actions)[None, :, None]
        np.add.at(out, (r_idx, a_idx, self.succ[rows]), self.prob[rows])
        return out

    def row(self, state: int, action: int) -> dict[int, float]:
        out: dict[int, float] = {}
        for s, p in zip(self.succ[state, action], self.prob[state, action]):
            if p > 0:
                out[int(s)] = out.get(int(s), 0.0) + float(p)
        return out

    def successors(self, states: np.ndarray) -> np.ndarray:
        """Sorted unique successors (any action, positive probability) of ``states``."""
        states = np.asarray(states, dtype=np.int64)
        nxt = self.succ[states][self.prob[states] > 0]
        return np.unique(nxt)

    def reachable_within(self, state: int, n: int) -> np.ndarray:
        """All states reachable in at most ``n`` steps, sorted."""
        seen = np.array([state], dtype=np.int64)
        frontier = seen
        for _ in range(n):
            nxt = self.successors(frontier)
            frontier = np.setdiff1d(nxt, seen, assume_unique=True)
            if frontier.size == 0:
                break
            seen = np.union1d(seen, frontier)
        return seen

    def permuted(self, state_perm=None, action_perm=None, sensor_perm=None) -> "TransitionModel":
        """Relabeled copy: new state ``state_perm[r]`` is old state ``r``, likewise for actions/sensors."""
        sp = np.arange(self.n_states) if state_perm is None else np.asarray(state_perm)
        ap = np.arange(self.n_actions) if action_perm is None else np.asarray(action_perm)
        xp = np.arange(self.n_sensors) if sensor_perm is None else np.asarray(sensor_perm)
        inv_s = np.argsort(sp)
        inv_a = np.argsort(ap)
        succ = sp[self.succ][inv_s][:, inv_a]
        prob = self.prob[inv_s][:, inv_a]
        sensor = xp[self.sensor][inv_s]
        return TransitionModel(succ, prob, sensor, name=self.name + "-permuted")

    # -- serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        transitions = []
        for r in range(self.n_states):
            transitions.append([
                [[int(s), float(p)] for s, p in sorted(self.row(r, a).items())]
                for a in range(self.n_actions)
            ])
        return {
            "name": self.name,
            "states": [_jsonable(s) for s in self.states],
            "actions": [_jsonable(a) for a in self.actions],
            "sensors": [_jsonable(x) for x in self.sensors],
            "sensor_map": self.sensor.tolist(),
            "transitions": transitions,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransitionModel":
        try:
            rows = doc["transitions"]
            n_states = len(rows)
            n_actions = len(rows[0])
            width = max(len(cell) for row in rows for cell in row) or 1
            succ = np.zeros((n_states, n_actions, width), dtype=np.int64)
            prob = np.zeros((n_states, n_actions, width))
            for r, row in enumerate(rows):
                if len(row) != n_actions:
                    raise ValidationError(f"state {r} has {len(row)} actions, expected {n_actions}")
                for a, cell in enumerate(row):
                    for k, (s, p) in enumerate(cell):
                        succ[r, a, k] = s
                        prob[r, a, k] = p
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed transition model document: {exc}") from None
        return cls(
            succ,
            prob,
            doc.get("sensor_map"),
            states=_labels(doc.get("states")),
            actions=_labels(doc.get("actions")),
            sensors=_labels(doc.get("sensors")),
            name=doc.get("name", "model"),
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "TransitionModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __repr__(self) -> str:
        return (f"TransitionModel({self.name!r}, states={self.n_states}, "
                f"actions={self.n_actions}, sensors={self.n_sensors})")


def _jsonable(label):
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    if isinstance(label, np.integer):
        return int(label)
    return label


def _labels(raw):
    if raw is None:
        return None
    return [_tuplify(x) for x in raw]


def _tuplify(x):
    return tuple(_tuplify(y) for y in x) if isinstance(x, list) else x


def random_model(rng: np.random.Generator, n_states: int, n_actions: int, n_sensors: int,
                 support: int = 2, name: str = "random") -> TransitionModel:
    """Random sparse model: each (state, action) row spreads over ``support`` successors."""
    if min(n_states, n_actions, n_sensors, support) < 1:
        raise ValidationError("model sizes must be >= 1")
    k = min(support, n_states)
    succ = np.empty((n_states, n_actions, k), dtype=np.int64)
    for r in range(n_states):
        for a in range(n_actions):
            succ[r, a] = np.sort(rng.choice(n_states, size=k, replace=False))
    prob = rng.dirichlet(np.ones(k), size=(n_states, n_actions))
    sensor = rng.integers(0, n_sensors, size=n_states)
    return TransitionModel(succ, prob, sensor, sensors=range(n_sensors), name=name)
