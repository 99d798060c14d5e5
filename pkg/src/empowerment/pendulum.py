"""Torque-limited simple pendulum: dynamics, local linearization, QLG
empowerment landscapes and greedy empowerment-maximizing control.

Angle convention: ``phi = 0`` hangs straight down, ``phi = +-pi`` is upright.
The equation of motion is ``phi'' = -(g/l) sin(phi) + a`` without damping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .continuous import batch_qlg_capacity
from .infotheory import ValidationError

FD_DELTA = 1e-4


@dataclass(frozen=True)
class PendulumParams:
    gravity: float = 9.81
    length: float = 1.0
    delta_t: float = 0.5
    horizon: int = 3
    power: float = 1.0
    noise_std: float = 0.01
    a_grid: int = 5
    substep: float | None = None  # defaults to delta_t / 10

    def __post_init__(self):
        if not (self.gravity > 0 and self.length > 0 and self.delta_t > 0):
            raise ValidationError("gravity, length and delta_t must be > 0")
        if self.substep is not None and not self.substep > 0:
            raise ValidationError("substep must be > 0")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not self.power > 0:
            raise ValidationError("power must be > 0")
        if not self.noise_std > 0:
            raise ValidationError("noise_std must be > 0")
        if self.a_grid < 2:
            raise ValidationError("a_grid must be >= 2")

    @property
    def h(self) -> float:
        return self.substep if self.substep is not None else self.delta_t / 10

    @property
    def n_substeps(self) -> int:
        return max(1, int(math.ceil(self.delta_t / self.h - 1e-9)))

    @property
    def a_max(self) -> float:
        return math.sqrt(self.power)

    def candidates(self) -> np.ndarray:
        return np.linspace(-self.a_max, self.a_max, self.a_grid)

    def with_(self, **changes) -> "PendulumParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class PendulumState:
    phi: float
    phi_dot: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))
        object.__setattr__(self, "phi_dot", float(self.phi_dot))


def wrap_angle(phi):
    """Map angles onto [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi


def angle_diff(a, b):
    """Shortest signed arc a - b."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def _integrate(params: PendulumParams, phi, phi_dot, a):
    """Fixed-step RK4 over one delta_t; broadcasts over array inputs, no wrapping."""
    k = params.gravity / params.length
    m = params.n_substeps
    h = params.delta_t / m
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(phi_dot, dtype=float)
    a = np.asarray(a, dtype=float)
    for _ in range(m):
        k1p, k1w = w, -k * np.sin(phi) + a
        k2p, k2w = w + 0.5 * h * k1w, -k * np.sin(phi + 0.5 * h * k1p) + a
        k3p, k3w = w + 0.5 * h * k2w, -k * np.sin(phi + 0.5 * h * k2p) + a
        k4p, k4w = w + h * k3w, -k * np.sin(phi + h * k3p) + a
        phi = phi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        w = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
    return phi, w


def step_arrays(params: PendulumParams, phi, phi_dot, a):
    phi, w = _integrate(params, phi, phi_dot, a)
    return wrap_angle(phi), w


def dynamics_step(params: PendulumParams, state: PendulumState, a: float) -> PendulumState:
    if not math.isfinite(a):
        raise ValidationError("acceleration must be finite")
    phi, w = step_arrays(params, state.phi, state.phi_dot, a)
    return PendulumState(float(phi), float(w))


def rollout(params: PendulumParams, state: PendulumState, actions) -> PendulumState:
    phi, w = state.phi, state.phi_dot
    for a in actions:
        phi, w = step_arrays(params, phi, w, float(a))
    return PendulumState(float(phi), float(w))


def _rollout_unwrapped(params: PendulumParams, phi, phi_dot, actions):
    """actions has shape (..., n); phi and phi_dot broadcast against actions[..., 0]."""
    for j in range(actions.shape[-1]):
        phi, phi_dot = _integrate(params, phi, phi_dot, actions[..., j])
    return phi, phi_dot


def linearize_arrays(params: PendulumParams, phi, phi_dot, delta: float = FD_DELTA) -> np.ndarray:
    """Jacobians d(final phi, final phi_dot)/d(a_1..a_n) at a = 0.

    ``phi`` and ``phi_dot`` are 1-D arrays of length N; returns (N, 2, n).
    """
    phi = np.asarray(phi, dtype=float).reshape(-1)
    phi_dot = np.asarray(phi_dot, dtype=float).reshape(-1)
    n = params.horizon
    # perturbations: (2n, n) rows +delta e_j then -delta e_j
    eye = np.eye(n) * delta
    pert = np.concatenate([eye, -eye])
    acts = np.broadcast_to(pert, (phi.size, 2 * n, n))
    p_end, w_end = _rollout_unwrapped(params, phi[:, None], phi_dot[:, None], acts)
    dphi = angle_diff(p_end[:, :n], p_end[:, n:]) / (2 * delta)
    dw = (w_end[:, :n] - w_end[:, n:]) / (2 * delta)
    return np.stack([dphi, dw], axis=1)


def local_linearization(params: PendulumParams, state: PendulumState, delta: float = FD_DELTA) -> np.ndarray:
    """The 2 x n action-to-final-state Jacobian at the zero action sequence."""
    return linearize_arrays(params, [state.phi], [state.phi_dot], delta)[0]


def empowerment_arrays(params: PendulumParams, phi, phi_dot, power: float | None = None) -> np.ndarray:
    """QLG empowerment (bits) for many states, isotropic noise of std noise_std."""
    jac = linearize_arrays(params, phi, phi_dot)
    # whitening by noise_std^2 * I is a plain rescale
    sv = np.linalg.svd(jac / params.noise_std, compute_uv=False)
    return batch_qlg_capacity(sv, params.power if power is None else power)


def state_empowerment(params: PendulumParams, state: PendulumState) -> float:
    return float(empowerment_arrays(params, [state.phi], [state.phi_dot])[0])


def singular_values_arrays(params: PendulumParams, phi, phi_dot) -> np.ndarray:
    jac = linearize_arrays(params, phi, phi_dot)
    return np.linalg.svd(jac / params.noise_std, compute_uv=False)


# -- landscapes --------------------------------------------------------------


@dataclass(frozen=True)
class PendulumMap:
    """Empowerment on a (phi, phi_dot) grid; values[i, j] at (phi[i], phi_dot[j])."""

    phi: np.ndarray
    phi_dot: np.ndarray
    values: np.ndarray
    params: PendulumParams

    @property
    def vmin(self) -> float:
        return float(self.values.min())

    @property
    def vmax(self) -> float:
        return float(self.values.max())


def grid_centers(phi_cells: int, phidot_cells: int, phidot_range: float):
    if phi_cells < 1 or phidot_cells < 1 or not phidot_range > 0:
        raise ValidationError("grid sizes and phidot_range must be positive")
    phi = -np.pi + (np.arange(phi_cells) + 0.5) * (2 * np.pi / phi_cells)
    phi_dot = -phidot_range + (np.arange(phidot_cells) + 0.5) * (2 * phidot_range / phidot_cells)
    return phi, phi_dot


def pendulum_empowerment_map(
    params: PendulumParams,
    phi_cells: int = 64,
    phidot_cells: int = 64,
    phidot_range: float = 8.0,
) -> PendulumMap:
    phi, phi_dot = grid_centers(phi_cells, phidot_cells, phidot_range)
    pp, ww = np.meshgrid(phi, phi_dot, indexing="ij")
    values = empowerment_arrays(params, pp.ravel(), ww.ravel()).reshape(pp.shape)
    return PendulumMap(phi, phi_dot, values, params)


def singular_value_map(params: PendulumParams, phi_cells=64, phidot_cells=64, phidot_range=8.0):
    phi, phi_dot = grid_centers(phi_cells, phidot_cells, phidot_range)
    pp, ww = np.meshgrid(phi, phi_dot, indexing="ij")
    sv = singular_values_arrays(params, pp.ravel(), ww.ravel())
    return phi, phi_dot, sv.reshape(pp.shape + (sv.shape[-1],))


# -- greedy control ----------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    phi: np.ndarray
    phi_dot: np.ndarray
    actions: np.ndarray  # action applied at step i (NaN for the final state)
    empowerment: np.ndarray

    def __len__(self) -> int:
        return self.phi.size

    def rows(self):
        for i in range(self.phi.size):
            yield i, float(self.phi[i]), float(self.phi_dot[i]), float(self.actions[i]), float(self.empowerment[i])


def _tie_order(candidates: np.ndarray) -> np.ndarray:
    # smallest |a| first, negative before positive
    return np.lexsort((candidates >= 0, np.abs(candidates)))


def greedy_control(
    params: PendulumParams,
    start: PendulumState,
    steps: int,
    mc_rollouts: int = 8,
    seed: int = 0,
) -> Trajectory:
    """Greedy expected-empowerment control from ``start`` for ``steps`` steps.

    Each candidate acceleration is scored by the mean QLG empowerment of
    ``mc_rollouts`` noisy successors (noiseless step plus N(0, noise_std^2)
    per state dimension); the winner is applied without noise.
    """
    if steps < 0 or mc_rollouts < 1:
        raise ValidationError("steps must be >= 0 and mc_rollouts >= 1")
    rng = np.random.default_rng(seed)
    cands = params.candidates()
    order = _tie_order(cands)
    phis = [start.phi]
    ws = [start.phi_dot]
    acts = []
    emps = [state_empowerment(params, start)]
    phi, w = start.phi, start.phi_dot
    for _ in range(steps):
        nphi, nw = step_arrays(params, np.full(cands.size, phi), np.full(cands.size, w), cands)
        noise = rng.standard_normal((cands.size, mc_rollouts, 2)) * params.noise_std
        sphi = (nphi[:, None] + noise[..., 0]).ravel()
        sw = (nw[:, None] + noise[..., 1]).ravel()
        scores = empowerment_arrays(params, wrap_angle(sphi), sw).reshape(cands.size, mc_rollouts).mean(axis=1)
        ranked = order[np.argsort(-scores[order], kind="stable")]
        best = int(ranked[0])
        phi, w = float(nphi[best]), float(nw[best])
        acts.append(float(cands[best]))
        phis.append(phi)
        ws.append(w)
        emps.append(state_empowerment(params, PendulumState(phi, w)))
    acts.append(float("nan"))
    return Trajectory(np.array(phis), np.array(ws), np.array(acts), np.array(emps))


# -- scan analysis -----------------------------------------------------------

UPRIGHT_TOL = 0.2
# s1: around the lower rest position; s2: mid-swing, either side
NEAR_REST_PHI = np.pi / 8
NEAR_REST_PHIDOT = 1.0
MID_SWING_PHI = (np.pi / 4, 3 * np.pi / 4)


def upright_stats(traj: Trajectory, tol: float = UPRIGHT_TOL) -> tuple[int | None, int]:
    """First step with |phi| > pi - tol, and the longest consecutive run there."""
    up = np.abs(traj.phi) > np.pi - tol
    first = int(np.argmax(up)) if up.any() else None
    longest = run = 0
    for flag in up:
        run = run + 1 if flag else 0
        longest = max(longest, run)
    return first, longest


def classify_behavior(traj: Trajectory, hold_steps: int = 50) -> str:
    """``upright-hold``, ``lower-rest`` or ``oscillation``."""
    _, longest = upright_stats(traj)
    if longest >= hold_steps:
        return "upright-hold"
    tail = traj.phi[len(traj) // 2:]
    if np.max(np.abs(tail)) < np.pi / 4:
        return "lower-rest"
    return "oscillation"


def is_monotone(values: np.ndarray) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d >= 0) or np.all(d <= 0))


@dataclass(frozen=True)
class Inversion:
    """E_low(s1) < E_low(s2) while E_high(s1) > E_high(s2)."""

    p_low: float
    p_high: float
    s1: tuple[float, float]
    s2: tuple[float, float]
    low: tuple[float, float]  # (E(s1), E(s2)) at p_low
    high: tuple[float, float]  # (E(s1), E(s2)) at p_high
    margin: float

    def to_dict(self) -> dict:
        return {
            "p_low": self.p_low, "p_high": self.p_high,
            "s1": list(self.s1), "s2": list(self.s2),
            "empowerment_low": list(self.low), "empowerment_high": list(self.high),
            "margin_bits": self.margin,
        }


def region_masks(phi: np.ndarray, phi_dot: np.ndarray):
    """Boolean (phi, phi_dot) grids for the near-rest and mid-swing regions."""
    pp, ww = np.meshgrid(phi, phi_dot, indexing="ij")
    near = (np.abs(pp) <= NEAR_REST_PHI) & (np.abs(ww) <= NEAR_REST_PHIDOT)
    mid = (np.abs(pp) >= MID_SWING_PHI[0]) & (np.abs(pp) <= MID_SWING_PHI[1])
    return near, mid


def find_power_inversion(maps: list[PendulumMap]) -> Inversion | None:
    """Search maps of one delta_t for an ordering reversal between two powers.

    Pairs (s1 near rest, s2 mid-swing) are checked for every P_low < P_high;
    the quadruple with the largest margin min(E_low(s2) - E_low(s1),
    E_high(s1) - E_high(s2)) is returned.
    """
    if not maps:
        return None
    maps = sorted(maps, key=lambda m: m.params.power)
    phi, phi_dot = maps[0].phi, maps[0].phi_dot
    near, mid = region_masks(phi, phi_dot)
    i1, i2 = np.argwhere(near), np.argwhere(mid)
    if i1.size == 0 or i2.size == 0:
        return None
    best = None
    for a in range(len(maps)):
        for b in range(a + 1, len(maps)):
            lo, hi = maps[a], maps[b]
            if lo.params.power >= hi.params.power:
                continue
            l1, l2 = lo.values[near], lo.values[mid]
            h1, h2 = hi.values[near], hi.values[mid]
            margin = np.minimum(l2[None, :] - l1[:, None], h1[:, None] - h2[None, :])
            k = int(np.argmax(margin))
            j1, j2 = divmod(k, margin.shape[1])
            m = float(margin[j1, j2])
            if m > 0 and (best is None or m > best.margin):
                c1, c2 = i1[j1], i2[j2]
                best = Inversion(
                    lo.params.power, hi.params.power,
                    (float(phi[c1[0]]), float(phi_dot[c1[1]])),
                    (float(phi[c2[0]]), float(phi_dot[c2[1]])),
                    (float(l1[j1]), float(l2[j2])), (float(h1[j1]), float(h2[j2])), m,
                )
    return best
