"""Discrete information measures and the Blahut-Arimoto capacity solver.

All public quantities are in bits. The Blahut-Arimoto update works in nats
internally so that ``exp`` and ``log`` share a base.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LN2 = np.log(2.0)
SUM_TOL = 1e-9
PROB_FLOOR = 1e-300

DEFAULT_EPSILON = 1e-8
DEFAULT_MAX_ITER = 500


class ValidationError(ValueError):
    """Raised when a distribution, channel or model is malformed."""


def as_distribution(p, name: str = "distribution") -> np.ndarray:
    """Validate ``p`` as a probability vector and return it as a float array."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ValidationError(f"{name} has negative entries (min {arr.min():.3g})")
    total = arr.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise ValidationError(f"{name} sums to {total!r}, expected 1 within {SUM_TOL}")
    return arr


def as_channel(rows) -> np.ndarray:
    """Validate a row-stochastic matrix p(output | input)."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"channel must be a non-empty 2-D table, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("channel has non-finite entries")
    if np.any(arr < 0):
        raise ValidationError("channel has negative entries")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"channel row {i} sums to {sums[i]!r}, expected 1 within {SUM_TOL}")
    return arr


def _xlogx_sum(p: np.ndarray, axis=None) -> np.ndarray:
    # 0 log 0 = 0
    safe = np.where(p > 0, p, 1.0)
    return np.sum(p * np.log2(safe), axis=axis)


def entropy(p) -> float:
    """Shannon entropy in bits."""
    p = as_distribution(p)
    return float(max(-_xlogx_sum(p), 0.0))


def conditional_entropy(p_input, channel) -> float:
    """H(output | input) = sum_a p(a) H(row_a), in bits."""
    p = as_distribution(p_input, "input distribution")
    w = as_channel(channel)
    if p.size != w.shape[0]:
        raise ValidationError(
            f"input has {p.size} entries but channel has {w.shape[0]} rows"
        )
    row_h = -_xlogx_sum(w, axis=1)
    return float(max(np.dot(p, row_h), 0.0))


def output_marginal(p_input, channel) -> np.ndarray:
    p = as_distribution(p_input, "input distribution")
    w = as_channel(channel)
    if p.size != w.shape[0]:
        raise ValidationError(
            f"input has {p.size} entries but channel has {w.shape[0]} rows"
        )
    return p @ w


def mutual_information(p_input, channel) -> float:
    """I(input; output) = H(output) - H(output | input), clamped at 0."""
    q = output_marginal(p_input, channel)
    h_out = -_xlogx_sum(q)
    mi = h_out - conditional_entropy(p_input, channel)
    return float(max(mi, 0.0))


@dataclass(frozen=True)
class CapacityResult:
    capacity_bits: float
    optimal_input: np.ndarray
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def _divergences(w: np.ndarray, log_w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Per-input KL divergence D(row_v || output marginal) in nats."""
    q = p @ w
    log_q = np.log(np.where(q > 0, q, 1.0))
    # entries with w == 0 contribute nothing
    return np.sum(w * (log_w - log_q[None, :]), axis=1)


def blahut_arimoto(
    channel,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    validate: bool = True,
) -> CapacityResult:
    """Channel capacity of a discrete memoryless channel.

    Starts from the uniform input distribution and alternates
    ``d_v = D(p(.|v) || sum_i p_i p(.|i))``, ``E = sum_v p_v d_v`` and
    ``p_v <- p_v exp(d_v) / z`` until two successive estimates of ``E``
    differ by less than ``epsilon`` bits.

    Parameters
    ----------
    channel : array_like, shape (n_inputs, n_outputs)
        Row-stochastic table p(output | input).
    epsilon : float
        Stopping threshold on successive capacity estimates, in bits.
    max_iter : int
        Iteration cap. ``converged`` is False when it is reached.

    Returns
    -------
    CapacityResult
        Capacity in bits, the final input distribution and the per-iteration
        estimates in ``history``.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if max_iter < 1:
        raise ValidationError("max_iter must be at least 1")
    w = as_channel(channel) if validate else np.asarray(channel, dtype=float)
    n = w.shape[0]
    log_w = np.log(np.where(w > 0, w, 1.0))

    p = np.full(n, 1.0 / n)
    d = _divergences(w, log_w, p)
    estimate = float(p @ d) / LN2
    history = [estimate]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # shift by max(d) before exponentiating; cancels in normalization
        p = p * np.exp(d - d.max())
        p /= p.sum()
        if np.any(p < PROB_FLOOR):
            p = np.maximum(p, PROB_FLOOR)
            p /= p.sum()
        d = _divergences(w, log_w, p)
        new_estimate = float(p @ d) / LN2
        history.append(new_estimate)
        delta = abs(new_estimate - estimate)
        estimate = new_estimate
        if delta < epsilon:
            converged = True
            break

    bound = np.log2(min(w.shape))
    capacity = min(max(estimate, 0.0), bound)
    return CapacityResult(capacity, p, iterations, converged, tuple(history))


def capacity(channel, epsilon: float = DEFAULT_EPSILON, max_iter: int = DEFAULT_MAX_ITER) -> float:
    return blahut_arimoto(channel, epsilon, max_iter).capacity_bits


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_channel_csv(path) -> np.ndarray:
    """Read a channel table: one row per input, comma-separated probabilities.

    An optional all-text header line and ``#`` comment lines are skipped.
    """
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record) or record[0].lstrip().startswith("#"):
                continue
            if not rows and all(not _is_number(cell) for cell in record):
                continue  # header line
            try:
                rows.append([float(cell) for cell in record])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path}: no channel rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path}: rows have differing lengths {sorted(widths)}")
    return as_channel(rows)


def save_channel_csv(path, channel) -> None:
    w = as_channel(channel)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in w:
            writer.writerow([repr(float(x)) for x in row])
