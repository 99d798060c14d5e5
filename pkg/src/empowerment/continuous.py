"""Continuous empowerment: Monte Carlo Blahut-Arimoto and the quasi-linear
Gaussian (QLG) route through whitening, SVD and water-filling.

Subchannel SNR convention: a subchannel with singular value ``s`` and power
``P_i`` contributes ``0.5 * log2(1 + s * P_i)``. The gain enters linearly,
not squared. Everything that depends on this lives in :func:`subchannel_gain`.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .infotheory import LN2, PROB_FLOOR, ValidationError

SINGULAR_CUTOFF = 1e-10
NOISE_CUTOFF = 1e-12


class InfiniteCapacityError(ValidationError):
    """Noise covariance has a (numerically) noiseless direction."""


# -- data types -------------------------------------------------------------


@dataclass(frozen=True)
class GaussianActionModel:
    """Per-action Gaussian outcome model s | a_v ~ N(means[v], diag(variances[v]))."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.asarray(self.variances, dtype=float)
        if variances.ndim == 0:
            variances = np.full_like(means, float(variances))
        variances = np.atleast_2d(variances)
        if variances.shape == (1, means.shape[1]) and means.shape[0] > 1:
            variances = np.repeat(variances, means.shape[0], axis=0)
        if means.ndim != 2 or means.shape != variances.shape:
            raise ValidationError(
                f"means {means.shape} and variances {variances.shape} must both be (n_actions, dim)"
            )
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(variances)):
            raise ValidationError("Gaussian action model has non-finite entries")
        if np.any(variances <= 0):
            raise ValidationError("all variances must be > 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_actions(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_density(self, samples: np.ndarray) -> np.ndarray:
        """log p(sample | a_mu) for samples of shape (..., dim); returns (..., n_actions)."""
        x = samples[..., None, :]
        z = (x - self.means) ** 2 / self.variances
        norm = np.sum(np.log(2 * np.pi * self.variances), axis=-1)
        return -0.5 * (np.sum(z, axis=-1) + norm)

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianActionModel":
        return cls(np.asarray(doc["means"], float), np.asarray(doc["variances"], float))


@dataclass(frozen=True)
class MCParams:
    n_mc: int = 1000
    epsilon: float = 1e-6
    max_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValidationError("n_mc must be >= 1")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class LinearGaussianChannel:
    """S = T A + Z with Z ~ N(0, noise_cov) and total input power ``power``."""

    transform: np.ndarray
    noise_cov: np.ndarray
    power: float

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.transform, dtype=float))
        k = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if k.shape != (t.shape[0], t.shape[0]):
            raise ValidationError(
                f"noise_cov must be {t.shape[0]}x{t.shape[0]} for a {t.shape} transform, got {k.shape}"
            )
        if not np.allclose(k, k.T, atol=1e-12, rtol=0):
            raise ValidationError("noise_cov is not symmetric within 1e-12")
        lam_min = np.linalg.eigvalsh((k + k.T) / 2).min()
        if lam_min <= 0:
            raise ValidationError("noise_cov is not positive definite")
        if lam_min < NOISE_CUTOFF:
            raise InfiniteCapacityError(
                f"noise_cov eigenvalue {lam_min:.3g} < {NOISE_CUTOFF}: noiseless subchannel, infinite capacity"
            )
        if not self.power > 0:
            raise ValidationError("power must be > 0")
        object.__setattr__(self, "transform", t)
        object.__setattr__(self, "noise_cov", k)
        object.__setattr__(self, "power", float(self.power))

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.tolist(),
            "noise_cov": self.noise_cov.tolist(),
            "power": self.power,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearGaussianChannel":
        return cls(np.asarray(doc["transform"], float), np.asarray(doc["noise_cov"], float),
                   float(doc["power"]))


@dataclass(frozen=True)
class WaterFillingResult:
    capacity_bits: float
    allocations: np.ndarray
    level: float
    warnings: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class QLGResult:
    capacity_bits: float
    water_filling: WaterFillingResult
    singular_values: np.ndarray
    whitened_transform: np.ndarray

    def to_dict(self) -> dict:
        return {
            "capacity_bits": self.capacity_bits,
            "allocations": self.water_filling.allocations.tolist(),
            "water_level": self.water_filling.level,
            "singular_values": self.singular_values.tolist(),
        }


@dataclass(frozen=True)
class MCResult:
    capacity_bits: float
    optimal_input: np.ndarray
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "capacity_bits": self.capacity_bits,
            "optimal_input": self.optimal_input.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def load_json_model(path):
    """Load a LinearGaussianChannel or GaussianActionModel from a JSON file."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "transform" in doc:
        return LinearGaussianChannel.from_dict(doc)
    if "means" in doc:
        return GaussianActionModel.from_dict(doc)
    raise ValidationError(f"{path}: neither a linear-Gaussian channel nor a Gaussian action model")


# -- Monte Carlo Blahut-Arimoto ---------------------------------------------


def draw_samples(model: GaussianActionModel, n_mc: int, seed: int) -> np.ndarray:
    """Samples of shape (n_actions, n_mc, dim); one child stream per action."""
    children = np.random.SeedSequence(seed).spawn(model.n_actions)
    out = np.empty((model.n_actions, n_mc, model.dim))
    for v, child in enumerate(children):
        rng = np.random.default_rng(child)
        out[v] = model.means[v] + np.sqrt(model.variances[v]) * rng.standard_normal((n_mc, model.dim))
    return out


def mc_empowerment(model: GaussianActionModel, params: MCParams = MCParams()) -> MCResult:
    """Empowerment of a finite set of Gaussian actions by Monte Carlo BA.

    Samples are drawn once per action, all cross densities
    p(s_{v,j} | a_mu) are tabulated up front, and the BA iteration then
    reuses them with the Monte Carlo estimate of d_v.
    """
    n = model.n_actions
    samples = draw_samples(model, params.n_mc, params.seed)
    # dens[v, j, mu] = p(s_{v,j} | a_mu), floored before any log
    dens = np.maximum(np.exp(model.log_density(samples)), PROB_FLOOR)
    own = dens[np.arange(n), :, np.arange(n)]  # (n, n_mc)
    log_own = np.log(own)

    def divergences(p):
        mix = np.maximum(dens @ p, PROB_FLOOR)
        return np.mean(log_own - np.log(mix), axis=1)

    p = np.full(n, 1.0 / n)
    d = divergences(p)
    estimate = float(p @ d) / LN2
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iter + 1):
        p = p * np.exp(d - d.max())
        p /= p.sum()
        p = np.maximum(p, PROB_FLOOR)
        p /= p.sum()
        d = divergences(p)
        new_estimate = float(p @ d) / LN2
        delta = abs(new_estimate - estimate)
        estimate = new_estimate
        if delta < params.epsilon:
            converged = True
            break
    return MCResult(max(estimate, 0.0), p, iterations, converged)


# -- QLG: whitening, SVD, water-filling --------------------------------------


def whiten(transform, noise_cov) -> np.ndarray:
    """Rewrite S = T'A + Z', Z' ~ N(0, K) as an equivalent channel with unit noise.

    With K = U diag(lam) U^T the returned transform is diag(lam)^(-1/2) U^T T'.
    """
    t = np.atleast_2d(np.asarray(transform, dtype=float))
    k = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    k = (k + k.T) / 2
    lam, u = np.linalg.eigh(k)
    if lam.min() < NOISE_CUTOFF:
        raise InfiniteCapacityError(
            f"noise covariance has eigenvalue {lam.min():.3g} < {NOISE_CUTOFF}: "
            "a noiseless subchannel gives infinite capacity"
        )
    # fix eigenvector signs (largest entry positive) so results are reproducible
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
    u = u * np.where(flip == 0, 1.0, flip)
    return (u.T @ t) / np.sqrt(lam)[:, None]


def subchannel_gain(singular_values: np.ndarray) -> np.ndarray:
    """Effective SNR per unit power of each parallel subchannel."""
    return np.asarray(singular_values, dtype=float)


def _capacity_bits(gains: np.ndarray, allocations: np.ndarray) -> float:
    return float(0.5 * np.sum(np.log2(1.0 + gains * allocations)))


def water_filling(singular_values, power: float) -> WaterFillingResult:
    """Split ``power`` over parallel unit-noise subchannels to maximize capacity.

    Channels are filled in order of increasing inverse gain ``1/g``; the water
    level ``mu`` is the smallest value with ``sum(max(mu - 1/g, 0)) == power``.
    Channels with singular value below 1e-10 get no power.
    """
    sv = np.asarray(singular_values, dtype=float).ravel()
    if sv.size == 0:
        raise ValidationError("need at least one subchannel")
    if np.any(sv < 0) or not np.all(np.isfinite(sv)):
        raise ValidationError("singular values must be finite and >= 0")
    if not power > 0:
        raise ValidationError("power must be > 0")
    gains = subchannel_gain(np.where(sv < SINGULAR_CUTOFF, 0.0, sv))
    alloc = np.zeros_like(gains)
    active = np.flatnonzero(gains > 0)
    if active.size == 0:
        msg = "all subchannels have zero gain; capacity is 0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        alloc[0] = power
        return WaterFillingResult(0.0, alloc, float("inf"), (msg,))

    inv = 1.0 / gains[active]
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    # largest k with mu_k = (P + sum of first k inverse gains) / k above the k-th floor
    cums = np.cumsum(inv_sorted)
    ks = np.arange(1, inv_sorted.size + 1)
    levels = (power + cums) / ks
    k = int(np.max(ks[levels > inv_sorted]))
    level = float(levels[k - 1])
    filled = np.zeros(inv_sorted.size)
    filled[:k] = level - inv_sorted[:k]
    alloc_active = np.empty_like(filled)
    alloc_active[order] = filled
    alloc[active] = alloc_active
    return WaterFillingResult(_capacity_bits(gains, alloc), alloc, level)


def qlg_empowerment(channel: LinearGaussianChannel) -> QLGResult:
    """Capacity of S = T A + Z under the total power constraint, in bits."""
    tw = whiten(channel.transform, channel.noise_cov)
    sv = np.linalg.svd(tw, compute_uv=False)
    wf = water_filling(sv, channel.power)
    return QLGResult(wf.capacity_bits, wf, sv, tw)


def qlg_from_singular_values(singular_values, power: float) -> float:
    return water_filling(singular_values, power).capacity_bits


def batch_qlg_capacity(singular_values: np.ndarray, power: float) -> np.ndarray:
    """Vectorized water-filling capacity for many problems, shape (N, k) -> (N,)."""
    sv = np.asarray(singular_values, dtype=float)
    gains = subchannel_gain(np.where(sv < SINGULAR_CUTOFF, 0.0, sv))
    with np.errstate(divide="ignore"):
        inv = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    inv_sorted = np.sort(inv, axis=1)
    finite = np.isfinite(inv_sorted)
    cums = np.cumsum(np.where(finite, inv_sorted, 0.0), axis=1)
    ks = np.arange(1, sv.shape[1] + 1)
    levels = (power + cums) / ks
    ok = finite & (levels > inv_sorted)
    k = np.where(ok.any(axis=1), sv.shape[1] - np.argmax(ok[:, ::-1], axis=1), 0)
    level = np.where(k > 0, np.take_along_axis(levels, np.maximum(k - 1, 0)[:, None], 1)[:, 0], 0.0)
    mask = ks[None, :] <= k[:, None]
    safe_inv = np.where(mask, inv_sorted, 1.0)
    with np.errstate(divide="ignore"):
        terms = np.where(mask, np.log2(level[:, None] / safe_inv), 0.0)
    return 0.5 * terms.sum(axis=1)


def principal_axis_actions(channel: LinearGaussianChannel, points_per_axis: int = 5) -> GaussianActionModel:
    """Discrete action set on the principal axes of the water-filling input covariance.

    Along every input direction that receives power ``P_i`` a centred uniform
    lattice of ``points_per_axis`` points with variance ``P_i`` is placed;
    actions are the Cartesian product. Outcomes are returned in the whitened
    sensor space, so every action has unit noise variance.
    """
    if points_per_axis < 2:
        raise ValidationError("points_per_axis must be >= 2")
    tw = whiten(channel.transform, channel.noise_cov)
    _, sv, vt = np.linalg.svd(tw, full_matrices=False)
    wf = water_filling(sv, channel.power)
    m = points_per_axis
    axes, levels = [], []
    for i in np.flatnonzero(wf.allocations > 0):
        if sv[i] < SINGULAR_CUTOFF:
            continue
        half = np.sqrt(3.0 * wf.allocations[i] * (m - 1) / (m + 1))
        axes.append(vt[i])
        levels.append(np.linspace(-half, half, m))
    if not axes:
        means = np.zeros((1, tw.shape[0]))
    else:
        grid = np.stack(np.meshgrid(*levels, indexing="ij"), axis=-1).reshape(-1, len(axes))
        inputs = grid @ np.array(axes)
        means = inputs @ tw.T
    return GaussianActionModel(means, np.ones_like(means))
