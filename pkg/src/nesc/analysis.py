"""Diagnostics: Lyapunov function, gradient and monotonicity checks,
dither-average validation, measurement noise and price histograms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Optional, Sequence

import numpy as np

from nesc.controllers import EscParams, EscState, GrState, TWO_PI, dither_estimate
from nesc.games import GameSpec, pseudogradient
from nesc.sim import Trajectory

MONOTONICITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Lyapunov function of the reduced flow


def _zu(state):
    if isinstance(state, (GrState, EscState)):
        return np.asarray(state.z, dtype=float), np.asarray(state.u, dtype=float)
    z, u = state[0], state[1]
    return np.asarray(z, dtype=float), np.asarray(u, dtype=float)


def _weights(params: EscParams, m: int, dims=None) -> np.ndarray:
    dims = (1,) * params.n_agents if dims is None else dims
    if sum(dims) != m:
        raise ValueError(f"agent dims {dims} do not cover {m} channels")
    k = np.repeat(params.gamma_tilde * params.epsilon_tilde, dims)
    return 1.0 / k


def lyapunov_value(state, u_star, params: EscParams, dims=None) -> float:
    """``V = 1/2 |z - u*|_W^2 + 1/2 |u - u*|_W^2`` with ``W = diag(1 / (gamma~ eps~))``.

    ``state`` is a :class:`GrState`, an :class:`EscState` (its ``(z, u)``
    part is used) or a ``(z, u)`` pair; leading batch axes broadcast.
    """
    if u_star is None:
        raise ValueError("lyapunov_value needs a known equilibrium")
    z, u = _zu(state)
    w = _weights(params, z.shape[-1], dims)
    dz, du = z - u_star, u - u_star
    return 0.5 * ((w * dz * dz).sum(axis=-1) + (w * du * du).sum(axis=-1))


def lyapunov_rate(state, game: GameSpec, params: EscParams | None = None) -> float:
    """Closed-form ``dV/dt`` along the reduced golden-ratio flow.

    ``-|u - z|^2 - <u - u*, F(u) - F(u*)>``. The gain weights in ``V`` cancel
    the flow's gains, so ``params`` does not enter; it is accepted for a
    uniform call signature. Non-positive whenever ``F`` is monotone.
    """
    if game.known_ne is None:
        raise ValueError(f"game {game.name!r} has no known equilibrium")
    z, u = _zu(state)
    star = game.known_ne
    gap = u - z
    drift = pseudogradient(game, u) - pseudogradient(game, star)
    return -(gap * gap).sum(axis=-1) - ((u - star) * drift).sum(axis=-1)


def lyapunov_derivative(state, velocity, u_star, params: EscParams, dims=None) -> float:
    """``<grad V(state), velocity>`` for any vector field on ``(z, u)``.

    Used for flows whose rate has no closed form, e.g. the projected flow.
    """
    z, u = _zu(state)
    vz, vu = _zu(velocity)
    w = _weights(params, z.shape[-1], dims)
    return (w * (z - u_star) * vz).sum(axis=-1) + (w * (u - u_star) * vu).sum(axis=-1)


# ---------------------------------------------------------------------------
# pseudogradient oracles


def finite_diff_pseudogradient(game: GameSpec, u, step: float = 1e-5) -> np.ndarray:
    """Central differences of each agent's cost in its own coordinates."""
    if step <= 0:
        raise ValueError("step must be positive")
    u = game.check_action(u)
    m = game.m
    owner = game.channel_agent
    shift = step * np.eye(m)
    plus = game.costs(u[..., None, :] + shift)
    minus = game.costs(u[..., None, :] - shift)
    rows = np.arange(m)
    return (plus[..., rows, owner] - minus[..., rows, owner]) / (2.0 * step)


@dataclass
class MonotonicityReport:
    min_inner_product: float
    violating_pair: Optional[tuple[np.ndarray, np.ndarray]]
    n_pairs: int

    @property
    def violated(self) -> bool:
        return self.violating_pair is not None

    def __str__(self):
        status = "VIOLATED" if self.violated else "ok"
        return f"monotonicity {status} min_inner_product={self.min_inner_product:.3e} pairs={self.n_pairs}"


def monotonicity_probe(game: GameSpec, n_pairs: int = 1000, box=(-10.0, 10.0), seed: int = 0) -> MonotonicityReport:
    """Sample ``<u - v, F(u) - F(v)>`` over random pairs in a box."""
    rng = np.random.default_rng(seed)
    lo, hi = box
    u = rng.uniform(lo, hi, size=(n_pairs, game.m))
    v = rng.uniform(lo, hi, size=(n_pairs, game.m))
    inner = ((u - v) * (pseudogradient(game, u) - pseudogradient(game, v))).sum(axis=-1)
    k = int(np.argmin(inner))
    worst = float(inner[k])
    pair = (u[k], v[k]) if worst < -MONOTONICITY_TOL else None
    return MonotonicityReport(worst, pair, n_pairs)


# ---------------------------------------------------------------------------
# averaging over the oscillator flow


def common_period(kappa: Sequence[float], max_denominator: int = 10_000, irrational_periods: int = 1000):
    """Averaging window for the dither frequencies.

    Returns ``(T, exact)``. Commensurate frequencies share the exact period
    ``lcm(q_j) / gcd(p_j)`` for ``kappa_j = p_j / q_j``; otherwise the window
    is ``irrational_periods`` periods of the slowest frequency and the
    average carries an ``O(1/T)`` remainder.
    """
    fracs = [Fraction(k).limit_denominator(max_denominator) for k in kappa]
    if all(abs(float(f) - k) <= 1e-12 * max(1.0, k) for f, k in zip(fracs, kappa)):
        num = reduce(math.gcd, (f.numerator for f in fracs))
        den = reduce(math.lcm, (f.denominator for f in fracs))
        return den / num, True
    return irrational_periods / min(kappa), False


def oscillator_path(times, kappa, phases=None) -> np.ndarray:
    """Closed-form oscillator state ``mu(t)`` for every time in ``times``."""
    kappa = np.asarray(kappa, dtype=float)
    phases = np.zeros_like(kappa) if phases is None else np.asarray(phases, dtype=float)
    ang = phases + TWO_PI * np.outer(times, kappa)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1).reshape(len(times), -1)


Estimator = Callable[[GameSpec, np.ndarray, np.ndarray, EscParams], np.ndarray]


def dither_average(game: GameSpec, u, params: EscParams, quadrature_steps: int = 4096,
                   estimator: Optional[Estimator] = None, phases=None) -> np.ndarray:
    """Trapezoidal average of the dither estimate over one common oscillator period at fixed ``u``."""
    estimator = estimator or dither_estimate
    period, _ = common_period(params.kappa)
    t = np.linspace(0.0, period, quadrature_steps + 1)
    mu = oscillator_path(t, params.kappa, phases)
    u = np.broadcast_to(np.asarray(u, dtype=float), (len(t), game.m))
    samples = estimator(game, u, mu, params)
    return np.trapezoid(samples, t, axis=0) / period


def dither_average_error(game: GameSpec, u, params: EscParams, quadrature_steps: int = 4096,
                         estimator: Optional[Estimator] = None) -> float:
    """``|avg_t F~(u, mu(t)) - F(u)|``: how far the dithered estimate is from the pseudogradient on average."""
    avg = dither_average(game, u, params, quadrature_steps, estimator)
    return float(np.linalg.norm(avg - pseudogradient(game, u)))


# ---------------------------------------------------------------------------
# measurement noise


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


def run_seeds(master: int, n: int) -> list[list[int]]:
    """Independent per-run seed material derived from ``(master, run index)``."""
    return [[int(master), i] for i in range(n)]


class NoisyChannel:
    """Cost measurements with additive ``N(0, sigma^2)`` noise.

    Each run owns its own generator. With a list of seeds the channel serves
    a batch: inputs of shape ``(B, m)`` get row ``b`` noise from stream
    ``b``, and ``sigma`` may then be per row. Draws are buffered in blocks,
    which does not change the streams.
    """

    def __init__(self, game: GameSpec, sigma, seeds, agents=None, block: int = 4096):
        self.game = game
        self.batched = not isinstance(seeds, (int, np.integer))
        seed_list = list(seeds) if self.batched else [seeds]
        sig = np.asarray(sigma, dtype=float)
        if np.any(sig < 0):
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        if sig.ndim == 1 and (not self.batched or sig.size != len(seed_list)):
            raise ValueError("per-run sigma needs one entry per seed")
        self.sigma = sig if sig.ndim else float(sig)
        self.rngs = [np.random.default_rng(s) for s in seed_list]
        mask = np.ones(game.n_agents)
        if agents is not None:
            mask[:] = 0.0
            mask[list(agents)] = 1.0
        self.scale = sig[..., None] * mask
        self.silent = not np.any(sig > 0)
        self.block = block
        self._buf = None
        self._pos = block

    def draw(self) -> np.ndarray:
        if self._pos == self.block:
            n = self.game.n_agents
            self._buf = np.stack([r.standard_normal((self.block, n)) for r in self.rngs], axis=1)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out if self.batched else out[0]

    def __call__(self, u):
        clean = self.game.costs(u)
        if self.silent:
            return clean
        noise = self.draw()
        if noise.shape != clean.shape:
            raise ValueError(f"noisy channel serves shape {noise.shape}, got costs of shape {clean.shape}")
        return clean + self.scale * noise


def noisy_cost_channel(game: GameSpec, noise: NoiseConfig, agents=None) -> NoisyChannel:
    """Single-run noisy measurement channel; ``sigma = 0`` reproduces ``game.costs`` exactly."""
    return NoisyChannel(game, noise.sigma, noise.seed, agents)


# ---------------------------------------------------------------------------
# histograms


@dataclass
class Histogram:
    bin_width: float
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([f"{lo:.17g}", f"{hi:.17g}", int(c)])


def tail_samples(traj: Trajectory, channel: str, tail_seconds: float, sample_period: float) -> np.ndarray:
    """Channel values on the grid ``T - tail, T - tail + period, ..., T`` (endpoints included)."""
    end = traj.times[-1]
    n = int(round(tail_seconds / sample_period))
    targets = end - tail_seconds + sample_period * np.arange(n + 1)
    idx = np.searchsorted(traj.times, targets - 1e-6)
    ok = (idx < len(traj.times)) & (targets >= traj.times[0] - 1e-6)
    ok[ok] &= np.abs(traj.times[idx[ok]] - targets[ok]) <= 1e-6
    if not ok.all():
        raise ValueError(f"trajectory is not recorded on the {sample_period} s grid over the last {tail_seconds} s")
    return traj.channels[channel][idx]


def histogram(values, bin_width: float) -> Histogram:
    """Bins ``[k w, (k+1) w)`` anchored at integer multiples of ``w``."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("no samples to bin")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    k = np.floor(values / bin_width).astype(np.int64)
    first = k.min()
    counts = np.bincount(k - first)
    edges = (first + np.arange(len(counts) + 1)) * bin_width
    return Histogram(bin_width, edges, counts)


def price_histogram(trajectories: Sequence[Trajectory], channel: str = "price", tail_seconds: float = 250.0,
                    sample_period: float = 1.0, bin_width: float = 0.05) -> Histogram:
    """Pool the sampled tails of several runs and bin them."""
    if not trajectories:
        raise ValueError("no trajectories given")
    pooled = np.concatenate([tail_samples(tr, channel, tail_seconds, sample_period) for tr in trajectories])
    return histogram(pooled, bin_width)
