"""Fixed-step explicit integration with trajectory recording."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e9
METHODS = ("rk4", "euler")

Rhs = Callable[[np.ndarray], np.ndarray]
Observer = Callable[[np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """The integrator hit a state it cannot continue from."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    step: float = 1e-2
    horizon: float = 1.0
    record_every: int = 1
    seed: int = 0
    renormalize_every: int = 1000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.step > 0 and self.horizon > 0):
            raise ValueError("step and horizon must be positive")
        if self.step > self.horizon:
            raise ValueError(f"step {self.step} exceeds horizon {self.horizon}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))


@dataclass
class Trajectory:
    """Recorded solution: ``states[k]`` is the state at ``times[k]``.

    For batched runs ``states`` has shape ``(K, B, n)`` and every channel
    ``(K, B)``.
    """

    times: np.ndarray
    states: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    state_names: list[str] = field(default_factory=list)
    diverged: bool = False

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def window(self, start: float, stop: float = np.inf) -> np.ndarray:
        """Boolean mask of recorded times in ``[start, stop]`` (with a hair of float slack)."""
        return (self.times >= start - 1e-9) & (self.times <= stop + 1e-9)

    def run(self, b: int) -> "Trajectory":
        """Slice one member out of a batched trajectory."""
        return Trajectory(
            self.times,
            self.states[:, b],
            {k: v[:, b] for k, v in self.channels.items()},
            self.state_names,
            self.diverged,
        )

    def to_csv(self, path) -> None:
        if self.states.ndim != 2:
            raise ValueError("only unbatched trajectories serialize to CSV")
        names = self.state_names or [f"x{j + 1}" for j in range(self.states.shape[1])]
        cols = list(self.channels)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names, *cols])
            for k, t in enumerate(self.times):
                row = [t, *self.states[k], *(self.channels[c][k] for c in cols)]
                w.writerow([f"{float(v):.17g}" for v in row])


def read_csv(path) -> Trajectory:
    """Load a CSV written by :meth:`Trajectory.to_csv`; every column after ``t`` lands in ``states``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    return Trajectory(data[:, 0], data[:, 1:], {}, header[1:])


def renormalize_pairs(mu: np.ndarray) -> np.ndarray:
    """Rescale every consecutive ``(c, s)`` pair of ``mu`` to unit norm."""
    pairs = np.asarray(mu, dtype=float).reshape(*np.shape(mu)[:-1], -1, 2)
    norms = np.sqrt((pairs**2).sum(axis=-1, keepdims=True))
    if np.any(norms < 0.5) or np.any(norms > 2.0):
        raise IntegrationError(f"oscillator pair norm left [0.5, 2]: {norms.min():.3g}..{norms.max():.3g}")
    return (pairs / norms).reshape(np.shape(mu))


def renormalize_dither(state):
    """Return ``state`` with its oscillator pairs projected back onto the unit circle."""
    from nesc.controllers import EscState

    return EscState(state.z, state.u, state.xi, renormalize_pairs(state.mu))


def integrate(
    rhs: Rhs,
    x0,
    config: SolverConfig,
    observers: Optional[Mapping[str, Observer]] = None,
    *,
    dither: Optional[slice] = None,
    state_names: Sequence[str] = (),
    affine: bool = False,
) -> Trajectory:
    """Integrate ``x' = rhs(x)`` from ``x0`` over ``[0, config.horizon]``.

    Steps ``k = 0 .. n`` are recorded whenever ``k % record_every == 0`` and
    always at ``k = n``. Observers are evaluated once, on the stacked
    recorded states, so they must broadcast over leading axes.
    When ``dither`` names the oscillator slice of the state, those pairs are
    renormalized every ``config.renormalize_every`` steps. A state leaving
    the ``1e9`` sup-norm ball (or turning non-finite) stops the run and the
    partial record comes back with ``diverged=True``.
    ``affine=True`` promises ``rhs(x) = x @ L + c`` (broadcasting over rows);
    the step map is then precomputed once and applied as a single product.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    observers = dict(observers or {})
    h, n, stride = config.step, config.n_steps, config.record_every
    renorm = config.renormalize_every if dither is not None else 0

    if config.method == "rk4":
        h2, h6 = h / 2.0, h / 6.0

        def advance(x):
            k1 = rhs(x)
            k2 = rhs(x + h2 * k1)
            k3 = rhs(x + h2 * k2)
            k4 = rhs(x + h * k3)
            return x + h6 * (k1 + 2.0 * (k2 + k3) + k4)
    else:
        def advance(x):
            return x + h * rhs(x)

    if affine:
        # one step of an affine field is itself affine: x -> x @ P + q
        q = advance(np.zeros(x.shape[-1]))
        P = advance(np.eye(x.shape[-1])) - q

        def advance(x):
            return x @ P + q

    times, states = [0.0], [x.copy()]
    diverged = False
    for k in range(1, n + 1):
        x = advance(x)
        if renorm and k % renorm == 0:
            x[..., dither] = renormalize_pairs(x[..., dither])
        if not np.abs(x).max() <= DIVERGENCE_THRESHOLD:
            diverged = True
            break
        if k % stride == 0 or k == n:
            times.append(k * h)
            states.append(x)

    if diverged:
        logger.warning("integration diverged at t=%.4g", k * h)
    states = np.array(states)
    channels = {name: np.asarray(obs(states), dtype=float) for name, obs in observers.items()}
    return Trajectory(np.array(times), states, channels, list(state_names), diverged)
