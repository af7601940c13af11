"""Right-hand sides of the seeking dynamics and their comparison flows.

All vector fields are pure functions of a flat state array. Leading axes
are treated as a batch, which lets the noise study push hundreds of
independent runs through one integration.

Flat layouts (``m`` = total action dimension):

=====================  =================================
controller             state
=====================  =================================
nesc                   z, u, xi, mu   (5m)
baseline-filtered      u, xi, mu      (4m)
baseline-unfiltered    u, mu          (3m)
gr-flow, projected-gr  z, u           (2m)
nominal-average        z, u, xi       (3m)
=====================  =================================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from nesc.games import CostFn, GameSpec, pseudogradient

TWO_PI = 2.0 * np.pi
KAPPA_TOL = 1e-12
ZEROTH, FIRST = "zeroth", "first"


# ---------------------------------------------------------------------------
# parameters and states


def _per_agent(values, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,):
        raise ValueError(f"{name} needs {n} entries, got {arr.size}")
    return arr


@dataclass(frozen=True)
class EscParams:
    """Tuning of the seeking controller.

    ``gamma``, ``epsilon``, ``amplitudes`` and ``oracle`` are per agent;
    ``kappa`` is per scalar action channel. Agents in ``"first"`` oracle mode
    read their analytic partial gradient instead of a dither estimate; their
    channels are never perturbed and their ``amplitudes`` entry is unused.
    ``kappa`` may list the dithered channels only, in which case the
    oscillators of first-order channels stand still.
    """

    gamma: tuple[float, ...]
    epsilon: tuple[float, ...]
    amplitudes: tuple[float, ...]
    kappa: tuple[float, ...]
    oracle: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(np.atleast_1d(self.gamma))
        for name in ("gamma", "epsilon", "amplitudes"):
            arr = _per_agent(getattr(self, name), n, name)
            if not np.all(arr > 0):
                raise ValueError(f"{name} entries must be strictly positive, got {arr.tolist()}")
            object.__setattr__(self, name, tuple(arr.tolist()))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if not np.all(kappa > 0):
            raise ValueError(f"kappa entries must be strictly positive, got {kappa.tolist()}")
        object.__setattr__(self, "kappa", tuple(kappa.tolist()))
        oracle = tuple(self.oracle) or (ZEROTH,) * n
        if len(oracle) != n or any(o not in (ZEROTH, FIRST) for o in oracle):
            raise ValueError(f"oracle must list {n} entries of 'zeroth'/'first', got {oracle!r}")
        object.__setattr__(self, "oracle", oracle)

    @classmethod
    def uniform(cls, n_agents, gamma, epsilon, amplitude, kappa, oracle=None) -> "EscParams":
        return cls(
            gamma=(gamma,) * n_agents,
            epsilon=(epsilon,) * n_agents,
            amplitudes=(amplitude,) * n_agents,
            kappa=tuple(np.atleast_1d(kappa)),
            oracle=tuple(oracle) if oracle else (),
        )

    @property
    def n_agents(self) -> int:
        return len(self.gamma)

    @property
    def gamma_bar(self) -> float:
        return max(self.gamma)

    @property
    def epsilon_bar(self) -> float:
        return max(self.epsilon)

    @property
    def a_bar(self) -> float:
        return max(self.amplitudes)

    @property
    def gamma_tilde(self) -> np.ndarray:
        return np.array(self.gamma) / self.gamma_bar

    @property
    def epsilon_tilde(self) -> np.ndarray:
        return np.array(self.epsilon) / self.epsilon_bar

    def replace(self, **changes) -> "EscParams":
        fields = dict(gamma=self.gamma, epsilon=self.epsilon, amplitudes=self.amplitudes,
                      kappa=self.kappa, oracle=self.oracle)
        fields.update(changes)
        return EscParams(**fields)

    def channels(self, game: GameSpec) -> "ChannelGains":
        """Expand the per-agent gains onto the scalar channels of ``game``."""
        if self.n_agents != game.n_agents:
            raise ValueError(f"params describe {self.n_agents} agents, game has {game.n_agents}")
        owner = game.channel_agent
        first = np.array([o == FIRST for o in self.oracle])[owner]
        if len(self.kappa) == game.m:
            kappa = np.array(self.kappa)
        elif len(self.kappa) == int((~first).sum()):
            kappa = np.zeros(game.m)
            kappa[~first] = self.kappa
        else:
            raise ValueError(
                f"kappa needs one entry per action channel ({game.m}) or per dithered channel "
                f"({int((~first).sum())}), got {len(self.kappa)}"
            )
        active = kappa[~first]
        if active.size > 1:
            gaps = np.abs(active[:, None] - active[None, :]) + np.eye(active.size)
            if gaps.min() <= KAPPA_TOL:
                raise ValueError(f"dither frequencies must be pairwise distinct, got {active.tolist()}")
        amp = np.array(self.amplitudes)[owner]
        gamma = np.array(self.gamma)[owner]
        eps = np.array(self.epsilon)[owner]
        return ChannelGains(
            gamma=gamma,
            gamma_eps=gamma * eps,
            amplitude=np.where(first, 0.0, amp),
            gain=np.where(first, 0.0, 2.0 / amp),
            omega=TWO_PI * kappa,
            first_order=first,
            gamma_tilde=self.gamma_tilde[owner],
            eps_tilde=self.epsilon_tilde[owner],
            eps_bar=self.epsilon_bar,
        )


@dataclass(frozen=True)
class ChannelGains:
    """Per-channel arrays derived from :class:`EscParams` for one game."""

    gamma: np.ndarray
    gamma_eps: np.ndarray
    amplitude: np.ndarray
    gain: np.ndarray
    omega: np.ndarray
    first_order: np.ndarray
    gamma_tilde: np.ndarray
    eps_tilde: np.ndarray
    eps_bar: float

    @property
    def reduced_gain(self) -> np.ndarray:
        return self.gamma_tilde * self.eps_tilde


def random_kappa(n: int, rng: np.random.Generator, low=0.0, high=1.0, min_gap=0.01) -> np.ndarray:
    """Draw ``n`` dither frequencies uniformly, redrawing near-duplicates (gap < ``min_gap``) and zeros."""
    out = []
    while len(out) < n:
        k = float(rng.uniform(low, high))
        if k > min_gap and all(abs(k - o) >= min_gap for o in out):
            out.append(k)
    return np.array(out)


@dataclass
class EscState:
    """Full controller state: golden-ratio auxiliary ``z``, action ``u``,
    filtered estimate ``xi`` and the oscillator pairs ``mu``."""

    z: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    mu: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z, self.u, self.xi, self.mu], axis=-1)

    @classmethod
    def from_flat(cls, x: np.ndarray, m: int) -> "EscState":
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 5 * m:
            raise ValueError(f"flat ESC state must have length {5 * m}, got {x.shape[-1]}")
        return cls(x[..., :m], x[..., m:2 * m], x[..., 2 * m:3 * m], x[..., 3 * m:])

    @classmethod
    def initial(cls, m: int, u0=None, z0=None, xi0=None, phases=None) -> "EscState":
        """Zero defaults; oscillators start at ``(cos phase, sin phase)``, phase 0 unless given."""
        u = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float).copy()
        z = u.copy() if z0 is None else np.asarray(z0, dtype=float).copy()
        xi = np.zeros(m) if xi0 is None else np.asarray(xi0, dtype=float).copy()
        return cls(z, u, xi, oscillator_start(m, phases))


@dataclass
class GrState:
    """State of the reduced golden-ratio flow."""

    z: np.ndarray
    u: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z, self.u], axis=-1)

    @classmethod
    def from_flat(cls, x: np.ndarray, m: int) -> "GrState":
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2 * m:
            raise ValueError(f"flat GR state must have length {2 * m}, got {x.shape[-1]}")
        return cls(x[..., :m], x[..., m:])


def oscillator_start(m: int, phases=None) -> np.ndarray:
    phases = np.zeros(m) if phases is None else np.asarray(phases, dtype=float)
    if phases.shape != (m,):
        raise ValueError(f"need {m} dither phases, got {phases.shape}")
    return np.stack([np.cos(phases), np.sin(phases)], axis=-1).reshape(2 * m)


# ---------------------------------------------------------------------------
# constraint sets


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``lower <= x <= upper`` (infinite bounds allowed)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lo > hi):
            raise ValueError("empty box: some lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unconstrained(cls, m: int) -> "BoxSet":
        return cls(np.full(m, -np.inf), np.full(m, np.inf))

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def contains(self, v, tol: float = 1e-12) -> bool:
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))


@dataclass(frozen=True)
class HalfSpace:
    """Closed halfspace ``<normal, x> <= offset``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if not np.any(n):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def project(self, v: np.ndarray) -> np.ndarray:
        excess = np.maximum(v @ self.normal - self.offset, 0.0)
        return v - (excess / (self.normal @ self.normal))[..., None] * self.normal

    def contains(self, v, tol: float = 1e-12) -> bool:
        return bool(np.all(np.asarray(v) @ self.normal <= self.offset + tol))


# ---------------------------------------------------------------------------
# public operations


def dither_signal(mu) -> np.ndarray:
    """First component of every oscillator pair."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] % 2:
        raise ValueError(f"oscillator state must have even length, got {mu.shape[-1]}")
    return mu[..., 0::2]


def _rotation(omega: np.ndarray):
    """Index swap and signed rates with ``mu[..., swap] * rates == 2 pi R_kappa mu``."""
    swap = np.arange(2 * omega.size).reshape(-1, 2)[:, ::-1].ravel()
    rates = np.stack([-omega, omega], axis=-1).ravel()
    return swap, rates


def _rotate(mu: np.ndarray, omega: np.ndarray) -> np.ndarray:
    swap, rates = _rotation(omega)
    return mu[..., swap] * rates


def oscillator_rhs(mu, params: EscParams) -> np.ndarray:
    """``2 pi R_kappa mu``: each pair rotates at ``kappa_j`` revolutions per unit time."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != 2 * len(params.kappa):
        raise ValueError(f"oscillator state needs length {2 * len(params.kappa)}, got {mu.shape[-1]}")
    return _rotate(mu, TWO_PI * np.array(params.kappa))


def _estimate(game: GameSpec, ch: ChannelGains, u, mu, measure: CostFn):
    d = mu[..., 0::2]
    costs = measure(u + ch.amplitude * d)
    if costs.shape[-1] != u.shape[-1]:
        costs = costs[..., game.channel_agent]
    est = ch.gain * costs * d
    if ch.first_order.any():
        est = np.where(ch.first_order, pseudogradient(game, u), est)
    return est


def dither_estimate(game: GameSpec, u, mu, params: EscParams, measure: Optional[CostFn] = None) -> np.ndarray:
    """Pseudogradient estimate from one (possibly noisy) cost measurement per agent.

    Block ``i`` is ``(2/a_i) J_i(u + A D mu) D mu_i``. ``measure`` defaults to
    the game's exact costs; pass a noisy channel to model sensor noise.
    """
    ch = params.channels(game)
    u = game.check_action(u)
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != 2 * game.m:
        raise ValueError(f"oscillator state needs length {2 * game.m}, got {mu.shape[-1]}")
    return _estimate(game, ch, u, mu, measure or game.costs)


def esc_gr_rhs(state: EscState, game: GameSpec, params: EscParams, measure: Optional[CostFn] = None) -> EscState:
    ctrl = Nesc(game, params, measure)
    return EscState.from_flat(ctrl.rhs(state.flat()), game.m)


def esc_baseline_rhs(state: EscState, game: GameSpec, params: EscParams, filtered: bool,
                     measure: Optional[CostFn] = None) -> EscState:
    """Baseline ESC derivative, reported in :class:`EscState` form.

    ``z`` is not part of either baseline and its derivative is zero; the
    unfiltered variant carries no ``xi`` state either.
    """
    m = game.m
    if filtered:
        ctrl = FilteredBaseline(game, params, measure)
        d = ctrl.rhs(np.concatenate([state.u, state.xi, state.mu], axis=-1))
        return EscState(np.zeros_like(state.z), d[..., :m], d[..., m:2 * m], d[..., 2 * m:])
    ctrl = UnfilteredBaseline(game, params, measure)
    d = ctrl.rhs(np.concatenate([state.u, state.mu], axis=-1))
    return EscState(np.zeros_like(state.z), d[..., :m], np.zeros_like(state.xi), d[..., m:])


def gr_flow_rhs(state: GrState, game: GameSpec, params: EscParams) -> GrState:
    return GrState.from_flat(GrFlow(game, params).rhs(state.flat()), game.m)


def nominal_average_rhs(state, game: GameSpec, params: EscParams):
    """Derivative of the dither-averaged ``(z, u, xi)`` system with exact ``F``."""
    z, u, xi = state
    d = NominalAverage(game, params).rhs(np.concatenate([z, u, xi], axis=-1))
    m = game.m
    return d[..., :m], d[..., m:2 * m], d[..., 2 * m:]


def boundary_layer_rhs(xi, u_frozen, game: GameSpec, params: EscParams) -> np.ndarray:
    """Fast filter with the slow action frozen; decays to ``F(u_frozen)``."""
    ch = params.channels(game)
    return ch.gamma_tilde * (pseudogradient(game, u_frozen) - np.asarray(xi, dtype=float))


def projected_gr_rhs(state: GrState, game: GameSpec, omega) -> GrState:
    return GrState.from_flat(ProjectedGr(game, omega).rhs(state.flat()), game.m)


# ---------------------------------------------------------------------------
# flat controllers


class Controller:
    """A named vector field over a flat state, plus its layout metadata."""

    name = ""
    blocks: tuple[str, ...] = ()
    is_affine = False  # rhs(x) == x @ L + c exactly

    def __init__(self, game: GameSpec):
        self.game = game
        self.m = game.m

    @property
    def size(self) -> int:
        return sum(2 * self.m if b == "mu" else self.m for b in self.blocks)

    def slot(self, block: str) -> slice:
        start = 0
        for b in self.blocks:
            width = 2 * self.m if b == "mu" else self.m
            if b == block:
                return slice(start, start + width)
            start += width
        raise KeyError(f"{self.name} has no {block!r} block")

    def state_names(self) -> list[str]:
        names = []
        for b in self.blocks:
            if b == "mu":
                names += [f"mu{j + 1}_{c}" for j in range(self.m) for c in ("c", "s")]
            else:
                names += [f"{b}{j + 1}" for j in range(self.m)]
        return names

    def action(self, x: np.ndarray) -> np.ndarray:
        return x[..., self.slot("u")]

    def initial(self, u0=None, z0=None, xi0=None, phases=None) -> np.ndarray:
        m = self.m
        u = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float)
        parts = {
            "u": u,
            "z": u if z0 is None else np.asarray(z0, dtype=float),
            "xi": np.zeros(m) if xi0 is None else np.asarray(xi0, dtype=float),
            "mu": oscillator_start(m, phases),
        }
        x = np.concatenate([parts[b] for b in self.blocks])
        if x.shape != (self.size,):
            raise ValueError(f"initial state has shape {x.shape}, expected ({self.size},)")
        return x

    def rhs(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _Dithered(Controller):
    def __init__(self, game, params: EscParams, measure: Optional[CostFn] = None):
        super().__init__(game)
        self.params = params
        self.ch = params.channels(game)
        self.measure = measure or game.costs
        self.swap, self.rates = _rotation(self.ch.omega)
        self._expand = None if game.n_agents == game.m else game.channel_agent
        self._first = self.ch.first_order if self.ch.first_order.any() else None

    def estimate(self, u, mu):
        d = mu[..., 0::2]
        costs = self.measure(u + self.ch.amplitude * d)
        if self._expand is not None:
            costs = costs[..., self._expand]
        est = self.ch.gain * costs * d
        if self._first is not None:
            est = np.where(self._first, self.game.gradient(u), est)
        return est


class Nesc(_Dithered):
    name = "nesc"
    blocks = ("z", "u", "xi", "mu")

    def __init__(self, game, params: EscParams, measure: Optional[CostFn] = None):
        super().__init__(game, params, measure)
        # everything except the gradient estimate is linear: one matmul per call
        m, ch = self.m, self.ch
        lin = np.zeros((5 * m, 5 * m))
        idx = np.arange(m)
        ge = ch.gamma_eps
        lin[idx, idx], lin[idx, m + idx] = -ge, ge
        lin[m + idx, idx], lin[m + idx, m + idx], lin[m + idx, 2 * m + idx] = ge, -ge, -ge
        lin[2 * m + idx, 2 * m + idx] = -ch.gamma
        lin[3 * m + np.arange(2 * m), 3 * m + self.swap] = self.rates
        self._off = np.zeros(5 * m)
        if self._first is not None and game.affine is not None:
            # first-order channels read F_j(u) = (M u + c)_j, which is linear as well
            mat, c = game.affine
            rows = 2 * m + np.flatnonzero(self._first)
            lin[rows, m:2 * m] += ch.gamma[self._first, None] * mat[self._first]
            self._off[rows] = ch.gamma[self._first] * c[self._first]
            self._first = None
        self._lin_t = lin.T.copy()
        self._est = slice(2 * m, 3 * m)

    def rhs(self, x):
        m = self.m
        out = x @ self._lin_t + self._off
        out[..., self._est] += self.ch.gamma * self.estimate(x[..., m:2 * m], x[..., 3 * m:])
        return out


class FilteredBaseline(_Dithered):
    name = "baseline-filtered"
    blocks = ("u", "xi", "mu")

    def rhs(self, x):
        m, ch = self.m, self.ch
        u, xi, mu = x[..., :m], x[..., m:2 * m], x[..., 2 * m:]
        est = self.estimate(u, mu)
        return np.concatenate([-ch.gamma_eps * xi, ch.gamma * (est - xi), mu[..., self.swap] * self.rates], axis=-1)


class UnfilteredBaseline(_Dithered):
    name = "baseline-unfiltered"
    blocks = ("u", "mu")

    def rhs(self, x):
        m, ch = self.m, self.ch
        u, mu = x[..., :m], x[..., m:]
        est = self.estimate(u, mu)
        return np.concatenate([-ch.gamma_eps * est, mu[..., self.swap] * self.rates], axis=-1)


class GrFlow(Controller):
    name = "gr-flow"
    blocks = ("z", "u")

    def __init__(self, game, params: EscParams):
        super().__init__(game)
        self.params = params
        self.k = params.channels(game).reduced_gain
        pseudogradient(game, np.zeros(game.m))
        self._lin = None
        if game.affine is not None:
            # rows: k (u - z) and k (z - u - M u - c)
            mat, off = game.affine
            m, k = self.m, self.k
            eye = np.eye(m)
            lin = np.block([[-eye, eye], [eye, -eye - mat]]) * np.concatenate([k, k])[:, None]
            self._lin, self._off = lin.T.copy(), np.concatenate([np.zeros(m), -k * off])

    @property
    def is_affine(self) -> bool:
        return self._lin is not None

    def rhs(self, x):
        if self._lin is not None:
            return x @ self._lin + self._off
        m, k = self.m, self.k
        z, u = x[..., :m], x[..., m:]
        gap = k * (u - z)
        return np.concatenate([gap, -gap - k * self.game.gradient(u)], axis=-1)


class NominalAverage(Controller):
    name = "nominal-average"
    blocks = ("z", "u", "xi")

    def __init__(self, game, params: EscParams):
        super().__init__(game)
        self.params = params
        ch = params.channels(game)
        self.slow = ch.eps_bar * ch.reduced_gain
        self.fast = ch.gamma_tilde
        pseudogradient(game, np.zeros(game.m))

    def rhs(self, x):
        m = self.m
        z, u, xi = x[..., :m], x[..., m:2 * m], x[..., 2 * m:]
        return np.concatenate(
            [self.slow * (u - z), self.slow * (z - u - xi), self.fast * (self.game.gradient(u) - xi)], axis=-1
        )


class ProjectedGr(Controller):
    name = "projected-gr"
    blocks = ("z", "u")

    def __init__(self, game, omega: BoxSet | HalfSpace | None = None):
        super().__init__(game)
        self.omega = omega if omega is not None else BoxSet.unconstrained(game.m)
        pseudogradient(game, np.zeros(game.m))

    def rhs(self, x):
        m = self.m
        z, u = x[..., :m], x[..., m:]
        return np.concatenate([u - z, self.omega.project(z - self.game.gradient(u)) - u], axis=-1)


CONTROLLERS: dict[str, type[Controller]] = {
    c.name: c for c in (Nesc, FilteredBaseline, UnfilteredBaseline, GrFlow, NominalAverage, ProjectedGr)
}


def make_controller(name: str, game: GameSpec, params: EscParams | None = None, *,
                    measure: Optional[CostFn] = None, omega=None) -> Controller:
    """Instantiate a controller by its config name."""
    try:
        cls = CONTROLLERS[name]
    except KeyError:
        raise ValueError(f"unknown controller {name!r}; choose from {sorted(CONTROLLERS)}") from None
    if cls is ProjectedGr:
        return cls(game, omega)
    if params is None:
        raise ValueError(f"controller {name!r} needs EscParams")
    if issubclass(cls, _Dithered):
        return cls(game, params, measure)
    return cls(game, params)

