"""Game definitions: costs, pseudogradient, Nash residual and builtin games.

Joint actions are flat vectors with the agents' blocks stored in index
order. Every evaluator broadcasts over leading axes, so a batch of joint
actions of shape ``(..., m)`` yields costs of shape ``(..., N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

CostFn = Callable[[np.ndarray], np.ndarray]
FieldFn = Callable[[np.ndarray], np.ndarray]

NE_TOLERANCE = 1e-9


class CostOnlyGameError(ValueError):
    """Raised when an operation needs the analytic pseudogradient of a game that has none."""


@dataclass(frozen=True)
class GameSpec:
    """An unconstrained N-player game with per-agent costs over the joint action.

    ``costs`` maps joint actions ``(..., m)`` to the stacked agent costs
    ``(..., N)``; ``gradient`` (optional) maps ``(..., m)`` to the
    pseudogradient ``(..., m)``. Games whose pseudogradient is affine may
    declare ``affine = (M, c)`` with ``F(u) = M u + c``, which lets the
    averaged flows run as a single matrix product.
    """

    name: str
    dims: tuple[int, ...]
    costs: CostFn
    gradient: Optional[FieldFn] = None
    known_ne: Optional[np.ndarray] = None
    params: dict[str, Any] = field(default_factory=dict)
    affine: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be a non-empty list of positive integers, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)
        if self.known_ne is not None:
            ne = np.array(self.known_ne, dtype=float)
            if ne.shape != (self.m,):
                raise ValueError(f"known_ne must have length {self.m}, got shape {ne.shape}")
            ne.setflags(write=False)
            object.__setattr__(self, "known_ne", ne)
            if self.gradient is not None:
                res = float(np.linalg.norm(self.gradient(ne)))
                if res > NE_TOLERANCE:
                    raise ValueError(f"known_ne is not stationary: |F(u*)| = {res:.3e}")
        if self.affine is not None:
            mat, off = (np.array(a, dtype=float) for a in self.affine)
            if mat.shape != (self.m, self.m) or off.shape != (self.m,) or self.gradient is None:
                raise ValueError("affine needs an (m, m) matrix, an (m,) offset and an analytic gradient")
            probe = np.random.default_rng(0).uniform(-10.0, 10.0, (4, self.m))
            if not np.allclose(probe @ mat.T + off, self.gradient(probe), rtol=1e-12, atol=1e-9):
                raise ValueError("affine form disagrees with the gradient")
            object.__setattr__(self, "affine", (mat, off))

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        """Start index of every agent block, plus the total length at the end."""
        return np.concatenate([[0], np.cumsum(self.dims)])

    def block(self, i: int) -> slice:
        """Slice of agent ``i`` (0-based) inside the joint action."""
        off = self.offsets
        return slice(int(off[i]), int(off[i + 1]))

    @property
    def channel_agent(self) -> np.ndarray:
        """Owning agent (0-based) of every scalar channel."""
        return np.repeat(np.arange(self.n_agents), self.dims)

    def check_action(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.m,):
            raise ValueError(f"joint action must have trailing length {self.m}, got shape {u.shape}")
        return u


def evaluate_cost(game: GameSpec, i: int, u) -> float:
    """Cost ``J_i(u)`` of agent ``i`` (1-based, as in the game's notation)."""
    if not 1 <= i <= game.n_agents:
        raise IndexError(f"agent index {i} outside 1..{game.n_agents}")
    u = game.check_action(u)
    return game.costs(u)[..., i - 1]


def pseudogradient(game: GameSpec, u) -> np.ndarray:
    """Stacked partial gradients of each agent's cost in its own action."""
    if game.gradient is None:
        raise CostOnlyGameError(
            f"game {game.name!r} has no analytic pseudogradient; use analysis.finite_diff_pseudogradient"
        )
    return game.gradient(game.check_action(u))


def ne_residual(game: GameSpec, u) -> float:
    """Euclidean norm of the pseudogradient; zero exactly at Nash equilibria."""
    return np.linalg.norm(pseudogradient(game, u), axis=-1)


# ---------------------------------------------------------------------------
# builtin games


def bilinear(u1_star: float = 2.0, u2_star: float = -3.0) -> GameSpec:
    """Two scalar players, ``J_1 = (u1-u1*)(u2-u2*)`` and ``J_2 = -J_1``.

    The pseudogradient ``(u2-u2*, -(u1-u1*))`` is a rotation field: monotone
    but not strongly monotone, so plain pseudogradient play orbits the
    unique equilibrium.
    """
    star = np.array([u1_star, u2_star], dtype=float)
    signs = np.array([1.0, -1.0])

    def costs(u):
        p = (u[..., 0:1] - star[0]) * (u[..., 1:2] - star[1])
        return p * signs

    shift = np.array([star[1], -star[0]])

    def gradient(u):
        return u[..., ::-1] * signs - shift

    return GameSpec(
        name="bilinear",
        dims=(1, 1),
        costs=costs,
        gradient=gradient,
        known_ne=star,
        params={"u1_star": float(u1_star), "u2_star": float(u2_star)},
        affine=(np.array([[0.0, 1.0], [-1.0, 0.0]]), -shift),
    )


@dataclass(frozen=True)
class FixedDemandParams:
    """Producer capacities ``U_i`` and the fixed demand ``U_d`` (kW)."""

    capacities: tuple[float, ...] = (172.0, 47.0, 66.0)
    demand: float = 350.0

    def __post_init__(self):
        caps = tuple(float(c) for c in self.capacities)
        if not caps:
            raise ValueError("capacities must be non-empty")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "demand", float(self.demand))

    def equilibrium(self) -> np.ndarray:
        """Closed-form NE ``(u_1..u_N, lambda)``.

        Producer stationarity gives ``u_i = U_i + lambda/2``; the regulator
        forces supply to meet demand, hence ``lambda = 2 (U_d - sum U_i) / N``.
        """
        caps = np.array(self.capacities)
        price = 2.0 * (self.demand - caps.sum()) / len(caps)
        return np.append(caps + price / 2.0, price)


def fixed_demand(params: FixedDemandParams | None = None) -> GameSpec:
    """Market game: N producers plus a price-setting regulator (last agent).

    Producer ``i`` pays ``u_i (u_i - 2 U_i) - lambda u_i``; the regulator pays
    ``lambda (sum u_i - U_d)``, so its partial gradient is the supply-demand
    mismatch.
    """
    params = params or FixedDemandParams()
    caps = np.array(params.capacities)
    demand = params.demand
    n = len(caps)

    def costs(u):
        prod, lam = u[..., :n], u[..., n:]
        producer = prod * (prod - 2.0 * caps - lam)
        regulator = lam * (prod.sum(axis=-1, keepdims=True) - demand)
        return np.concatenate([producer, regulator], axis=-1)

    def gradient(u):
        prod, lam = u[..., :n], u[..., n:]
        return np.concatenate([2.0 * prod - 2.0 * caps - lam, prod.sum(axis=-1, keepdims=True) - demand], axis=-1)

    jac = np.zeros((n + 1, n + 1))
    jac[:n, :n] = 2.0 * np.eye(n)
    jac[:n, n] = -1.0
    jac[n, :n] = 1.0

    return GameSpec(
        name="fixed-demand",
        dims=(1,) * (n + 1),
        costs=costs,
        gradient=gradient,
        known_ne=params.equilibrium(),
        params={"capacities": list(params.capacities), "demand": demand},
        affine=(jac, np.append(-2.0 * caps, -demand)),
    )


def quadratic(coeffs: Sequence[float] = (1.0,), centers: Sequence[float] | None = None) -> GameSpec:
    """Decoupled scalar agents with ``J_i = c_i (u_i - r_i)^2``. Test fixture and sanity game."""
    c = np.asarray(coeffs, dtype=float)
    r = np.zeros_like(c) if centers is None else np.asarray(centers, dtype=float)
    return GameSpec(
        name="quadratic",
        dims=(1,) * len(c),
        costs=lambda u: c * (u - r) ** 2,
        gradient=lambda u: 2.0 * c * (u - r),
        known_ne=r,
        params={"coeffs": c.tolist(), "centers": r.tolist()},
        affine=(np.diag(2.0 * c), -2.0 * c * r),
    )


def quartic() -> GameSpec:
    """Single agent with ``J(u) = u^4``; its dither average carries an ``O(a^2)`` bias."""
    return GameSpec(
        name="quartic",
        dims=(1,),
        costs=lambda u: u**4,
        gradient=lambda u: 4.0 * u**3,
        known_ne=np.zeros(1),
        params={},
    )


def anti_monotone(m: int = 2) -> GameSpec:
    """Scalar agents with ``J_i = -u_i^2 / 2``, i.e. ``F(u) = -u``. Negative control for monotonicity checks."""
    return GameSpec(
        name="anti-monotone",
        dims=(1,) * m,
        costs=lambda u: -0.5 * u**2,
        gradient=lambda u: -u,
        known_ne=np.zeros(m),
        params={"m": m},
        affine=(-np.eye(m), np.zeros(m)),
    )


BUILTIN_GAMES = {
    "bilinear": lambda **kw: bilinear(**kw),
    "fixed-demand": lambda capacities=(172.0, 47.0, 66.0), demand=350.0: fixed_demand(
        FixedDemandParams(tuple(capacities), demand)
    ),
}


def builtin(name: str, **params) -> GameSpec:
    """Build a builtin game by its config name."""
    try:
        factory = BUILTIN_GAMES[name]
    except KeyError:
        raise ValueError(f"unknown game {name!r}; choose from {sorted(BUILTIN_GAMES)}") from None
    return factory(**params)
