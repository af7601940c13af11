"""Experiment presets and runners behind the command line.

Every runner takes a flat config mapping (see :mod:`nesc.config`), writes
CSV artifacts plus a ``manifest.txt`` echoing the resolved configuration,
and returns a result object with the summary numbers.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from nesc import analysis, config
from nesc.analysis import Histogram, NoisyChannel
from nesc.config import ConfigError
from nesc.controllers import (
    FIRST,
    ZEROTH,
    Controller,
    EscParams,
    HalfSpace,
    BoxSet,
    ProjectedGr,
    make_controller,
    random_kappa,
)
from nesc.games import GameSpec, builtin, ne_residual
from nesc.sim import IntegrationError, SolverConfig, Trajectory, integrate

logger = logging.getLogger(__name__)

BILINEAR_PRESET: dict[str, Any] = {
    "game.name": "bilinear",
    "game.u1_star": 2.0,
    "game.u2_star": -3.0,
    "controller.name": "nesc",
    "esc.gamma": 0.1,
    "esc.epsilon": 1.0,
    "esc.amplitudes": 0.1,
    "esc.kappa": "random",
    "solver.step": 0.01,
    "solver.horizon": 2000.0,
    "solver.record_every": 100,
    "init.u": "zero",
}

FIXED_DEMAND_HORIZON = 3000.0

FIXED_DEMAND_PRESET: dict[str, Any] = {
    "game.name": "fixed-demand",
    "game.capacities": [172.0, 47.0, 66.0],
    "game.demand": 350.0,
    "controller.name": "nesc",
    "esc.gamma": 0.02,
    "esc.epsilon": 1.0 / 3.0,
    "esc.amplitudes": 20.0,
    "esc.kappa": [0.1778, 0.1238, 0.1824],
    "esc.oracle": [ZEROTH, ZEROTH, ZEROTH, FIRST],
    "solver.step": 0.01,
    "solver.horizon": FIXED_DEMAND_HORIZON,
    "solver.record_every": 100,
    "init.u": "zero",
}

BASELINES = ("baseline-unfiltered", "baseline-filtered")
NOISE_SIGMAS = (0.0, 100.0, 400.0)


def preset(name: str, overrides: Mapping[str, Any] | None = None, seed: int | None = None) -> dict[str, Any]:
    base = {"bilinear": BILINEAR_PRESET, "fixed-demand": FIXED_DEMAND_PRESET}[name]
    cfg = config.resolve(base)
    cfg = config.resolve(dict(overrides or {}), cfg)
    if seed is not None:
        cfg["solver.seed"] = int(seed)
    return cfg


# ---------------------------------------------------------------------------
# building a run from a config


@dataclass
class Run:
    cfg: dict[str, Any]
    game: GameSpec
    params: Optional[EscParams]
    controller: Controller
    solver: SolverConfig
    x0: np.ndarray


def _vector(value, m: int, name: str) -> np.ndarray:
    if value is None or value == "zero":
        return np.zeros(m)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (m,):
        raise ConfigError(f"{name} needs {m} entries, got {arr.size}")
    return arr


def _game(cfg) -> GameSpec:
    params = {k[5:]: v for k, v in cfg.items() if k.startswith("game.") and k != "game.name"}
    if "capacities" in params:
        params["capacities"] = tuple(np.atleast_1d(params["capacities"]))
    try:
        return builtin(cfg["game.name"], **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def resolve_kappa(cfg, game: GameSpec) -> list[float]:
    """Concrete dither frequencies; ``random`` draws from the seeded generator."""
    oracle = cfg.get("esc.oracle") or [ZEROTH] * game.n_agents
    oracle = [oracle] if isinstance(oracle, str) else list(oracle)
    n = sum(d for d, o in zip(game.dims, oracle) if o == ZEROTH)
    kappa = cfg["esc.kappa"]
    if kappa == "random":
        rng = np.random.default_rng(int(cfg["solver.seed"]))
        return random_kappa(n, rng, cfg["esc.kappa_low"], cfg["esc.kappa_high"]).tolist()
    if isinstance(kappa, str):
        raise ConfigError(f"esc.kappa must be a list or 'random', got {kappa!r}")
    return np.atleast_1d(np.asarray(kappa, dtype=float)).tolist()


def build(cfg: Mapping[str, Any], measure=None) -> Run:
    """Turn a resolved config into game, parameters, controller and initial state."""
    cfg = dict(cfg)
    game = _game(cfg)
    name = cfg["controller.name"]
    try:
        solver = SolverConfig(
            method=cfg["solver.method"],
            step=float(cfg["solver.step"]),
            horizon=float(cfg["solver.horizon"]),
            record_every=int(cfg["solver.record_every"]),
            seed=int(cfg["solver.seed"]),
        )
        params = None
        if name != "projected-gr":
            cfg["esc.kappa"] = resolve_kappa(cfg, game)
            oracle = cfg.get("esc.oracle")
            params = EscParams(
                gamma=np.atleast_1d(cfg["esc.gamma"]),
                epsilon=np.atleast_1d(cfg["esc.epsilon"]),
                amplitudes=np.atleast_1d(cfg["esc.amplitudes"]),
                kappa=cfg["esc.kappa"],
                oracle=tuple([oracle] if isinstance(oracle, str) else oracle or ()),
            ) if game.n_agents == len(np.atleast_1d(cfg["esc.gamma"])) else EscParams.uniform(
                game.n_agents,
                float(np.atleast_1d(cfg["esc.gamma"])[0]),
                float(np.atleast_1d(cfg["esc.epsilon"])[0]),
                float(np.atleast_1d(cfg["esc.amplitudes"])[0]),
                cfg["esc.kappa"],
                [oracle] if isinstance(oracle, str) else oracle,
            )
            params.channels(game)
        controller = make_controller(name, game, params, measure=measure)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    m = game.m
    u0 = _vector(cfg["init.u"], m, "init.u")
    z0 = u0 if cfg["init.z"] is None else _vector(cfg["init.z"], m, "init.z")
    xi0 = _vector(cfg["init.xi"], m, "init.xi")
    phases = None if cfg["esc.phases"] is None else _vector(cfg["esc.phases"], m, "esc.phases")
    x0 = controller.initial(u0=u0, z0=z0, xi0=xi0, phases=phases)
    return Run(cfg, game, params, controller, solver, x0)


def observers(run: Run) -> dict:
    """Observer channels recorded for every run: NE residual, plus market or Lyapunov channels."""
    game, ctrl = run.game, run.controller
    u_slot = ctrl.slot("u")
    obs = {"ne_residual": lambda s: ne_residual(game, s[..., u_slot])}
    if game.name == "fixed-demand":
        n = game.n_agents - 1
        demand = game.params["demand"]
        obs["price"] = lambda s: s[..., u_slot][..., n]
        obs["mismatch"] = lambda s: s[..., u_slot][..., :n].sum(axis=-1) - demand
    if "z" in ctrl.blocks and run.params is not None and game.known_ne is not None:
        z_slot = ctrl.slot("z")
        obs["lyapunov"] = lambda s: analysis.lyapunov_value(
            (s[..., z_slot], s[..., u_slot]), game.known_ne, run.params, game.dims
        )
    return obs


def simulate(run: Run, x0=None) -> Trajectory:
    ctrl = run.controller
    dither = ctrl.slot("mu") if "mu" in ctrl.blocks else None
    return integrate(
        ctrl.rhs,
        run.x0 if x0 is None else x0,
        run.solver,
        observers(run),
        dither=dither,
        state_names=ctrl.state_names(),
        affine=ctrl.is_affine,
    )


def write_manifest(out: Path, cfg: Mapping[str, Any], extra: Mapping[str, Any] | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = config.dumps(cfg)
    if extra:
        text += "".join(f"# {k}: {v}\n" for k, v in extra.items())
    (out / "manifest.txt").write_text(text)


# ---------------------------------------------------------------------------
# bilinear comparison


@dataclass
class ResidualSummary:
    controller: str
    initial: float
    final: float
    tail_min: float
    tail_max: float
    tail_mean: float
    diverged: bool

    def line(self) -> str:
        flag = " DIVERGED" if self.diverged else ""
        return (f"{self.controller:20s} initial={self.initial:.4f} final={self.final:.4f} "
                f"tail_min={self.tail_min:.4f} tail_max={self.tail_max:.4f} tail_mean={self.tail_mean:.4f}{flag}")


def summarize_residual(name: str, traj: Trajectory, horizon: float) -> ResidualSummary:
    """Residual statistics over ``[T/2, T]``.

    A diverged run's unrecorded remainder lies beyond the divergence
    threshold, so its tail is summarized from whatever was recorded, and an
    empty tail reads as infinite.
    """
    r = traj.channels["ne_residual"]
    tail = r[traj.window(horizon / 2.0)]
    final = float(r[-1]) if not traj.diverged else np.inf
    if tail.size == 0:
        return ResidualSummary(name, float(r[0]), final, np.inf, np.inf, np.inf, traj.diverged)
    tmax = np.inf if traj.diverged else float(tail.max())
    tmean = np.inf if traj.diverged else float(tail.mean())
    return ResidualSummary(name, float(r[0]), final, float(tail.min()), tmax, tmean, traj.diverged)


@dataclass
class BilinearResult:
    cfg: dict[str, Any]
    trajectories: dict[str, Trajectory]
    summaries: dict[str, ResidualSummary]


def run_bilinear(overrides=None, out: Path | None = None, seed: int | None = None,
                 controllers: Sequence[str] = ("nesc", *BASELINES)) -> BilinearResult:
    """NESC against both baselines on the bilinear game, sharing one set of dither frequencies."""
    cfg = preset("bilinear", overrides, seed)
    probe = build(cfg)
    cfg = probe.cfg
    trajs, sums = {}, {}
    for name in controllers:
        run = build({**cfg, "controller.name": name})
        t0 = time.perf_counter()
        traj = simulate(run)
        logger.info("%s finished in %.1f s", name, time.perf_counter() - t0)
        trajs[name] = traj
        sums[name] = summarize_residual(name, traj, run.solver.horizon)
    if out is not None:
        write_manifest(out, cfg, {"controllers": ", ".join(controllers)})
        for name, traj in trajs.items():
            traj.to_csv(out / f"bilinear_{name}.csv")
    return BilinearResult(cfg, trajs, sums)


# ---------------------------------------------------------------------------
# fixed-demand market


def producer_agents(game: GameSpec, params: EscParams) -> list[int]:
    return [i for i, o in enumerate(params.oracle) if o == ZEROTH]


@dataclass
class MarketSummary:
    final_price: float
    tail_price_min: float
    tail_price_max: float
    tail_mismatch_max: float
    diverged: bool

    def line(self) -> str:
        return (f"price(T)={self.final_price:.4f} tail_price=[{self.tail_price_min:.4f}, {self.tail_price_max:.4f}] "
                f"tail_max|mismatch|={self.tail_mismatch_max:.4f}" + (" DIVERGED" if self.diverged else ""))


def summarize_market(traj: Trajectory, tail_seconds: float = 250.0) -> MarketSummary:
    mask = traj.window(traj.times[-1] - tail_seconds)
    price = traj.channels["price"][mask]
    mismatch = np.abs(traj.channels["mismatch"][mask])
    return MarketSummary(float(traj.channels["price"][-1]), float(price.min()), float(price.max()),
                         float(mismatch.max()), traj.diverged)


@dataclass
class FixedDemandResult:
    cfg: dict[str, Any]
    trajectory: Trajectory
    summary: MarketSummary


def run_fixed_demand(sigma: float = 0.0, overrides=None, out: Path | None = None,
                     seed: int | None = None) -> FixedDemandResult:
    """Single market run; producers measure costs through a noisy channel when ``sigma > 0``."""
    cfg = preset("fixed-demand", {**(overrides or {}), "noise.sigma": float(sigma)}, seed)
    base = build(cfg)
    measure = None
    if sigma > 0:
        noise_seed = cfg["noise.seed"] if cfg["noise.seed"] is not None else cfg["solver.seed"]
        measure = NoisyChannel(base.game, sigma, int(noise_seed), producer_agents(base.game, base.params))
    run = build(base.cfg, measure)
    traj = simulate(run)
    summary = summarize_market(traj)
    if out is not None:
        write_manifest(out, run.cfg)
        traj.to_csv(out / "fixed_demand.csv")
    return FixedDemandResult(run.cfg, traj, summary)


# ---------------------------------------------------------------------------
# noise study


@dataclass
class NoiseStudyEntry:
    sigma: float
    histogram: Histogram
    mean: float
    std: float
    n: int
    runs: int

    def line(self) -> str:
        return (f"sigma={self.sigma:g} runs={self.runs} samples={self.n} mean={self.mean:.5f} "
                f"std={self.std:.5f} bins={len(self.histogram.counts)}")


def simulate_tail(run: Run, x0: np.ndarray, tail_seconds: float) -> Trajectory:
    """Integrate to the horizon but keep only the last ``tail_seconds`` of records.

    The run is split into a silent leg and a recorded leg. The split point
    is a whole number of renormalization intervals, so the arithmetic is
    exactly that of one uninterrupted integration.
    """
    solver, ctrl = run.solver, run.controller
    lead_steps = solver.n_steps - int(round(tail_seconds / solver.step))
    if lead_steps < 0 or lead_steps % solver.renormalize_every:
        raise ConfigError(f"tail of {tail_seconds} s does not split the run on a renormalization boundary")
    dither = ctrl.slot("mu")
    x = x0
    lead = 0.0
    if lead_steps:
        lead = lead_steps * solver.step
        head = integrate(ctrl.rhs, x0, replace(solver, horizon=lead, record_every=lead_steps), dither=dither)
        if head.diverged:
            return head
        x = head.final
    traj = integrate(ctrl.rhs, x, replace(solver, horizon=tail_seconds), observers(run), dither=dither,
                     state_names=ctrl.state_names())
    traj.times = traj.times + lead
    return traj


@dataclass
class NoiseStudyResult:
    cfg: dict[str, Any]
    entries: list[NoiseStudyEntry] = field(default_factory=list)
    seconds: float = 0.0


def run_noise_study(sigmas: Sequence[float] = NOISE_SIGMAS, runs: int = 200, overrides=None,
                    out: Path | None = None, seed: int | None = None, tail_seconds: float = 250.0,
                    sample_period: float = 1.0, bin_width: float = 0.05) -> NoiseStudyResult:
    """Monte Carlo price distribution of the market game under cost-measurement noise.

    All ``len(sigmas) * runs`` runs are integrated together as one batch
    (row ``k * runs + i`` is run ``i`` at ``sigmas[k]``), each with its own
    noise stream seeded from ``(seed, k, i)``.
    """
    t0 = time.perf_counter()
    cfg = preset("fixed-demand", overrides, seed)
    base = build(cfg)
    cfg = base.cfg
    master = int(cfg["noise.seed"] if cfg["noise.seed"] is not None else cfg["solver.seed"])
    sigmas = [float(s) for s in sigmas]
    if not sigmas or runs < 1:
        raise ConfigError("noise study needs at least one sigma and one run")
    seeds = [[master, k, i] for k in range(len(sigmas)) for i in range(runs)]
    row_sigma = np.repeat(sigmas, runs)
    channel = NoisyChannel(base.game, row_sigma, seeds, producer_agents(base.game, base.params))
    run = build(cfg, channel)
    traj = simulate_tail(run, np.tile(run.x0, (len(seeds), 1)), tail_seconds)
    if traj.diverged:
        raise IntegrationError(f"noise study diverged (sigmas {sigmas})")
    entries = []
    for k, sigma in enumerate(sigmas):
        members = [traj.run(k * runs + i) for i in range(runs)]
        pooled = np.concatenate([analysis.tail_samples(tr, "price", tail_seconds, sample_period) for tr in members])
        hist = analysis.price_histogram(members, "price", tail_seconds, sample_period, bin_width)
        entries.append(NoiseStudyEntry(sigma, hist, float(pooled.mean()), float(pooled.std(ddof=1)),
                                       pooled.size, runs))
    result = NoiseStudyResult(cfg, entries, time.perf_counter() - t0)
    if out is not None:
        write_manifest(out, cfg, {"sigmas": ", ".join(f"{s:g}" for s in sigmas), "runs_per_sigma": runs,
                                  "tail_seconds": tail_seconds, "sample_period": sample_period,
                                  "bin_width": bin_width})
        for e in entries:
            e.histogram.to_csv(out / f"price_histogram_sigma_{e.sigma:g}.csv")
        (out / "noise_summary.txt").write_text("".join(e.line() + "\n" for e in entries))
    return result


# ---------------------------------------------------------------------------
# projected-flow counterexample


def rotation_game() -> GameSpec:
    """``F(u) = (u2, -u1)``: the rotation field of the projected-flow counterexample."""
    from nesc.games import bilinear

    return bilinear(0.0, 0.0)


@dataclass
class CounterexampleReport:
    state: np.ndarray
    omega: HalfSpace
    reflected: np.ndarray
    projected: np.ndarray
    rate: float
    unconstrained_rate: float
    unconstrained_final_distance: float

    def lines(self) -> list[str]:
        n, b = self.omega.normal, self.omega.offset
        return [
            f"F(u) = (u2, -u1); Omega = {{x : {n[0]:g} x1 + {n[1]:g} x2 <= {b:g}}}",
            f"u = z = ({self.state[0]:g}, {self.state[1]:g})",
            f"z - F(u) = ({self.reflected[0]:g}, {self.reflected[1]:g})",
            f"proj_Omega(z - F(u)) = ({self.projected[0]:g}, {self.projected[1]:g})",
            f"dV/dt projected = {self.rate:.6g}",
            f"dV/dt unconstrained = {self.unconstrained_rate:.6g}",
            f"unconstrained |(z,u)(T) - (u*,u*)| = {self.unconstrained_final_distance:.3e}",
        ]


def run_counterexample(u2: float = 1.0, horizon: float = 100.0, out: Path | None = None) -> CounterexampleReport:
    """Lyapunov increase of the projected golden-ratio flow.

    With ``F(u) = (u2, -u1)`` and ``u = z = (0, u2)``, ``z - F(u) = (-u2, u2)``.
    The halfspace ``2 x1 + x2 >= 0`` contains the equilibrium ``0`` (on its
    boundary) and ``u``, but not ``(-u2, u2)``; projecting pushes the second
    coordinate up to ``1.2 u2``, so ``dV/dt = u2 (p2 - u2) = 0.2 u2^2 > 0``.
    """
    if u2 == 0:
        raise ValueError("u2 must be nonzero; at u = z = 0 the state is the equilibrium")
    sign = np.sign(u2)
    game = rotation_game()
    omega = HalfSpace(normal=sign * np.array([-2.0, -1.0]), offset=0.0)
    u = np.array([0.0, u2])
    x = np.concatenate([u, u])
    unit = EscParams.uniform(2, 1.0, 1.0, 1.0, [1.0, 2.0])
    flow = ProjectedGr(game, omega)
    d = flow.rhs(x)
    reflected = u - game.gradient(u)
    projected = omega.project(reflected)
    rate = float(analysis.lyapunov_derivative((u, u), (d[:2], d[2:]), game.known_ne, unit))
    if not rate > 0:
        raise RuntimeError(f"counterexample construction failed: dV/dt = {rate}")
    free = ProjectedGr(game, BoxSet.unconstrained(2))
    d_free = free.rhs(x)
    free_rate = float(analysis.lyapunov_derivative((u, u), (d_free[:2], d_free[2:]), game.known_ne, unit))
    traj = integrate(free.rhs, x, SolverConfig(step=0.01, horizon=horizon, record_every=100),
                     {"lyapunov": lambda s: analysis.lyapunov_value((s[..., :2], s[..., 2:]), game.known_ne, unit)},
                     state_names=free.state_names())
    report = CounterexampleReport(x, omega, reflected, projected, rate, free_rate,
                                  float(np.linalg.norm(traj.final)))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "counterexample.txt").write_text("\n".join(report.lines()) + "\n")
        traj.to_csv(out / "counterexample_unconstrained.csv")
    return report


# ---------------------------------------------------------------------------
# invariant suite


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str

    def line(self) -> str:
        return f"{self.name}\t{'PASS' if self.passed else 'FAIL'}\t{self.value:.6g}\t{self.detail}"


def rk4_errors(steps=(0.02, 0.01, 0.005)) -> list[float]:
    """Global error at ``t = 1`` of RK4 on ``x' = -x``, one entry per step size."""
    errs = []
    for h in steps:
        traj = integrate(lambda x: -x, np.array([1.0]), SolverConfig(step=h, horizon=1.0, record_every=10**9))
        errs.append(abs(float(traj.final[0]) - np.exp(-1.0)))
    return errs


def oscillator_drift(steps: int = 100_000, step: float = 1e-3, kappa=(1.0, 0.37)) -> float:
    """Largest deviation of a pair norm from 1 after integrating the oscillator alone, no renormalization."""
    from nesc.controllers import _rotation, TWO_PI, oscillator_start

    swap, rates = _rotation(TWO_PI * np.asarray(kappa))
    mu0 = oscillator_start(len(kappa), np.linspace(0.0, 1.0, len(kappa)))
    traj = integrate(lambda mu: mu[swap] * rates, mu0,
                     SolverConfig(step=step, horizon=steps * step, record_every=1000))
    norms = np.sqrt((traj.states.reshape(len(traj), -1, 2) ** 2).sum(axis=-1))
    return float(np.abs(norms - 1.0).max())


def _gradient_gap(game: GameSpec, n: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    u = rng.uniform(-10.0, 10.0, size=(n, game.m))
    fd = analysis.finite_diff_pseudogradient(game, u, 1e-5)
    exact = game.gradient(u)
    scale = np.maximum(np.abs(exact), 1.0)
    return float((np.abs(fd - exact) / scale).max())


def _lyapunov_increase(game: GameSpec, x0: np.ndarray, horizon: float) -> float:
    params = EscParams.uniform(game.n_agents, 1.0, 1.0, 1.0, np.arange(1, game.m + 1))
    run = make_controller("gr-flow", game, params)
    traj = integrate(run.rhs, x0, SolverConfig(step=1e-2, horizon=horizon, record_every=1),
                     {"V": lambda s: analysis.lyapunov_value((s[..., :game.m], s[..., game.m:]), game.known_ne, params)})
    return float(np.diff(traj.channels["V"]).max())


def run_validate(inject: Sequence[str] = ()) -> list[Check]:
    """Invariant suite. ``inject`` takes ``flip-dither-sign`` and/or ``non-monotone`` as negative controls."""
    from nesc.controllers import dither_estimate
    from nesc.games import anti_monotone, bilinear, fixed_demand, quadratic, quartic

    checks: list[Check] = []
    games = {"bilinear": bilinear(), "fixed-demand": fixed_demand()}

    for name, g in games.items():
        gap = _gradient_gap(g, 100, 1)
        checks.append(Check(f"gradient_fd_{name}", gap <= 1e-6, gap, "max relative |FD - F|, 100 points"))
        res = float(ne_residual(g, g.known_ne))
        checks.append(Check(f"ne_residual_{name}", res <= 1e-9, res, "|F(u*)|"))

    mono_games = dict(games)
    if "non-monotone" in inject:
        mono_games["injected-anti-monotone"] = anti_monotone(2)
    for name, g in mono_games.items():
        rep = analysis.monotonicity_probe(g, 1000, seed=2)
        checks.append(Check(f"monotone_{name}", not rep.violated, rep.min_inner_product,
                            "min <u-v, F(u)-F(v)> over 1000 pairs"))
    rng = np.random.default_rng(3)
    u, v = rng.uniform(-10, 10, (2, 1000, 2))
    g = games["bilinear"]
    skew = float(np.abs(((u - v) * (g.gradient(u) - g.gradient(v))).sum(-1)).max())
    checks.append(Check("not_strongly_monotone_bilinear", skew <= 1e-9, skew, "max |<u-v, F(u)-F(v)>|"))

    estimator = dither_estimate
    if "flip-dither-sign" in inject:
        def estimator(game, u, mu, params):
            return -dither_estimate(game, u, mu, params)
    p1 = EscParams.uniform(1, 1.0, 1.0, 0.1, [1.0])
    quad = analysis.dither_average_error(quadratic(), [1.0], p1, estimator=estimator)
    checks.append(Check("dither_average_quadratic", quad <= 1e-8, quad, "|avg F~ - F| for J = u^2, a = 0.1"))
    e_a = analysis.dither_average_error(quartic(), [1.0], p1, estimator=estimator)
    e_half = analysis.dither_average_error(quartic(), [1.0], p1.replace(amplitudes=(0.05,)), estimator=estimator)
    ratio = e_a / e_half if e_half > 0 else np.inf
    checks.append(Check("dither_average_quartic_ratio", 3.5 <= ratio <= 4.5, ratio, "error(a) / error(a/2), J = u^4"))

    inc_b = _lyapunov_increase(games["bilinear"], np.array([0.0, 0.0, 5.0, 5.0]), 50.0)
    checks.append(Check("lyapunov_decrease_bilinear", inc_b <= 1e-9, inc_b, "max V(t_k+1) - V(t_k) on gr-flow"))
    fd = games["fixed-demand"]
    inc_f = _lyapunov_increase(fd, np.concatenate([np.zeros(4), np.zeros(4)]), 50.0)
    checks.append(Check("lyapunov_decrease_fixed_demand", inc_f <= 1e-9, inc_f, "max V(t_k+1) - V(t_k) on gr-flow"))

    errs = rk4_errors()
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(8.0 <= r <= 32.0 for r in ratios)
    checks.append(Check("rk4_order", ok, min(ratios), f"error ratios under step halving {ratios[0]:.2f}, {ratios[1]:.2f}"))

    drift = oscillator_drift()
    checks.append(Check("oscillator_norm_drift", drift <= 1e-6, drift, "max |‖mu_j‖ - 1| after 1e5 RK4 steps"))

    g = games["bilinear"]
    states = np.random.default_rng(4).uniform(-10, 10, (100, 4))
    unit = EscParams.uniform(2, 1.0, 1.0, 1.0, [1.0, 2.0])
    gap = float(np.abs(ProjectedGr(g).rhs(states) - make_controller("gr-flow", g, unit).rhs(states)).max())
    checks.append(Check("projected_equals_gr_flow_unconstrained", gap <= 1e-12, gap, "max |difference|, 100 states"))
    return checks
