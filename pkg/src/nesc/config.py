"""Experiment configuration files.

Line-oriented ``section.key = value`` pairs; ``#`` starts a comment.
Values are numbers, words, or comma-separated lists of either::

    game.name = bilinear
    game.u1_star = 2
    controller.name = nesc
    esc.gamma = 0.1
    esc.kappa = random          # or an explicit list: 0.31, 0.77
    solver.horizon = 2000
    init.u = zero               # or a list with one entry per channel

Recognized keys (defaults in :data:`DEFAULTS`):

``game.name``
    ``bilinear`` or ``fixed-demand``; game parameters go under ``game.*``
    (``u1_star``, ``u2_star`` / ``capacities``, ``demand``).
``controller.name``
    ``nesc``, ``baseline-unfiltered``, ``baseline-filtered``, ``gr-flow``,
    ``nominal-average`` or ``projected-gr``.
``esc.gamma``, ``esc.epsilon``, ``esc.amplitudes``
    Per-agent values, or a single value for all agents.
``esc.kappa``
    List, or ``random`` to draw from ``[esc.kappa_low, esc.kappa_high]``
    with the solver seed.
``esc.oracle``
    Per-agent ``zeroth`` / ``first``.
``esc.phases``
    Initial dither phases (radians), default all zero.
``solver.method``, ``solver.step``, ``solver.horizon``, ``solver.record_every``, ``solver.seed``
    Integration settings.
``noise.sigma``, ``noise.seed``
    Additive Gaussian cost-measurement noise on zeroth-order agents.
``init.u``, ``init.z``, ``init.xi``
    Initial state blocks; ``zero`` or a list. ``init.z`` defaults to ``init.u``.
``output.dir``
    Where CSV files and ``manifest.txt`` are written.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Any, Mapping

DEFAULTS: dict[str, Any] = {
    "game.name": "bilinear",
    "controller.name": "nesc",
    "esc.gamma": 0.1,
    "esc.epsilon": 1.0,
    "esc.amplitudes": 0.1,
    "esc.kappa": "random",
    "esc.kappa_low": 0.0,
    "esc.kappa_high": 1.0,
    "esc.oracle": None,
    "esc.phases": None,
    "solver.method": "rk4",
    "solver.step": 0.01,
    "solver.horizon": 2000.0,
    "solver.record_every": 100,
    "solver.seed": 0,
    "noise.sigma": 0.0,
    "noise.seed": None,
    "init.u": "zero",
    "init.z": None,
    "init.xi": "zero",
    "output.dir": "out",
}

GAME_KEYS = {
    "bilinear": {"u1_star", "u2_star"},
    "fixed-demand": {"capacities", "demand"},
}

_KEY = re.compile(r"^[a-z_]+\.[a-z0-9_]+$")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _scalar(text: str):
    if text.lower() == "none":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _scalar(text)


def parse(text: str) -> dict[str, Any]:
    """Parse config text into a flat ``{dotted.key: value}`` mapping."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r} (expected section.name)")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def load(path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text)


def resolve(overrides: Mapping[str, Any], base: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Layer ``overrides`` over ``base`` (or :data:`DEFAULTS`), rejecting unknown keys."""
    cfg = dict(DEFAULTS if base is None else base)
    game = overrides.get("game.name", cfg["game.name"])
    allowed = set(DEFAULTS) | {f"game.{k}" for k in GAME_KEYS.get(game, ())}
    for key, value in overrides.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
    if cfg["game.name"] not in GAME_KEYS:
        raise ConfigError(f"unknown game {cfg['game.name']!r}; choose from {sorted(GAME_KEYS)}")
    stale = [k for k in cfg if k.startswith("game.") and k != "game.name" and k[5:] not in GAME_KEYS[cfg["game.name"]]]
    for k in stale:
        del cfg[k]
    return cfg


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps(cfg: Mapping[str, Any]) -> str:
    """Render a mapping back to config text (sorted, ``none`` for unset)."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(cfg.items()))
