"""Scenarios, experiment configuration and dispatch.

A :class:`Config` names a command (one per kind of run), a scenario and the
numeric knobs. :func:`run_experiment` validates it and returns the
:class:`~calapproach.trace.MetricTrace` of the run; ``(config, seed)``
determines the trace exactly.
"""

from __future__ import annotations

import dataclasses
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .adversaries import PublicHistory, parse_adversary, spawn_rngs
from .approach import (
    VectorPayoffGame,
    build_best_response_table,
    expected_payoff,
    interval_halfspaces,
    run_blackwell,
    run_calibrated_approach,
    run_halfspace,
)
from .calibration import Calibrator
from .errors import ConfigError
from .partial import (
    Optimistic,
    SignalStructure,
    WorstCase,
    build_br_grid,
    doubling_wrapper,
    run_partial_monitoring,
)
from .regret import run_internal_regret
from .simplex import point_target, simplex_grid
from .trace import MetricTrace, log_schedule

COMMANDS = (
    "internal-regret",
    "calibrate",
    "approach-blackwell",
    "approach-calibrated",
    "halfspace",
    "partial-monitor",
    "doubling",
)

SIGNAL_A = (1.0, 0.0)
SIGNAL_B = (0.0, 1.0)
SIGNAL_C = (0.5, 0.5)


# --------------------------------------------------------------------------
# built-in games


def plus_minus_one():
    """Scalar game ``[[1, -1], [-1, 1]]``."""
    return VectorPayoffGame([[1.0, -1.0], [-1.0, 1.0]])


def label_efficient(a=SIGNAL_A, b=SIGNAL_B, c=SIGNAL_C):
    """Rows o, g, b (observe, label g, label b); columns G, B.

    Only ``o`` reveals the outcome: it emits ``a`` under G and ``b`` under B;
    the labelling actions both emit ``c``.
    """
    payoffs = [[0.0, 0.0],
               [0.0, 1.0],
               [1.0, 0.0]]
    signals = [[a, b],
               [c, c],
               [c, c]]
    return SignalStructure(payoffs, signals)


def matching_pennies_dark(c=SIGNAL_C):
    """Rows and columns T, H; payoff +1 on a match, -1 otherwise; one signal law."""
    return SignalStructure([[1.0, -1.0], [-1.0, 1.0]], [[c, c], [c, c]])


APPROACH_SCENARIOS = ("plus-minus-one",)
PM_SCENARIOS = ("label-efficient", "matching-pennies-dark")
CALIBRATION_SCENARIOS = ("binary", "ternary")
REGRET_SCENARIOS = ("uniform-noise", "plus-minus-one")

SCENARIOS = {
    "internal-regret": REGRET_SCENARIOS,
    "calibrate": CALIBRATION_SCENARIOS,
    "approach-blackwell": APPROACH_SCENARIOS,
    "approach-calibrated": APPROACH_SCENARIOS,
    "halfspace": APPROACH_SCENARIOS,
    "partial-monitor": PM_SCENARIOS,
    "doubling": PM_SCENARIOS,
}

DEFAULTS = {
    "internal-regret": {"scenario": "uniform-noise", "steps": 10_000, "adversary": "iid:0.5,0.5"},
    "calibrate": {"scenario": "binary", "steps": 10_000, "mesh": 0.2, "adversary": "iid:0.3,0.7"},
    "approach-blackwell": {"scenario": "plus-minus-one", "steps": 10_000,
                           "adversary": "iid:0.5,0.5"},
    "approach-calibrated": {"scenario": "plus-minus-one", "steps": 10_000, "mesh": 0.05,
                            "epsilon": 0.1, "adversary": "iid:0.5,0.5"},
    "halfspace": {"scenario": "plus-minus-one", "steps": 10_000, "epsilon": 0.1,
                  "adversary": "iid:0.5,0.5"},
    "partial-monitor": {"scenario": "label-efficient", "steps": 10_000, "epsilon": 0.1,
                        "adversary": "const:0"},
    "doubling": {"scenario": "label-efficient", "steps": 42_500, "base": 500,
                 "adversary": "const:0"},
}


# --------------------------------------------------------------------------
# configuration


@dataclass
class Config:
    """One experiment. ``None`` fields take the command's defaults."""

    command: str
    scenario: str | None = None
    steps: int | None = None
    seed: int = 0
    mesh: float | None = None
    epsilon: float | None = None
    eta: float | None = None
    adversary: str | None = None
    out: str | None = None
    format: str | None = None
    log_every: int | None = None
    base: int | None = None
    evaluation: str = "worst-case"
    actions: int = 3
    signal_a: str | None = None
    signal_b: str | None = None
    signal_c: str | None = None

    def resolved(self):
        """Copy with defaults filled in, after validation."""
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}; "
                                         f"valid: {', '.join(COMMANDS)}")
        cfg = dataclasses.replace(self)
        for key, value in DEFAULTS[self.command].items():
            if getattr(cfg, key) is None:
                setattr(cfg, key, value)
        valid = SCENARIOS[cfg.command]
        if cfg.scenario not in valid:
            raise ConfigError("scenario", f"unknown scenario {cfg.scenario!r} for "
                                          f"{cfg.command}; valid: {', '.join(valid)}")
        _positive_int(cfg, "steps")
        _positive_int(cfg, "actions")
        if cfg.log_every is not None:
            _positive_int(cfg, "log_every")
        if cfg.base is not None:
            _positive_int(cfg, "base")
        if not isinstance(cfg.seed, (int, np.integer)) or cfg.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {cfg.seed!r}")
        for key in ("mesh", "epsilon"):
            v = getattr(cfg, key)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ConfigError(key, f"must be > 0, got {v!r}")
        if cfg.eta is not None and not 0 < cfg.eta <= 1:
            raise ConfigError("eta", f"must be in (0, 1], got {cfg.eta!r}")
        if cfg.format is None:
            cfg.format = "jsonl" if cfg.out and cfg.out.endswith(".jsonl") else "csv"
        if cfg.format not in ("csv", "jsonl"):
            raise ConfigError("format", f"must be csv or jsonl, got {cfg.format!r}")
        if cfg.evaluation not in ("worst-case", "optimistic"):
            raise ConfigError("evaluation", "must be worst-case or optimistic")
        return cfg

    def as_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


def _positive_int(cfg, key):
    v = getattr(cfg, key)
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
        raise ConfigError(key, f"must be a positive integer, got {v!r}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def _convert(key, text):
    kind = _FIELD_TYPES[key]
    try:
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None
    return text


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys are allowed."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _convert(key, value)
    return values


def load_config(path):
    return parse_config_text(Path(path).read_text())


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# --------------------------------------------------------------------------
# dispatch


def _vector(key, text, default):
    if text is None:
        return default
    try:
        v = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None
    if len(v) < 1 or min(v) < 0 or abs(sum(v) - 1) > 1e-12:
        raise ConfigError(key, f"must be a probability vector, got {text!r}")
    return v


def scenario_structure(cfg):
    a = _vector("signal_a", cfg.signal_a, SIGNAL_A)
    b = _vector("signal_b", cfg.signal_b, SIGNAL_B)
    c = _vector("signal_c", cfg.signal_c, SIGNAL_C)
    if not len(a) == len(b) == len(c):
        raise ConfigError("signal_a", "signal laws must share one signal set")
    if cfg.scenario == "label-efficient":
        return label_efficient(a, b, c)
    return matching_pennies_dark(c)


def _schedule(cfg):
    return log_schedule(cfg.steps, cfg.log_every)


def _adversary(cfg, n_actions, objective):
    return parse_adversary(cfg.adversary, n_actions, objective)


def _approach_objective(game, target):
    # push the average payoff away from the target given the player's frequencies
    def objective(history):
        x = history.player_frequencies()
        return [target.distance(expected_payoff(game, x, np.eye(game.n_cols)[j]))
                for j in range(game.n_cols)]
    return objective


def _least_played(history):
    return -history.adversary_counts


def _run_internal_regret(cfg):
    if cfg.scenario == "uniform-noise":
        # outcome vectors drawn i.i.d. uniform in [-1, 1]^actions
        rng = spawn_rngs(cfg.seed, 3)[2]
        outcomes = rng.uniform(-1.0, 1.0, size=(cfg.steps, cfg.actions))
        trace = run_internal_regret(cfg.actions, outcomes, cfg.steps, cfg.seed, _schedule(cfg))
        trace.metadata["adversary"] = "iid-uniform"
        return trace
    game = plus_minus_one()
    adv = _adversary(cfg, game.n_cols, _least_played)
    adv.reset(spawn_rngs(cfg.seed, 3)[1])
    history = PublicHistory(game.n_rows, game.n_cols)
    current = {}

    def outcomes(t, rng):
        # the opponent moves on the public history, before the player's draw
        current["j"] = adv.act(history)
        return game.payoffs[:, current["j"], 0]

    def on_play(i):
        history.record(i, current["j"])

    trace = run_internal_regret(game.n_rows, outcomes, cfg.steps, cfg.seed, _schedule(cfg),
                                on_play=on_play)
    trace.metadata["adversary"] = adv.describe()
    return trace


def _run_calibrate(cfg):
    d = 2 if cfg.scenario == "binary" else 3
    grid = simplex_grid(d, cfg.mesh)
    cal = Calibrator(grid, outcome_bound=1.0)
    adv = _adversary(cfg, d, _least_played)
    rng, rng_adv = spawn_rngs(cfg.seed)
    adv.reset(rng_adv)
    history = PublicHistory(len(grid), d)
    stages = _schedule(cfg)
    trace = MetricTrace({"run": "calibrate", "seed": cfg.seed, "adversary": adv.describe(),
                         "n_types": len(grid), "grid_mesh": grid.mesh},
                        ["calibration_score", "engine_regret", "epsilon_calibration_score"])
    vertices = np.eye(d)
    for t in range(1, cfg.steps + 1):
        l = cal.forecast(rng)
        j = adv.act(history)
        cal.observe(vertices[j])
        history.record(l, j)
        if t in stages:
            trace.append(t, calibration_score=cal.calibration_score(),
                         engine_regret=cal.engine.max_positive_regret(),
                         epsilon_calibration_score=cal.epsilon_calibration_score(grid.mesh))
    return trace


def run_experiment(config):
    """Validate ``config`` and run it; returns the trace."""
    cfg = config.resolved()
    stages = _schedule(cfg)
    if cfg.command == "internal-regret":
        trace = _run_internal_regret(cfg)
    elif cfg.command == "calibrate":
        trace = _run_calibrate(cfg)
    elif cfg.command in ("approach-blackwell", "approach-calibrated", "halfspace"):
        game = plus_minus_one()
        target = point_target([0.0])
        adv = _adversary(cfg, game.n_cols, _approach_objective(game, target))
        if cfg.command == "approach-blackwell":
            trace = run_blackwell(game, target, adv, cfg.steps, cfg.seed, stages)
        elif cfg.command == "approach-calibrated":
            table = build_best_response_table(game, target, cfg.epsilon, cfg.mesh)
            trace = run_calibrated_approach(game, target, table, adv, cfg.steps, cfg.seed,
                                            stages)
        else:
            normals, offsets = interval_halfspaces([0.0], cfg.epsilon)
            trace = run_halfspace(game, normals, offsets, adv, cfg.steps, cfg.seed, stages)
    else:
        structure = scenario_structure(cfg)
        G = WorstCase(structure) if cfg.evaluation == "worst-case" else Optimistic(structure)

        def objective(history):
            return -(history.player_frequencies() @ structure.payoffs)

        adv = _adversary(cfg, structure.n_outcomes, objective)
        if cfg.command == "partial-monitor":
            br = build_br_grid(structure, G, cfg.epsilon, seed=cfg.seed)
            trace, _ = run_partial_monitoring(br, adv, cfg.steps, cfg.seed, stages, eta=cfg.eta)
        else:
            trace = doubling_wrapper(structure, G, cfg.base, cfg.steps, cfg.seed, adv, stages)
    trace.metadata.update({"command": cfg.command, "scenario": cfg.scenario,
                           "config": cfg.as_dict(), "version": __version__,
                           "git": git_describe()})
    trace.metadata["config"].pop("out", None)
    return trace
