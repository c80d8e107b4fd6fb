"""Opponent strategies for the simulations.

An adversary picks an action index in ``range(n_actions)`` from the public
history before the player's draw of the stage is revealed.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .regret import sample_index


class PublicHistory:
    """Running summary of past play visible to both sides."""

    def __init__(self, n_player_actions, n_adversary_actions):
        self.n = 0
        self.player_counts = np.zeros(n_player_actions, dtype=np.int64)
        self.adversary_counts = np.zeros(n_adversary_actions, dtype=np.int64)
        self.last_player = None
        self.last_adversary = None

    def record(self, i, j):
        self.n += 1
        self.player_counts[i] += 1
        self.adversary_counts[j] += 1
        self.last_player = i
        self.last_adversary = j

    def player_frequencies(self):
        if self.n == 0:
            return np.full(self.player_counts.size, 1.0 / self.player_counts.size)
        return self.player_counts / self.n


class Adversary:
    kind = "abstract"

    def reset(self, rng):
        self.rng = rng
        return self

    def act(self, history):
        raise NotImplementedError

    def describe(self):
        return self.kind


class Constant(Adversary):
    kind = "const"

    def __init__(self, action):
        self.action = int(action)

    def act(self, history):
        return self.action

    def describe(self):
        return f"const:{self.action}"


class IID(Adversary):
    kind = "iid"

    def __init__(self, probabilities):
        p = np.asarray(probabilities, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ValueError(f"iid adversary needs a probability vector, got {probabilities}")
        self.p = p / p.sum()

    def act(self, history):
        return sample_index(self.p, self.rng)

    def describe(self):
        return "iid:" + ",".join(repr(float(v)) for v in self.p)


class Periodic(Adversary):
    kind = "periodic"

    def __init__(self, sequence):
        self.sequence = [int(a) for a in sequence]
        if not self.sequence:
            raise ValueError("periodic adversary needs a non-empty sequence")

    def act(self, history):
        return self.sequence[history.n % len(self.sequence)]

    def describe(self):
        return "periodic:" + ",".join(map(str, self.sequence))


class AdaptiveGreedy(Adversary):
    """Plays the action maximising ``objective(history)`` (ties: lowest index).

    The objective sees only the public history, e.g. the player's empirical
    action frequencies.
    """

    kind = "adaptive-greedy"

    def __init__(self, objective):
        self.objective = objective

    def act(self, history):
        return int(np.argmax(self.objective(history)))

    def describe(self):
        return "greedy"


def parse_adversary(spec, n_actions, objective=None):
    """Build an adversary from ``iid:0.3,0.7``, ``const:1``, ``periodic:0,1,1`` or ``greedy``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        if kind in ("const", "constant"):
            adv = Constant(int(arg))
            actions = [adv.action]
        elif kind == "iid":
            p = [float(v) for v in arg.split(",")]
            if len(p) != n_actions:
                raise ConfigError("adversary", f"iid needs {n_actions} probabilities, got {len(p)}")
            adv = IID(p)
            actions = []
        elif kind == "periodic":
            adv = Periodic([int(v) for v in arg.split(",")])
            actions = adv.sequence
        elif kind in ("greedy", "adaptive-greedy"):
            if objective is None:
                raise ConfigError("adversary", "greedy adversary is not available for this run")
            return AdaptiveGreedy(objective)
        else:
            raise ConfigError(
                "adversary", f"unknown kind {kind!r}; expected const, iid, periodic or greedy"
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("adversary", str(exc)) from None
    for a in actions:
        if not 0 <= a < n_actions:
            raise ConfigError("adversary", f"action {a} outside 0..{n_actions - 1}")
    return adv


def spawn_rngs(seed, k=2):
    """Independent generators for the player and the adversary."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]
