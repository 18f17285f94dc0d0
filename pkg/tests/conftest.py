import itertools
import math

import numpy as np
import pytest

from cscgame.gamecore import Game

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- independent oracles ------------------------------------------------------


def pairwise_neighbors(positions, radius):
    """O(n^2) disk-graph recomputation straight from coordinates."""
    n = len(positions)
    out = [set() for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and math.hypot(positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]) < radius:
                out[i].add(j)
    return out


def brute_force_ne(game: Game, tol: float | None = None) -> set:
    """Double loop over profiles and unilateral deviations, utility calls only."""
    tol = game.ne_tolerance if tol is None else tol
    found = set()
    for prof in itertools.product(*(range(len(a)) for a in game.action_sets)):
        stable = True
        for n in range(game.n_players):
            here = game.utility(n, prof)
            for a in range(len(game.action_sets[n])):
                if a == prof[n]:
                    continue
                alt = list(prof)
                alt[n] = a
                if game.utility(n, tuple(alt)) - here > tol:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            found.add(prof)
    return found


def table_game(tables, name="table"):
    """Game from explicit payoff arrays indexed by the full profile."""
    tables = [np.asarray(t, dtype=float) for t in tables]
    sizes = tables[0].shape
    return Game([range(s) for s in sizes], lambda n, p: float(tables[n][p]), name=name)


def anti_coordination(penalty=0.0, solo=1.0):
    """Two players, two channels; colliding earns ``penalty``, otherwise ``solo``."""
    def u(n, p):
        return penalty if p[0] == p[1] else solo
    return Game([(0, 1), (0, 1)], u, neighbor_sets=[{1}, {0}], name="anti-coordination")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
