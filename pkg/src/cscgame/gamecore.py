"""Finite-game machinery: profiles, Nash checks, enumeration, potential tests."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError

DEFAULT_CAP = 10**7
DETERMINISTIC_TOL = 1e-9
EXPECTATION_TOL = 1e-6

Profile = tuple[int, ...]


class Game:
    """A finite normal-form game given by a utility oracle.

    Profiles are tuples of action *indices* into ``action_sets``. ``payoff`` is
    the player's own performance figure used for welfare; it defaults to the
    utility and differs only for games whose players optimize a neighbourhood
    aggregate. ``realize`` draws one period's realized utilities for all players
    (defaults to the deterministic utilities).
    """

    def __init__(
        self,
        action_sets: Sequence[Sequence],
        utility: Callable[[int, Profile], float],
        *,
        neighbor_sets: Sequence[frozenset[int]] | None = None,
        payoff: Callable[[int, Profile], float] | None = None,
        realize: Callable[[Profile, np.random.Generator], np.ndarray] | None = None,
        payoff_bound: Sequence[float] | float | None = None,
        ne_tolerance: float = DETERMINISTIC_TOL,
        name: str = "game",
    ):
        self.action_sets = [tuple(a) for a in action_sets]
        if any(len(a) == 0 for a in self.action_sets):
            raise ValueError("every player needs at least one action")
        self._utility = utility
        self._payoff = payoff
        self._realize = realize
        self.neighbor_sets = None if neighbor_sets is None else [frozenset(s) for s in neighbor_sets]
        self.ne_tolerance = ne_tolerance
        self.name = name
        if payoff_bound is not None:
            payoff_bound = np.broadcast_to(np.asarray(payoff_bound, dtype=float), (self.n_players,)).copy()
        self.payoff_bound = payoff_bound

    @property
    def n_players(self) -> int:
        return len(self.action_sets)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(a) for a in self.action_sets], dtype=np.int64)

    @property
    def profile_space_size(self) -> int:
        return math.prod(len(a) for a in self.action_sets)

    def utility(self, player: int, profile) -> float:
        return self._utility(player, tuple(int(x) for x in profile))

    def payoff(self, player: int, profile) -> float:
        if self._payoff is None:
            return self.utility(player, profile)
        return self._payoff(player, tuple(int(x) for x in profile))

    def utilities(self, profile) -> np.ndarray:
        return np.array([self.utility(n, profile) for n in range(self.n_players)])

    def realize(self, profile, rng: np.random.Generator) -> np.ndarray:
        if self._realize is None:
            return self.utilities(profile)
        return self._realize(tuple(int(x) for x in profile), rng)

    def dependency_set(self, player: int) -> list[int]:
        """Players whose actions may influence ``player``'s utility, itself included."""
        if self.neighbor_sets is None:
            return list(range(self.n_players))
        return sorted(self.neighbor_sets[player] | {player})

    def random_profile(self, rng: np.random.Generator) -> Profile:
        return tuple(int(rng.integers(len(a))) for a in self.action_sets)

    def validate_profile(self, profile) -> Profile:
        profile = tuple(int(x) for x in profile)
        if len(profile) != self.n_players:
            raise ValueError(f"profile has {len(profile)} entries, game has {self.n_players} players")
        for n, (a, acts) in enumerate(zip(profile, self.action_sets)):
            if not 0 <= a < len(acts):
                raise ValueError(f"action {a} out of range for player {n}")
        return profile


def deviate(profile, player: int, action: int) -> Profile:
    p = list(profile)
    p[player] = action
    return tuple(p)


def best_response(game: Game, profile, player: int, tie_break: str = "lowest", rng=None) -> int:
    """Utility-maximizing action of ``player`` against the rest of ``profile``.

    Ties go to the lowest index, or to a uniformly drawn maximizer when
    ``tie_break="random"`` (requires ``rng``).
    """
    values = [game.utility(player, deviate(profile, player, a)) for a in range(len(game.action_sets[player]))]
    top = max(values)
    best = [a for a, v in enumerate(values) if v == top]
    if tie_break == "lowest" or len(best) == 1:
        return best[0]
    if tie_break == "random":
        return int(best[int(rng.integers(len(best)))])
    raise ValueError(f"unknown tie_break {tie_break!r}")


def deviation_gain(game: Game, profile, player: int) -> float:
    current = game.utility(player, profile)
    best = max(game.utility(player, deviate(profile, player, a)) for a in range(len(game.action_sets[player])))
    return best - current


def is_pure_ne(game: Game, profile, tolerance: float | None = None) -> bool:
    tol = game.ne_tolerance if tolerance is None else tolerance
    profile = game.validate_profile(profile)
    return all(deviation_gain(game, profile, n) <= tol for n in range(game.n_players))


# --- exhaustive scans ---------------------------------------------------------


def _local_table(game: Game, player: int, fn) -> tuple[list[int], np.ndarray]:
    deps = game.dependency_set(player)
    shape = tuple(int(game.sizes[d]) for d in deps)
    table = np.empty(shape, dtype=float)
    base = [0] * game.n_players
    for local in itertools.product(*(range(s) for s in shape)):
        for d, a in zip(deps, local):
            base[d] = a
        table[local] = fn(player, tuple(base))
    return deps, table


@dataclass
class ProfileScan:
    """Vectorized sweep over the full profile space (flat C-order indices)."""

    sizes: tuple[int, ...]
    ne_mask: np.ndarray
    welfare: np.ndarray | None

    def profile(self, index: int) -> Profile:
        return tuple(int(x) for x in np.unravel_index(int(index), self.sizes))

    def ne_indices(self) -> np.ndarray:
        return np.flatnonzero(self.ne_mask)


def _check_cap(game: Game, cap: int) -> None:
    size = game.profile_space_size
    if size > cap:
        raise CapacityError(f"profile space has {size} profiles, exceeding the cap of {cap}")


def scan_profiles(
    game: Game,
    welfare: str | Callable | None = "sum",
    tolerance: float | None = None,
    cap: int = DEFAULT_CAP,
    chunk: int = 1 << 20,
) -> ProfileScan:
    """NE mask and welfare for every profile, using per-player local tables.

    Each player's utility is tabulated once over its dependency set, so the cost
    is the sum of local table sizes plus one gather per profile and player.
    """
    _check_cap(game, cap)
    tol = game.ne_tolerance if tolerance is None else tolerance
    sizes = tuple(int(s) for s in game.sizes)
    total = game.profile_space_size
    util_tables = [_local_table(game, n, game.utility) for n in range(game.n_players)]
    best_tables = []
    for n, (deps, table) in enumerate(util_tables):
        pos = deps.index(n)
        rest = [d for d in deps if d != n]
        best_tables.append((rest, table.max(axis=pos)))
    pay_tables = None
    if welfare in ("sum", "min"):
        if game._payoff is None:
            pay_tables = util_tables
        else:
            pay_tables = [_local_table(game, n, game.payoff) for n in range(game.n_players)]

    ne_mask = np.empty(total, dtype=bool)
    wel = np.empty(total, dtype=float) if welfare is not None else None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        coords = np.unravel_index(idx, sizes)
        ok = np.ones(len(idx), dtype=bool)
        acc = None
        for n in range(game.n_players):
            deps, table = util_tables[n]
            flat = np.ravel_multi_index([coords[d] for d in deps], table.shape)
            current = table.ravel()[flat]
            rest, best = best_tables[n]
            if rest:
                best_v = best.ravel()[np.ravel_multi_index([coords[d] for d in rest], best.shape)]
            else:
                best_v = np.full(len(idx), float(best))
            ok &= (best_v - current) <= tol
            if pay_tables is not None:
                pdeps, ptab = pay_tables[n]
                pv = ptab.ravel()[np.ravel_multi_index([coords[d] for d in pdeps], ptab.shape)]
                if acc is None:
                    acc = np.zeros(len(idx)) + pv if welfare == "sum" else pv.copy()
                else:
                    acc = acc + pv if welfare == "sum" else np.minimum(acc, pv)
        ne_mask[idx] = ok
        if callable(welfare):
            for k, i in enumerate(idx):
                wel[i] = welfare(tuple(int(c[k]) for c in coords))
        elif wel is not None:
            wel[idx] = acc
    return ProfileScan(sizes, ne_mask, wel)


def enumerate_pure_ne(game: Game, tolerance: float | None = None, cap: int = DEFAULT_CAP) -> list[Profile]:
    scan = scan_profiles(game, welfare=None, tolerance=tolerance, cap=cap)
    return [scan.profile(i) for i in scan.ne_indices()]


def welfare_value(game: Game, profile, welfare="sum") -> float:
    if callable(welfare):
        return float(welfare(tuple(profile)))
    values = [game.payoff(n, profile) for n in range(game.n_players)]
    if welfare == "sum":
        total = 0.0
        for v in values:
            total = total + v
        return total
    if welfare == "min":
        return min(values)
    raise ValueError(f"unknown welfare {welfare!r}")


def exhaustive_optimum(game: Game, welfare="sum", cap: int = DEFAULT_CAP) -> tuple[Profile, float]:
    """Welfare-maximizing profile (first in lexicographic order on ties)."""
    scan = scan_profiles(game, welfare=welfare, cap=cap)
    k = int(np.argmax(scan.welfare))
    return scan.profile(k), float(scan.welfare[k])


# --- potential-game checks ----------------------------------------------------


@dataclass
class PotentialReport:
    trials: int
    violations: int
    max_gap: float


def cycle_sum(game: Game, profile, i: int, j: int, x: int, y: int) -> float:
    """Sum of unilateral utility changes around the 4-cycle in which ``i``
    moves to ``x``, ``j`` moves to ``y``, then both move back."""
    a = tuple(profile)
    b = deviate(a, i, x)
    c = deviate(b, j, y)
    d = deviate(c, i, a[i])
    return (
        (game.utility(i, b) - game.utility(i, a))
        + (game.utility(j, c) - game.utility(j, b))
        + (game.utility(i, d) - game.utility(i, c))
        + (game.utility(j, a) - game.utility(j, d))
    )


def verify_potential_cycles(game: Game, trials: int, rng: np.random.Generator, tolerance: float = EXPECTATION_TOL) -> PotentialReport:
    """Sample random 4-cycles of unilateral deviations; an exact potential game
    has zero utility-change sum around each of them.

    The second player is drawn from the first player's dependency set when the
    game declares one, since cycles between independent players sum to zero
    trivially.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    movers = [n for n in range(game.n_players) if len(game.action_sets[n]) > 1]
    violations, max_gap = 0, 0.0
    if len(movers) < 2:
        return PotentialReport(trials, 0, 0.0)
    mover_set = set(movers)
    for _ in range(trials):
        i = movers[int(rng.integers(len(movers)))]
        pool = [j for j in game.dependency_set(i) if j != i and j in mover_set] if game.neighbor_sets else []
        if not pool:
            pool = [j for j in movers if j != i]
        j = pool[int(rng.integers(len(pool)))]
        a = game.random_profile(rng)
        x = (a[i] + 1 + int(rng.integers(len(game.action_sets[i]) - 1))) % len(game.action_sets[i])
        y = (a[j] + 1 + int(rng.integers(len(game.action_sets[j]) - 1))) % len(game.action_sets[j])
        gap = abs(cycle_sum(game, a, i, j, x, y))
        max_gap = max(max_gap, gap)
        if gap > tolerance:
            violations += 1
    return PotentialReport(trials, violations, max_gap)


def verify_potential_exhaustive(game: Game, tolerance: float = DETERMINISTIC_TOL, cap: int = 10**5) -> PotentialReport:
    """Check every 4-cycle of the game (tiny instances only)."""
    _check_cap(game, cap)
    count, violations, max_gap = 0, 0, 0.0
    ranges = [range(len(a)) for a in game.action_sets]
    for a in itertools.product(*ranges):
        for i, j in itertools.combinations(range(game.n_players), 2):
            for x in ranges[i]:
                if x == a[i]:
                    continue
                for y in ranges[j]:
                    if y == a[j]:
                        continue
                    gap = abs(cycle_sum(game, a, i, j, x, y))
                    count += 1
                    max_gap = max(max_gap, gap)
                    violations += gap > tolerance
    return PotentialReport(count, int(violations), max_gap)


# --- derived games ------------------------------------------------------------


def restrict(game: Game, base_profile, allowed: dict[int, Sequence[int]]) -> Game:
    """Sub-game in which player ``n`` may only use ``allowed[n]`` (original
    indices); players absent from ``allowed`` are frozen at ``base_profile``.
    """
    base = tuple(int(x) for x in base_profile)
    choices = [tuple(allowed.get(n, (base[n],))) for n in range(game.n_players)]

    def lift(p) -> Profile:
        return tuple(choices[n][k] for n, k in enumerate(p))

    def realize(p, rng):
        return game.realize(lift(p), rng)

    sub = Game(
        [[game.action_sets[n][k] for k in ch] for n, ch in enumerate(choices)],
        lambda n, p: game.utility(n, lift(p)),
        neighbor_sets=game.neighbor_sets,
        payoff=(lambda n, p: game.payoff(n, lift(p))) if game._payoff is not None else None,
        realize=realize,
        payoff_bound=game.payoff_bound,
        ne_tolerance=game.ne_tolerance,
        name=f"{game.name}|restricted",
    )
    sub.lift = lift
    sub.choices = choices
    return sub
