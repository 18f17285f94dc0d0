"""Distributed learning dynamics under the fully/partially uncoupled information models.

Every algorithm takes a ``numpy.random.Generator`` and is bit-for-bit
reproducible for a given (game, seed, parameters).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .gamecore import Game, Profile, deviate
from .games import HierarchicalPlan

SLA_THRESHOLD = 0.99
WINDOW = 20
EPS0 = 0.3
TAU = 100.0


@dataclass
class RunRecord:
    algorithm: str
    seed: int | None
    actions: np.ndarray  # (iterations, players)
    payoffs: np.ndarray  # realized (normalized for SLA/Q) payoffs per iteration
    converged_at: int | None
    final_profile: Profile
    wall_clock_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return int(self.actions.shape[0])

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def iter_json_lines(self):
        """One JSON object per iteration; wall-clock time is deliberately omitted."""
        for k in range(self.iterations):
            yield json.dumps(
                {
                    "iteration": k,
                    "actions": [int(a) for a in self.actions[k]],
                    "payoffs": [round(float(x), 12) for x in self.payoffs[k]],
                }
            )

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "iterations": self.iterations,
            "converged_at": self.converged_at,
            "final_profile": [int(a) for a in self.final_profile],
            **{k: v for k, v in self.extra.items() if not isinstance(v, np.ndarray)},
        }


def _normalizer(game: Game, payoff_normalizer):
    if payoff_normalizer is not None:
        return np.broadcast_to(np.asarray(payoff_normalizer, dtype=float), (game.n_players,))
    if game.payoff_bound is None:
        raise ContractViolation(f"{game.name} declares no payoff bound; pass payoff_normalizer")
    return game.payoff_bound


def _padded(game: Game) -> tuple[np.ndarray, int]:
    width = int(game.sizes.max())
    valid = np.arange(width)[None, :] < game.sizes[:, None]
    return valid, width


# --- stochastic learning automata ---------------------------------------------


def sla_update(probs: np.ndarray, actions: np.ndarray, rewards: np.ndarray, b: float) -> np.ndarray:
    """Linear reward-inaction step, row n touching only (actions[n], rewards[n]).

    p[n, a] += b * r[n] * (1{a == actions[n]} - p[n, a])
    """
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(actions)), actions] = 1.0
    return probs + (b * rewards)[:, None] * (onehot - probs)


def run_sla(
    game: Game,
    horizon: int,
    b: float,
    rng: np.random.Generator,
    payoff_normalizer=None,
    threshold: float = SLA_THRESHOLD,
    seed: int | None = None,
    keep_trajectory: bool = True,
) -> RunRecord:
    """Each player samples from its own mixed strategy and reinforces the action
    it played in proportion to its own normalized realized payoff."""
    if not 0.0 < b < 1.0:
        raise ContractViolation("step size b must lie in (0, 1)")
    t0 = time.perf_counter()
    scale = _normalizer(game, payoff_normalizer)
    valid, width = _padded(game)
    probs = np.where(valid, 1.0 / game.sizes[:, None], 0.0)
    n = game.n_players
    acts, pays = [], []
    converged_at = None
    for k in range(horizon):
        u = rng.random(n)
        actions = np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), game.sizes - 1)
        realized = game.realize(actions, rng)
        rewards = realized / scale
        if np.any(rewards < -1e-12) or np.any(rewards > 1.0 + 1e-9):
            raise ContractViolation(f"normalized payoff outside [0, 1] at iteration {k}: {rewards}")
        rewards = np.clip(rewards, 0.0, 1.0)
        probs = sla_update(probs, actions, rewards, b)
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9) or np.any(probs < 0):
            raise AssertionError("SLA probability vector left the simplex")
        if keep_trajectory:
            acts.append(actions)
            pays.append(rewards)
        if np.all(probs.max(axis=1) >= threshold):
            converged_at = k
            break
    final = tuple(int(a) for a in probs.argmax(axis=1))
    return RunRecord(
        "sla",
        seed,
        np.array(acts, dtype=np.int64).reshape(-1, n),
        np.array(pays, dtype=float).reshape(-1, n),
        converged_at,
        final,
        time.perf_counter() - t0,
        {"iterations_run": k + 1 if horizon else 0},
    )


# --- best response ------------------------------------------------------------


def _local_view(game: Game, profile, player: int) -> tuple[int, ...]:
    """Profile with every entry outside the player's dependency set masked to -1."""
    if game.neighbor_sets is None:
        return tuple(profile)
    view = [-1] * game.n_players
    for j in game.dependency_set(player):
        view[j] = profile[j]
    return tuple(view)


def run_best_response(
    game: Game,
    horizon: int,
    schedule: str = "round-robin",
    rng: np.random.Generator | None = None,
    initial=None,
    seed: int | None = None,
) -> RunRecord:
    """Asynchronous best-response dynamics.

    A player moves only if some action beats its current one by more than the
    game's NE tolerance (lowest index among maximizers). Players see only the
    actions in their dependency set. Iterations are sweeps of ``n_players``
    updates; the run stops after a sweep with no move.
    """
    if schedule not in ("round-robin", "random"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if schedule == "random" and rng is None:
        raise ValueError("random schedule needs an rng")
    t0 = time.perf_counter()
    n = game.n_players
    if initial is None:
        profile = list(game.random_profile(rng)) if rng is not None else [0] * n
    else:
        profile = list(game.validate_profile(initial))
    tol = game.ne_tolerance
    acts, pays = [], []
    converged_at = None
    moves = 0
    for sweep in range(horizon):
        order = range(n) if schedule == "round-robin" else rng.permutation(n)
        changed = False
        for p in order:
            p = int(p)
            view = _local_view(game, profile, p)
            values = [game.utility(p, deviate(view, p, a)) for a in range(len(game.action_sets[p]))]
            top = max(values)
            if top - values[profile[p]] > tol:
                profile[p] = values.index(top)
                changed = True
                moves += 1
        acts.append(list(profile))
        # observer bookkeeping, not part of any player's decision
        pays.append(game.utilities(profile) if n <= 64 else np.full(n, np.nan))
        if not changed:
            converged_at = sweep
            break
    return RunRecord(
        f"best-response[{schedule}]",
        seed,
        np.array(acts, dtype=np.int64).reshape(-1, n),
        np.array(pays, dtype=float).reshape(-1, n),
        converged_at,
        tuple(profile),
        time.perf_counter() - t0,
        {"moves": moves},
    )


# --- Q-learning ---------------------------------------------------------------


def epsilon_schedule(k, eps0: float = EPS0, tau: float = TAU):
    return eps0 / (1.0 + np.asarray(k) / tau)


def q_update(q: np.ndarray, actions: np.ndarray, rewards: np.ndarray, alpha: float) -> np.ndarray:
    rows = np.arange(len(actions))
    q = q.copy()
    q[rows, actions] = (1.0 - alpha) * q[rows, actions] + alpha * rewards
    return q


def _greedy(q: np.ndarray, valid: np.ndarray) -> np.ndarray:
    return np.where(valid, q, -np.inf).argmax(axis=1)


def _q_loop(game: Game, horizon, alpha, eps0, tau, rng, window, q0, scale, keep_trajectory, age=0):
    """Shared epsilon-greedy loop; ``age`` offsets each player's exploration clock."""
    valid, width = _padded(game)
    n = game.n_players
    q = q0.copy()
    learners = game.sizes > 1
    greedy = _greedy(q, valid)
    stable = 0
    acts, pays = [], []
    converged_at = None
    k = -1
    for k in range(horizon):
        eps = epsilon_schedule(k + age, eps0, tau)
        explore = (rng.random(n) < eps) & learners
        randoms = np.minimum((rng.random(n) * game.sizes).astype(np.int64), game.sizes - 1)
        actions = np.where(explore, randoms, greedy)
        rewards = game.realize(actions, rng) / scale
        if np.any(~np.isfinite(rewards)):
            raise ContractViolation("non-finite payoff")
        q = q_update(q, actions, rewards, alpha)
        new_greedy = _greedy(q, valid)
        stable = stable + 1 if np.array_equal(new_greedy, greedy) else 0
        greedy = new_greedy
        if keep_trajectory:
            acts.append(actions)
            pays.append(rewards)
        if stable >= window:
            converged_at = k + 1
            break
    return q, greedy, acts, pays, converged_at, k + 1


def run_q_learning_simultaneous(
    game: Game,
    horizon: int,
    alpha: float,
    rng: np.random.Generator,
    eps0: float = EPS0,
    tau: float = TAU,
    window: int = WINDOW,
    q_init: float = 0.0,
    payoff_normalizer=None,
    seed: int | None = None,
    keep_trajectory: bool = True,
) -> RunRecord:
    """Stateless independent Q-learning over own actions with decaying epsilon-greedy play.

    Converged once the greedy profile has not changed for ``window`` consecutive
    iterations; ``converged_at`` counts the iterations used up to that point.
    """
    if not 0.0 < alpha <= 1.0:
        raise ContractViolation("alpha must lie in (0, 1]")
    t0 = time.perf_counter()
    scale = _normalizer(game, payoff_normalizer)
    valid, width = _padded(game)
    q0 = np.where(valid, q_init, -np.inf)
    q, greedy, acts, pays, conv, used = _q_loop(
        game, horizon, alpha, eps0, tau, rng, window, q0, scale, keep_trajectory
    )
    n = game.n_players
    return RunRecord(
        "q-simultaneous",
        seed,
        np.array(acts, dtype=np.int64).reshape(-1, n),
        np.array(pays, dtype=float).reshape(-1, n),
        conv,
        tuple(int(a) for a in greedy),
        time.perf_counter() - t0,
        {"iterations_run": used},
    )


def run_hierarchical_q(
    plan: HierarchicalPlan,
    horizon: int,
    alpha: float,
    rng: np.random.Generator,
    eps0: float = EPS0,
    tau: float = TAU,
    window: int = WINDOW,
    q_init: float = 0.0,
    initial=None,
    seed: int | None = None,
) -> RunRecord:
    """Staged Q-learning over a hierarchical plan; ``horizon`` applies per stage.

    Stage 1 learns header channels with members held at the initial profile,
    stage 2 learns member channels cluster by cluster under the header policy
    (clusters run side by side, so the stage costs its slowest cluster),
    stage 3 lets only cells in residual inter-cluster conflicts keep learning,
    warm-started on their current channel and resuming their own exploration
    clock. Iterations add up across stages; the run counts as converged only if
    every executed stage converged. No per-iteration trajectory is kept.
    """
    t0 = time.perf_counter()
    full = plan.full_game
    n = full.n_players
    profile = list(full.random_profile(rng) if initial is None else full.validate_profile(initial))
    age = np.zeros(n)  # iterations each cell has spent learning so far
    stages = {}
    ok = True
    total = 0

    headers = list(plan.clusters.headers)
    hg = plan.header_game(profile)
    valid, _ = _padded(hg)
    _, greedy, _, _, conv, used = _q_loop(
        hg, horizon, alpha, eps0, tau, rng, window,
        np.where(valid, q_init, -np.inf), _normalizer(hg, None), False,
    )
    spent = used if conv is None else conv
    stages["stage1"] = {"iterations": spent, "converged_at": conv, "players": int((hg.sizes > 1).sum())}
    ok = ok and conv is not None
    total += spent
    age[headers] = spent
    header_channels = [int(a) for a in greedy]
    for h, c in zip(headers, header_channels):
        profile[h] = c

    # clusters learn side by side and independently; the stage lasts as long as the slowest
    slowest, conv_all, players = 0, True, 0
    for mg in plan.member_games(header_channels):
        valid, _ = _padded(mg)
        _, greedy, _, _, conv, used = _q_loop(
            mg, horizon, alpha, eps0, tau, rng, window,
            np.where(valid, q_init, -np.inf), _normalizer(mg, None), False,
        )
        spent = used if conv is None else conv
        conv_all = conv_all and conv is not None
        slowest = max(slowest, spent)
        players += int((mg.sizes > 1).sum())
        for c, opts, a in zip(mg.cells, mg.action_sets, greedy):
            profile[c] = opts[int(a)]
            if len(opts) > 1:
                age[c] = spent
    stages["stage2"] = {"iterations": slowest, "converged_at": slowest if conv_all else None, "players": players}
    ok = ok and conv_all
    total += slowest

    conflicts = plan.residual_conflicts(profile)
    if conflicts:
        g3 = plan.stage3_game(profile)
        valid, _ = _padded(g3)
        # warm start: the current channel looks as good as its present payoff
        now = full.realize(profile, rng) / full.payoff_bound
        q0 = np.where(valid, q_init, -np.inf)
        for c in np.flatnonzero(g3.sizes > 1):
            q0[c] = np.where(valid[c], 0.0, -np.inf)
            q0[c, profile[c]] = now[c]
        _, greedy, _, _, conv, used = _q_loop(
            g3, horizon, alpha, eps0, tau, rng, window, q0, _normalizer(g3, None), False, age
        )
        spent = used if conv is None else conv
        stages["stage3"] = {"iterations": spent, "converged_at": conv, "players": int((g3.sizes > 1).sum())}
        ok = ok and conv is not None
        total += spent
        profile = list(g3.lift(greedy))
    else:
        stages["stage3"] = {"iterations": 0, "converged_at": 0, "players": 0}

    return RunRecord(
        "q-hierarchical",
        seed,
        np.zeros((0, n), dtype=np.int64),
        np.zeros((0, n)),
        total if ok else None,
        tuple(int(a) for a in profile),
        time.perf_counter() - t0,
        {"stages": stages, "conflicts_after_stage2": len(conflicts), "iterations_run": total},
    )
