"""Monte-Carlo reduction of the learning process to a finite chain over vertex states.

A transition row is estimated by trembling exactly one agent out of a vertex
state and following the unperturbed process (tremble rate zero) until it is
absorbed into some vertex state's neighborhood; the absorption criterion
augments the neighborhood with a top-entry guard (every agent's probability
on its current action at least ``1 - delta``) so that truncating the
infinite-horizon limit at ``t_max`` introduces negligible re-escape bias.

Long-run occupancy of the perturbed process is measured with the same
profile-plus-strategy classifier.  The aspiration condition is optional
there (``rho_delta``): at tremble rate ``lam`` the aspiration level tracks
the tremble-averaged utility, sitting roughly ``n*lam*span/2`` below the
current profile's nominal utility, so for ``lam`` comparable to
``delta/span`` the strict aspiration test would classify nothing even when
the process plainly resides at a vertex regime.  The two classifiers agree
in the small-``lam`` limit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .analysis import PureStrategyState, enumerate_pss, pure_strategy_state
from .dynamics import Engine, LearnerParams, SimState, initial_state
from .games import GameSpec
from .rng import DOMAIN_CHAIN, DOMAIN_SWEEP, StreamSet, derive_seed

_CHUNK = 256


class EstimationQualityError(RuntimeError):
    """Too many runs hit the horizon unresolved; raise rather than bias the row."""

    def __init__(self, message: str, unresolved_fraction: float):
        super().__init__(message)
        self.unresolved_fraction = unresolved_fraction


class ReducibleChainError(RuntimeError):
    """The estimated chain has more than one communicating class.

    The limiting chain is irreducible, so this signals undersampling: some
    transition that exists was never observed.
    """

    def __init__(self, classes: list[list[int]], labels: Sequence[str] | None = None):
        self.classes = classes
        if labels is not None:
            shown = [[labels[i] for i in cls] for cls in classes]
        else:
            shown = classes
        super().__init__(
            f"empirical chain is reducible; communicating classes: {shown} "
            "(increase n_samples and/or t_max)"
        )


@dataclass
class EmpiricalChain:
    """Estimated transition matrix over vertex states with sampling diagnostics."""

    states: tuple[PureStrategyState, ...]
    labels: tuple[str, ...]
    matrix: np.ndarray
    counts: np.ndarray
    samples_per_row: int
    unresolved: np.ndarray
    delta: float
    t_max: int
    seed: int

    @property
    def num_states(self) -> int:
        return len(self.states)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "profiles": [list(s.profile) for s in self.states],
            "matrix": self.matrix.tolist(),
            "counts": self.counts.tolist(),
            "samples_per_row": self.samples_per_row,
            "unresolved": self.unresolved.tolist(),
            "delta": self.delta,
            "t_max": self.t_max,
            "seed": self.seed,
        }


def chain_from_dict(data: dict, game: GameSpec) -> EmpiricalChain:
    states = tuple(enumerate_pss(game))
    labels = tuple(data["labels"])
    if labels != tuple(s.label for s in states):
        raise ValueError("chain file does not match the game's vertex states")
    return EmpiricalChain(
        states=states,
        labels=labels,
        matrix=np.asarray(data["matrix"], dtype=float),
        counts=np.asarray(data["counts"], dtype=int),
        samples_per_row=int(data["samples_per_row"]),
        unresolved=np.asarray(data["unresolved"], dtype=float),
        delta=float(data["delta"]),
        t_max=int(data["t_max"]),
        seed=int(data["seed"]),
    )


def tremble_once(
    pss: PureStrategyState, game: GameSpec, params: LearnerParams, streams: StreamSet
) -> SimState:
    """One step of the single-tremble kernel out of a vertex state."""
    eng = Engine(game, params, pss.as_state(), streams, lam=0.0)
    eng.tremble()
    return eng.snapshot()


def _row_chunk(
    game: GameSpec,
    params: LearnerParams,
    row: int,
    start: int,
    stop: int,
    delta: float,
    t_max: int,
) -> tuple[np.ndarray, int]:
    """Tally absorption targets for samples ``start..stop-1`` of one row."""
    counts = np.zeros(game.num_profiles, dtype=int)
    unresolved = 0
    n = game.num_players
    seed = params.seed
    base = pure_strategy_state(game, game.profile_from_index(row)).as_state()
    for k in range(start, stop):
        streams = StreamSet.for_run(derive_seed(seed, DOMAIN_CHAIN, row, k), n)
        eng = Engine(game, params, base, streams, lam=0.0)
        eng.tremble()
        target, _steps = eng.advance_until_absorbed(t_max, delta)
        if target < 0:
            unresolved += 1
        else:
            counts[target] += 1
    return counts, unresolved


@dataclass
class RowEstimate:
    probabilities: np.ndarray
    counts: np.ndarray
    samples: int
    unresolved: int

    @property
    def unresolved_fraction(self) -> float:
        return self.unresolved / self.samples


def estimate_chain_row(
    pss: PureStrategyState,
    game: GameSpec,
    params: LearnerParams,
    delta: float,
    n_samples: int,
    t_max: int,
    *,
    max_unresolved: float = 0.01,
    threads: int = 1,
) -> RowEstimate:
    """Monte-Carlo estimate of one transition row out of ``pss``.

    Every sample applies the single-tremble kernel, then runs the
    unperturbed process until the absorption criterion fires or ``t_max``
    steps pass.  Frequencies are taken over resolved runs only; an
    unresolved fraction above ``max_unresolved`` raises instead of biasing
    the row silently.
    """
    if delta <= params.noise.bound:
        raise ValueError(
            f"delta = {delta} must exceed the noise bound {params.noise.bound}"
        )
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    row = pss.index
    spans = [(k, min(k + _CHUNK, n_samples)) for k in range(0, n_samples, _CHUNK)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda span: _row_chunk(game, params, row, span[0], span[1], delta, t_max),
                    spans,
                )
            )
    else:
        results = [_row_chunk(game, params, row, a, b, delta, t_max) for a, b in spans]
    counts = np.zeros(game.num_profiles, dtype=int)
    unresolved = 0
    for c, u in results:
        counts += c
        unresolved += u
    frac = unresolved / n_samples
    if frac > max_unresolved:
        raise EstimationQualityError(
            f"row {pss.label}: {frac:.2%} of runs unresolved at t_max={t_max} "
            f"(threshold {max_unresolved:.2%}); increase t_max",
            frac,
        )
    resolved = n_samples - unresolved
    return RowEstimate(
        probabilities=counts / resolved,
        counts=counts,
        samples=n_samples,
        unresolved=unresolved,
    )


def estimate_chain(
    game: GameSpec,
    params: LearnerParams,
    delta: float = 0.05,
    n_samples: int = 10_000,
    t_max: int = 10_000,
    *,
    max_unresolved: float = 0.01,
    threads: int = 1,
) -> EmpiricalChain:
    """Estimate the full transition matrix over vertex states, row by row.

    Rows are independent; sample k of row r draws from streams derived via
    ``(row, sample)`` keys, so estimates are identical for any thread count.
    """
    states = tuple(enumerate_pss(game))
    rows = [
        estimate_chain_row(
            s, game, params, delta, n_samples, t_max,
            max_unresolved=max_unresolved, threads=threads,
        )
        for s in states
    ]
    return EmpiricalChain(
        states=states,
        labels=tuple(s.label for s in states),
        matrix=np.vstack([r.probabilities for r in rows]),
        counts=np.vstack([r.counts for r in rows]),
        samples_per_row=n_samples,
        unresolved=np.asarray([r.unresolved_fraction for r in rows]),
        delta=delta,
        t_max=t_max,
        seed=params.seed,
    )


# ---------------------------------------------------------------------------
# stationary distribution
# ---------------------------------------------------------------------------


def communicating_classes(matrix: np.ndarray) -> list[list[int]]:
    """Communicating classes of the positive-entry pattern of a square matrix."""
    pos = np.asarray(matrix) > 0.0
    n = pos.shape[0]
    reach = pos | np.eye(n, dtype=bool)
    while True:
        nxt = reach | (reach @ reach)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    mutual = reach & reach.T
    seen: set[int] = set()
    classes = []
    for i in range(n):
        if i in seen:
            continue
        cls = [j for j in range(n) if mutual[i, j]]
        seen.update(cls)
        classes.append(cls)
    return classes


@dataclass(frozen=True)
class StationaryDistribution:
    """A probability vector fixed by the chain, with its balance residual."""

    weights: np.ndarray
    residual: float
    method: str

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "residual": self.residual,
            "method": self.method,
        }


def _power_iteration(matrix: np.ndarray, tol: float, max_iter: int):
    # iterate the half-lazy mixture to rule out periodic cycling; same fixed point
    n = matrix.shape[0]
    lazy = 0.5 * (matrix + np.eye(n))
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x = x @ lazy
        if float(np.abs(x @ matrix - x).sum()) < tol:
            break
    else:
        return None
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def _direct_solve(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    a = (matrix - np.eye(n)).T
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    x = np.linalg.solve(a, b)
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def stationary(
    chain: EmpiricalChain | np.ndarray, method: str = "auto", tol: float = 1e-12
) -> StationaryDistribution:
    """Solve for the stationary distribution of a row-stochastic matrix.

    ``method`` is ``"power"`` (iteration until the balance residual drops
    below ``tol``), ``"direct"`` (linear solve of the balance equations
    with normalization), or ``"auto"`` (power iteration, falling back to
    the direct solve if unconverged).  Irreducibility of the positive-entry
    pattern is verified first; a reducible estimate means undersampling.
    """
    if isinstance(chain, EmpiricalChain):
        matrix = chain.matrix
        labels: Sequence[str] | None = chain.labels
    else:
        matrix = np.asarray(chain, dtype=float)
        labels = None
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"transition matrix must be square, got {matrix.shape}")
    if np.any(matrix < 0.0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("matrix rows must be probability distributions")
    classes = communicating_classes(matrix)
    if len(classes) > 1:
        raise ReducibleChainError(classes, labels)

    used = method
    if method == "power":
        weights = _power_iteration(matrix, tol, max_iter=1_000_000)
        if weights is None:
            raise RuntimeError("power iteration did not converge")
    elif method == "direct":
        weights = _direct_solve(matrix)
    elif method == "auto":
        weights = _power_iteration(matrix, tol, max_iter=1_000_000)
        used = "power"
        if weights is None:
            weights = _direct_solve(matrix)
            used = "direct"
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = float(np.abs(weights @ matrix - weights).sum())
    return StationaryDistribution(weights=weights, residual=residual, method=used)


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# occupancy of the perturbed process
# ---------------------------------------------------------------------------


@dataclass
class OccupancyEstimate:
    """Time fractions the perturbed process spends at each vertex regime."""

    labels: tuple[str, ...]
    fractions: np.ndarray
    unclassified: float
    horizon: int
    burn_in: int
    lam: float
    delta: float
    rho_delta: float | None
    seed: int

    def conditioned(self) -> np.ndarray:
        """Fractions renormalized over the classified mass (nan if none)."""
        classified = float(self.fractions.sum())
        if classified <= 0.0:
            return np.full(self.fractions.shape, math.nan)
        return self.fractions / classified

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "fractions": self.fractions.tolist(),
            "unclassified": self.unclassified,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "lambda": self.lam,
            "delta": self.delta,
            "rho_delta": self.rho_delta,
            "seed": self.seed,
        }


def estimate_occupancy(
    game: GameSpec,
    params: LearnerParams,
    horizon: int,
    burn_in: int,
    delta: float,
    *,
    rho_delta: float | None = None,
    initial: SimState | None = None,
    streams: StreamSet | None = None,
) -> OccupancyEstimate:
    """Run the perturbed process and classify every post-burn-in step.

    Classification uses the current joint action's vertex regime with the
    strategy conditions of the absorption criterion; pass ``rho_delta`` to
    also require the aspiration block within that radius (see the module
    docstring for why this is off by default).
    """
    if params.lam <= 0.0:
        raise ValueError("occupancy estimation requires a positive tremble rate")
    if delta <= params.noise.bound:
        raise ValueError(
            f"delta = {delta} must exceed the noise bound {params.noise.bound}"
        )
    if horizon < 1 or burn_in < 0:
        raise ValueError("horizon must be >= 1 and burn_in >= 0")
    if streams is None:
        streams = StreamSet.for_run(params.seed, game.num_players)
    if initial is None:
        initial = initial_state(game, params, streams)
    eng = Engine(game, params, initial, streams)
    if burn_in:
        eng.advance_many(burn_in)
    counts = [0] * game.num_profiles
    unclassified = eng.advance_many(horizon, delta=delta, rho_delta=rho_delta, counts_out=counts)
    states = enumerate_pss(game)
    return OccupancyEstimate(
        labels=tuple(s.label for s in states),
        fractions=np.asarray(counts, dtype=float) / horizon,
        unclassified=unclassified / horizon,
        horizon=horizon,
        burn_in=burn_in,
        lam=params.lam,
        delta=delta,
        rho_delta=rho_delta,
        seed=params.seed,
    )


# ---------------------------------------------------------------------------
# tremble-rate sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    lam: float
    replica: int
    tv: float
    unclassified: float


@dataclass(frozen=True)
class SweepAggregate:
    lam: float
    mean_tv: float
    se_tv: float
    mean_unclassified: float


@dataclass
class SweepResult:
    """Per-replica and per-value summaries of occupancy-vs-stationary distance."""

    rows: list[SweepRow]
    aggregates: list[SweepAggregate]
    stationary_weights: np.ndarray

    def trend_holds(self, se_factor: float = 2.0) -> bool:
        """Mean distance non-increasing toward smaller tremble rates, within
        ``se_factor`` standard errors of each consecutive difference."""
        aggs = sorted(self.aggregates, key=lambda a: -a.lam)
        for prev, cur in zip(aggs, aggs[1:]):
            slack = se_factor * math.sqrt(prev.se_tv**2 + cur.se_tv**2)
            if cur.mean_tv > prev.mean_tv + slack:
                return False
        return True


def sweep_lambda(
    game: GameSpec,
    params: LearnerParams,
    lambdas: Sequence[float],
    horizon: int,
    burn_in: int,
    delta: float,
    chain: EmpiricalChain,
    *,
    n_seeds: int = 10,
    rho_delta: float | None = None,
    threads: int = 1,
) -> SweepResult:
    """Occupancy-vs-stationary total variation across tremble rates.

    For each rate and replica, runs an independent occupancy estimate (seed
    derived from ``params.seed`` and the job indices), conditions it on the
    classified mass, and reports the total-variation distance to the
    chain's stationary distribution.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    pi = stationary(chain).weights

    jobs = [(j, r) for j in range(len(lambdas)) for r in range(n_seeds)]

    def one(job: tuple[int, int]) -> SweepRow:
        j, r = job
        sub = replace(
            params, lam=float(lambdas[j]), seed=derive_seed(params.seed, DOMAIN_SWEEP, j, r)
        )
        occ = estimate_occupancy(
            game, sub, horizon, burn_in, delta, rho_delta=rho_delta
        )
        cond = occ.conditioned()
        tv = math.nan if np.isnan(cond).any() else total_variation(cond, pi)
        return SweepRow(lam=float(lambdas[j]), replica=r, tv=tv, unclassified=occ.unclassified)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(job) for job in jobs]

    aggregates = []
    for j, lam in enumerate(lambdas):
        block = rows[j * n_seeds : (j + 1) * n_seeds]
        tvs = np.asarray([row.tv for row in block])
        uncl = np.asarray([row.unclassified for row in block])
        se = float(tvs.std(ddof=1) / math.sqrt(len(tvs))) if len(tvs) > 1 else 0.0
        aggregates.append(
            SweepAggregate(
                lam=float(lam),
                mean_tv=float(tvs.mean()),
                se_tv=se,
                mean_unclassified=float(uncl.mean()),
            )
        )
    return SweepResult(rows=rows, aggregates=aggregates, stationary_weights=pi)
