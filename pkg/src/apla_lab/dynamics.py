"""Synchronous learning dynamics with aspiration-scaled reinforcement.

Each iteration runs four stages for every agent at once: action selection
(with tremble probability ``lam``), noisy utility measurement, strategy
reinforcement scaled by the aspiration factor, and the slow aspiration-level
update.  The plain reward-proportional scheme ("pla" mode) is the special
case in which the aspiration factor equals the measured utility.

Canonical arithmetic, normative for reproducibility and shared by the fast
engine and the standalone operations:

* reinforcement weight ``f = epsilon * phi`` computed once per agent-step;
  chosen entry ``x_a + f*(1 - x_a)``, every other entry ``x_j - f*x_j``;
  entries summed in index order and renormalized only when the sum drifts
  from 1 by more than 1e-15;
* aspiration step ``en = epsilon * nu`` computed once; gap ``g = m - rho``;
  new level ``rho + en*g``;
* noise value ``(2u - 1) * bound`` from one uniform draw ``u``.

Draw order per step: for each agent in index order, a tremble coin then an
index draw from the agent's own stream; then one noise draw per agent, in
agent order, from the shared stream (see :mod:`apla_lab.rng`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .games import GameSpec, NoiseModel
from .rng import StreamSet, check_seed

MODE_APLA = "apla"
MODE_PLA = "pla"

_SIMPLEX_ATOL = 1e-9
_RENORM_TOL = 1e-15


@dataclass(frozen=True)
class LearnerParams:
    """Full parameterization of one learning run.

    ``nu`` is the aspiration-rate factor; leaving it ``None`` selects the
    slow-timescale default ``nu = epsilon`` (so the aspiration step size
    ``epsilon*nu`` vanishes faster than ``epsilon``).  Supplying an explicit
    ``nu`` bypasses that rule; the hard invariant ``epsilon*nu < 1`` is
    always enforced.
    """

    epsilon: float
    lam: float = 0.0
    nu: float | None = None
    h: float = 0.04
    c: float = 10.0
    noise: NoiseModel = NoiseModel()
    mode: str = MODE_APLA
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.nu is not None and self.nu <= 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.mode not in (MODE_APLA, MODE_PLA):
            raise ValueError(f"mode must be '{MODE_APLA}' or '{MODE_PLA}', got {self.mode!r}")
        if self.mode == MODE_APLA and self.h <= 0.0:
            raise ValueError(f"h must be positive in {MODE_APLA} mode, got {self.h}")
        if self.h < 0.0:
            raise ValueError(f"h must be non-negative, got {self.h}")
        if self.c < 0.0:
            raise ValueError(f"c must be non-negative, got {self.c}")
        if self.epsilon * self.nu_value >= 1.0:
            raise ValueError(
                f"epsilon*nu = {self.epsilon * self.nu_value:.6g} must stay below 1"
            )
        check_seed(self.seed)

    @property
    def nu_value(self) -> float:
        return self.epsilon if self.nu is None else self.nu

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "lambda": self.lam,
            "nu": self.nu,
            "h": self.h,
            "c": self.c,
            "mode": self.mode,
            "seed": self.seed,
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerParams":
        return cls(
            epsilon=float(data["epsilon"]),
            lam=float(data.get("lambda", 0.0)),
            nu=None if data.get("nu") is None else float(data["nu"]),
            h=float(data.get("h", 0.04)),
            c=float(data.get("c", 10.0)),
            noise=NoiseModel.from_dict(data.get("noise", {})),
            mode=str(data.get("mode", MODE_APLA)),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class SimState:
    """One point of the learning process: joint action, strategies, aspirations.

    ``last_noise`` is a diagnostic of the most recent measurement noise; it
    is regenerated fresh every step and carries no dynamics.
    """

    profile: tuple[int, ...]
    strategies: tuple[np.ndarray, ...]
    aspirations: np.ndarray
    last_noise: np.ndarray
    step_count: int = 0

    def __post_init__(self) -> None:
        strategies = tuple(np.asarray(x, dtype=float).copy() for x in self.strategies)
        n = len(strategies)
        if len(self.profile) != n:
            raise ValueError("profile length does not match number of strategies")
        for i, (a, x) in enumerate(zip(self.profile, strategies)):
            if not 0 <= a < x.shape[0]:
                raise ValueError(f"profile action {a} out of range for player {i}")
            if np.any(x < -1e-15) or abs(float(x.sum()) - 1.0) > 1e-12:
                raise ValueError(f"player {i} strategy is not on the simplex: {x}")
            x.setflags(write=False)
        aspirations = np.asarray(self.aspirations, dtype=float).copy()
        last_noise = np.asarray(self.last_noise, dtype=float).copy()
        if aspirations.shape != (n,) or last_noise.shape != (n,):
            raise ValueError("aspirations/last_noise must have one entry per player")
        aspirations.setflags(write=False)
        last_noise.setflags(write=False)
        object.__setattr__(self, "profile", tuple(int(a) for a in self.profile))
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "aspirations", aspirations)
        object.__setattr__(self, "last_noise", last_noise)


def _check_simplex(strategy: np.ndarray) -> np.ndarray:
    x = np.asarray(strategy, dtype=float)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError("strategy must be a non-empty vector")
    if np.any(x < -1e-12) or abs(float(x.sum()) - 1.0) > _SIMPLEX_ATOL:
        raise ValueError(f"strategy is not on the probability simplex: {x}")
    return x


def _cumwalk(x, u: float) -> int:
    """Cumulative-sum selection; the final bucket absorbs floating-point slack."""
    acc = 0.0
    for j, p in enumerate(x):
        acc += p
        if u < acc:
            return j
    return len(x) - 1


def sample_action(strategy: Sequence[float], lam: float, rng: np.random.Generator) -> int:
    """Draw an action: from ``strategy`` with probability 1-lam, else uniformly.

    Consumes exactly two uniforms (coin, then index draw) so that draw
    accounting is independent of the branch taken.
    """
    x = _check_simplex(strategy)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    coin = rng.random()
    draw = rng.random()
    if coin < lam:
        k = x.shape[0]
        a = int(draw * k)
        return k - 1 if a == k else a
    return _cumwalk(x.tolist(), draw)


def aspiration_factor(measurement: float, gap: float, h: float, c: float) -> float:
    """Reinforcement multiplier: the measurement when satisfied (gap >= 0),
    otherwise the measurement discounted by ``c*gap`` and floored at ``h``."""
    if gap >= 0.0:
        return measurement
    return max(h, measurement + c * gap)


def strategy_update(
    strategy: Sequence[float], chosen: int, phi: float, epsilon: float
) -> np.ndarray:
    """Reinforce ``chosen``: move the strategy toward its vertex by ``epsilon*phi``."""
    x = _check_simplex(strategy)
    k = x.shape[0]
    if not 0 <= chosen < k:
        raise ValueError(f"chosen action {chosen} out of range")
    if phi < 0.0:
        raise ValueError(f"phi must be non-negative, got {phi}")
    f = epsilon * phi
    if f >= 1.0:
        raise ValueError(f"epsilon*phi = {f:.6g} >= 1 would leave the simplex")
    out = x.tolist()
    s = 0.0
    for j in range(k):
        if j == chosen:
            out[j] = out[j] + f * (1.0 - out[j])
        else:
            out[j] = out[j] - f * out[j]
        s += out[j]
    if abs(s - 1.0) > _RENORM_TOL:
        for j in range(k):
            out[j] /= s
    return np.asarray(out, dtype=float)


def aspiration_update(rho: float, measurement: float, epsilon: float, nu: float) -> float:
    """Move the aspiration level toward the measurement by the slow step ``epsilon*nu``."""
    en = epsilon * nu
    if en >= 1.0:
        raise ValueError(f"epsilon*nu = {en:.6g} must stay below 1")
    g = measurement - rho
    return rho + en * g


class Engine:
    """Mutable in-place stepping core behind :func:`step` and :func:`run`.

    One instance drives one trajectory.  State lives in plain Python lists
    for speed; :meth:`snapshot` converts back to :class:`SimState`.  The
    single step-body implementation is :meth:`advance_many`.
    """

    __slots__ = (
        "n", "counts", "strides", "u_flat", "x", "rho", "alpha",
        "last_noise", "last_meas", "t", "agents", "noise_stream",
        "eps", "lam", "en", "h", "c", "bound", "apla", "_forced",
    )

    def __init__(
        self,
        game: GameSpec,
        params: LearnerParams,
        state: SimState,
        streams: StreamSet,
        lam: float | None = None,
    ):
        n = game.num_players
        if len(streams.agents) != n:
            raise ValueError("stream set does not match the number of players")
        self.n = n
        self.counts = list(game.action_counts)
        strides = []
        acc = 1
        for k in game.action_counts:
            strides.append(acc)
            acc *= k
        self.strides = strides
        self.u_flat = [game.flat_utilities(i).tolist() for i in range(n)]
        self.x = [list(map(float, x)) for x in state.strategies]
        self.rho = [float(r) for r in state.aspirations]
        self.alpha = list(state.profile)
        self.last_noise = [float(v) for v in state.last_noise]
        idx = self._profile_index()
        self.last_meas = [self.u_flat[i][idx] + self.last_noise[i] for i in range(n)]
        self.t = state.step_count
        self.agents = streams.agents
        self.noise_stream = streams.noise
        self.eps = params.epsilon
        self.lam = params.lam if lam is None else lam
        self.en = params.epsilon * params.nu_value
        self.h = params.h
        self.c = params.c
        self.bound = params.noise.bound
        self.apla = params.mode == MODE_APLA
        self._forced = None

    def _profile_index(self) -> int:
        idx = 0
        for a, s in zip(self.alpha, self.strides):
            idx += a * s
        return idx

    def advance_many(
        self,
        nsteps: int,
        delta: float | None = None,
        rho_delta: float | None = None,
        counts_out: list[int] | None = None,
    ) -> int:
        """Run ``nsteps`` iterations; optionally tally the post-step regime.

        With ``delta`` set, every post-step state is classified against the
        vertex state of its current joint action (top entry >= 1-delta and
        strategy block within delta; aspiration block within ``rho_delta``
        when given) and tallied into ``counts_out`` by flat profile index.
        Returns the number of unclassified steps.
        """
        n = self.n
        counts = self.counts
        strides = self.strides
        u_flat = self.u_flat
        x = self.x
        rho = self.rho
        alpha = self.alpha
        last_noise = self.last_noise
        last_meas = self.last_meas
        agents = self.agents
        noise_next = self.noise_stream.next
        eps = self.eps
        lam = self.lam
        en = self.en
        h = self.h
        c = self.c
        bound = self.bound
        apla = self.apla
        forced = self._forced
        self._forced = None
        classify = delta is not None
        if classify and counts_out is None:
            raise ValueError("counts_out is required when delta is given")
        d2 = delta * delta if classify else 0.0
        one_minus = 1.0 - delta if classify else 0.0
        r2 = rho_delta * rho_delta if rho_delta is not None else -1.0
        unclassified = 0

        for _ in range(nsteps):
            if forced is None:
                for i in range(n):
                    st = agents[i]
                    coin = st.next()
                    draw = st.next()
                    if coin < lam:
                        k = counts[i]
                        a = int(draw * k)
                        if a == k:
                            a = k - 1
                    else:
                        a = _cumwalk(x[i], draw)
                    alpha[i] = a
            else:
                for i in range(n):
                    alpha[i] = forced[i]
                forced = None
            idx = 0
            for i in range(n):
                idx += alpha[i] * strides[i]
            for i in range(n):
                v = (2.0 * noise_next() - 1.0) * bound
                m = u_flat[i][idx] + v
                g = m - rho[i]
                if apla:
                    phi = m if g >= 0.0 else max(h, m + c * g)
                else:
                    phi = m
                f = eps * phi
                xi = x[i]
                a = alpha[i]
                s = 0.0
                for j in range(counts[i]):
                    if j == a:
                        xj = xi[j] + f * (1.0 - xi[j])
                    else:
                        xj = xi[j] - f * xi[j]
                    xi[j] = xj
                    s += xj
                if abs(s - 1.0) > _RENORM_TOL:
                    for j in range(counts[i]):
                        xi[j] /= s
                rho[i] = rho[i] + en * g
                last_noise[i] = v
                last_meas[i] = m
            self.t += 1
            if classify:
                tallied = False
                dx2 = 0.0
                for i in range(n):
                    xi = x[i]
                    a = alpha[i]
                    top = xi[a]
                    if top < one_minus:
                        break
                    e = 1.0 - top
                    dx2 += e * e
                    for j in range(counts[i]):
                        if j != a:
                            vj = xi[j]
                            dx2 += vj * vj
                    if dx2 >= d2:
                        break
                else:
                    if r2 >= 0.0:
                        dr2 = 0.0
                        for i in range(n):
                            dv = rho[i] - u_flat[i][idx]
                            dr2 += dv * dv
                        if dr2 < r2:
                            counts_out[idx] += 1
                            tallied = True
                    else:
                        counts_out[idx] += 1
                        tallied = True
                if not tallied:
                    unclassified += 1
        return unclassified

    def classify(self, delta: float, rho_delta: float | None = None) -> int:
        """Flat profile index of the vertex regime containing the state, or -1.

        Conditions (all strict, mirroring the neighborhood definition plus
        the top-entry absorption guard): current action equals the regime's
        profile by construction, every agent's entry on its current action
        is at least ``1-delta``, the strategy block lies within ``delta`` of
        the vertex profile, and, when ``rho_delta`` is given, the aspiration
        block lies within ``rho_delta`` of the nominal utilities.
        """
        x = self.x
        alpha = self.alpha
        idx = self._profile_index()
        one_minus = 1.0 - delta
        dx2 = 0.0
        for i in range(self.n):
            xi = x[i]
            a = alpha[i]
            top = xi[a]
            if top < one_minus:
                return -1
            e = 1.0 - top
            dx2 += e * e
            for j in range(self.counts[i]):
                if j != a:
                    v = xi[j]
                    dx2 += v * v
        if dx2 >= delta * delta:
            return -1
        if rho_delta is not None:
            dr2 = 0.0
            for i in range(self.n):
                dv = self.rho[i] - self.u_flat[i][idx]
                dr2 += dv * dv
            if dr2 >= rho_delta * rho_delta:
                return -1
        return idx

    def advance_until_absorbed(self, t_max: int, delta: float) -> tuple[int, int]:
        """Step until the full absorption criterion holds or ``t_max`` steps pass.

        Returns ``(flat profile index, steps taken)`` or ``(-1, t_max)``.
        The state is checked before the first step, so an already-absorbed
        state resolves in zero steps.
        """
        for t in range(t_max + 1):
            k = self.classify(delta, delta)
            if k >= 0:
                return k, t
            if t == t_max:
                return -1, t_max
            self.advance_many(1)
        raise AssertionError("unreachable")

    def tremble(self, agent: int | None = None) -> None:
        """One step of the single-tremble kernel: exactly one agent, chosen
        uniformly when not given, plays a uniform random action while every
        other agent samples from its own strategy; measurement and updates
        then proceed as in a regular step with the tremble rate absent."""
        n = self.n
        if agent is None:
            u = self.noise_stream.next()
            agent = int(u * n)
            if agent == n:
                agent = n - 1
        elif not 0 <= agent < n:
            raise ValueError(f"agent index {agent} out of range")
        sel = []
        for i in range(n):
            d = self.agents[i].next()
            if i == agent:
                k = self.counts[i]
                a = int(d * k)
                if a == k:
                    a = k - 1
            else:
                a = _cumwalk(self.x[i], d)
            sel.append(a)
        self._forced = sel
        self.advance_many(1)

    def snapshot(self) -> SimState:
        return SimState(
            profile=tuple(self.alpha),
            strategies=tuple(np.asarray(xi, dtype=float) for xi in self.x),
            aspirations=np.asarray(self.rho, dtype=float),
            last_noise=np.asarray(self.last_noise, dtype=float),
            step_count=self.t,
        )


def initial_state(
    game: GameSpec,
    params: LearnerParams,
    streams: StreamSet,
    *,
    strategies: Sequence[Sequence[float]] | None = None,
    aspirations: Sequence[float] | None = None,
    profile: Sequence[int] | None = None,
) -> SimState:
    """Build a start state, defaulting to uniform strategies and aspirations
    set to the measured utilities of a first sampled profile.

    Draws are consumed only for the parts left unspecified: sampling the
    initial profile takes the regular two agent-stream draws per agent, and
    measuring the initial aspirations takes one shared-stream draw per
    agent.  Pass the same ``streams`` the run will use.
    """
    n = game.num_players
    if strategies is None:
        xs = tuple(np.full(k, 1.0 / k) for k in game.action_counts)
    else:
        xs = tuple(_check_simplex(x) for x in strategies)
        if len(xs) != n:
            raise ValueError("need one strategy vector per player")
    if profile is None:
        lam = params.lam
        prof = []
        for i in range(n):
            st = streams.agents[i]
            coin = st.next()
            draw = st.next()
            if coin < lam:
                k = game.action_counts[i]
                a = int(draw * k)
                if a == k:
                    a = k - 1
            else:
                a = _cumwalk(xs[i].tolist(), draw)
            prof.append(a)
        prof = tuple(prof)
    else:
        prof = game.validate_profile(profile)
    if aspirations is None:
        bound = params.noise.bound
        noise = [(2.0 * streams.noise.next() - 1.0) * bound for _ in range(n)]
        rho = [game.utility(i, prof) + noise[i] for i in range(n)]
    else:
        rho = [float(r) for r in aspirations]
        if len(rho) != n:
            raise ValueError("need one aspiration level per player")
        noise = [0.0] * n
    return SimState(
        profile=prof,
        strategies=xs,
        aspirations=np.asarray(rho),
        last_noise=np.asarray(noise),
        step_count=0,
    )


def step(state: SimState, game: GameSpec, params: LearnerParams, streams: StreamSet) -> SimState:
    """One full synchronous iteration for all agents."""
    eng = Engine(game, params, state, streams)
    eng.advance_many(1)
    return eng.snapshot()


@dataclass(frozen=True)
class Recorder:
    """Which state coordinates a run logs, and how often."""

    stride: int = 1
    actions: bool = True
    strategies: bool = True
    aspirations: bool = True
    measurements: bool = True

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass
class Trajectory:
    """Recorded samples of one run; unrecorded fields are ``None``."""

    times: np.ndarray
    actions: np.ndarray | None
    strategies: tuple[np.ndarray, ...] | None
    aspirations: np.ndarray | None
    measurements: np.ndarray | None
    final_state: SimState

    def __len__(self) -> int:
        return int(self.times.shape[0])


def run(
    game: GameSpec,
    params: LearnerParams,
    horizon: int,
    *,
    recorder: Recorder | None = None,
    initial: SimState | None = None,
    streams: StreamSet | None = None,
) -> Trajectory:
    """Apply :func:`step` ``horizon`` times, recording per the recorder policy.

    The trajectory always includes the initial state, so ``horizon=0`` yields
    a single record.  For a fixed ``params.seed`` (and explicit ``initial``
    or the default initialization) the output is bitwise reproducible.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    rec = recorder or Recorder()
    if streams is None:
        streams = StreamSet.for_run(params.seed, game.num_players)
    if initial is None:
        initial = initial_state(game, params, streams)
    eng = Engine(game, params, initial, streams)

    times: list[int] = []
    actions: list[tuple[int, ...]] = []
    strategies: list[list[list[float]]] = []
    aspirations: list[list[float]] = []
    measurements: list[list[float]] = []

    def record() -> None:
        times.append(eng.t)
        if rec.actions:
            actions.append(tuple(eng.alpha))
        if rec.strategies:
            strategies.append([list(xi) for xi in eng.x])
        if rec.aspirations:
            aspirations.append(list(eng.rho))
        if rec.measurements:
            measurements.append(list(eng.last_meas))

    record()
    remaining = horizon
    while remaining > 0:
        chunk = min(rec.stride, remaining)
        eng.advance_many(chunk)
        remaining -= chunk
        record()

    n = game.num_players
    strat_arrays = None
    if rec.strategies:
        strat_arrays = tuple(
            np.asarray([row[i] for row in strategies], dtype=float) for i in range(n)
        )
    return Trajectory(
        times=np.asarray(times, dtype=int),
        actions=np.asarray(actions, dtype=int) if rec.actions else None,
        strategies=strat_arrays,
        aspirations=np.asarray(aspirations, dtype=float) if rec.aspirations else None,
        measurements=np.asarray(measurements, dtype=float) if rec.measurements else None,
        final_state=eng.snapshot(),
    )
