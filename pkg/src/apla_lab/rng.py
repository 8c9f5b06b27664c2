"""Deterministic random-stream derivation and draw accounting.

One master seed determines every draw in the toolkit.  Streams are derived
through ``numpy.random.SeedSequence`` spawn keys so that adding agents or
redistributing work across workers never perturbs other streams:

* agent i's action stream      -> spawn key ``(DOMAIN_AGENT, i)``
* shared measurement stream    -> spawn key ``(DOMAIN_NOISE,)``
* chain sample (row r, run k)  -> sub-seed via ``(DOMAIN_CHAIN, r, k)``
* sweep replica (value j, r)   -> sub-seed via ``(DOMAIN_SWEEP, j, r)``

Draw accounting (normative for reproducibility):

* action selection consumes exactly 2 uniforms from the agent's stream per
  step: the tremble coin, then the index draw (used either for the uniform
  action or for the cumulative-sum walk over the strategy);
* utility measurement consumes 1 uniform per agent per step from the shared
  stream, in agent order;
* the single-tremble kernel consumes 1 uniform from the shared stream to
  pick the trembling agent, then 1 uniform per agent from its own stream
  (index draw only; no coin).

Block draws from a PCG64 generator are bit-identical to repeated scalar
draws, so buffered consumption below matches ``Generator.random()`` calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DOMAIN_AGENT = 1
DOMAIN_NOISE = 2
DOMAIN_CHAIN = 3
DOMAIN_OCCUPANCY = 4
DOMAIN_SWEEP = 5

_MAX_SEED = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def derive_seed(master_seed: int, *key: int) -> int:
    """A 64-bit child seed for an independent derived context."""
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_generator(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(check_seed(master_seed), spawn_key=tuple(key))
    )


class UniformStream:
    """Buffered uniform [0,1) draws from a dedicated generator."""

    __slots__ = ("_gen", "_buf", "_pos", "_block")

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 4096):
        self._gen = np.random.default_rng(seed_seq)
        self._buf: list[float] = []
        self._pos = 0
        self._block = block

    def next(self) -> float:
        pos = self._pos
        buf = self._buf
        if pos >= len(buf):
            buf = self._gen.random(self._block).tolist()
            self._buf = buf
            pos = 0
        self._pos = pos + 1
        return buf[pos]


@dataclass
class StreamSet:
    """The per-trajectory stream bundle: one stream per agent plus the shared one."""

    agents: list[UniformStream]
    noise: UniformStream

    @classmethod
    def for_run(cls, seed: int, num_agents: int) -> "StreamSet":
        seed = check_seed(seed)
        agents = [
            UniformStream(np.random.SeedSequence(seed, spawn_key=(DOMAIN_AGENT, i)))
            for i in range(num_agents)
        ]
        noise = UniformStream(np.random.SeedSequence(seed, spawn_key=(DOMAIN_NOISE,)))
        return cls(agents=agents, noise=noise)
