"""Seeded random streams shared by every simulation backend.

Each named stream is an independent PCG64 generator spawned from one
``SeedSequence``.  Draws are produced in fixed-size chunks and consumed
through a cursor, so the compiled kernel (which reads the buffers
directly) and the Python routes (which pull one value at a time) see the
same numbers in the same order regardless of when a refill happens.
"""

from __future__ import annotations

import numpy as np

CHUNK = 1 << 16

STREAMS = ("selection", "aggressiveness", "side")


class Stream:
    __slots__ = ("name", "gen", "buf", "pos", "_draw")

    def __init__(self, name, gen, draw):
        self.name = name
        self.gen = gen
        self._draw = draw
        self.buf = draw(gen, CHUNK)
        self.pos = 0

    def refill(self):
        tail = self.buf[self.pos:]
        self.buf = np.concatenate([tail, self._draw(self.gen, CHUNK)])
        self.pos = 0

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def next(self):
        if self.pos >= len(self.buf):
            self.refill()
        v = self.buf[self.pos]
        self.pos += 1
        return v


class RngStreams:
    """Selection, aggressiveness and side-assignment streams for one run.

    ``replicate`` is folded into the seed sequence's spawn key so replicate
    runs of one seed never share draws.
    """

    def __init__(self, seed: int, n_agents: int, replicate: int = 0):
        self.seed = seed
        self.replicate = replicate
        root = np.random.SeedSequence(entropy=seed, spawn_key=(replicate,))
        sel, agg, side = (np.random.Generator(np.random.PCG64(s)) for s in root.spawn(3))
        self.selection = Stream(
            "selection", sel, lambda g, k: g.integers(0, n_agents, size=k, dtype=np.int64)
        )
        # standard normals; the caller scales them to Normal(mu, sigma)
        self.aggressiveness = Stream("aggressiveness", agg, lambda g, k: g.standard_normal(k))
        self.side = Stream("side", side, lambda g, k: g.random(k))

    def pick(self) -> int:
        return int(self.selection.next())

    def normal(self, mu: float, sigma: float) -> float:
        return mu + sigma * float(self.aggressiveness.next())

    def uniform(self) -> float:
        return float(self.side.next())
