"""Trade formation from agent aggressiveness.

A seller with aggressiveness ``eps_s`` accepts any price at or above
``P - eps_s``; a buyer with ``eps_b`` pays up to ``P + eps_b``, where ``P`` is
the last traded price.  Only the most aggressive agent on each side can
trade, and a trade is possible once their limits cross.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .accounting import Side


class NoTrade(ValueError):
    """The side maxima do not satisfy the trade condition."""


@dataclass
class Quote:
    agent_id: int
    side: Side
    epsilon: float
    arrival_index: int


@dataclass
class QuoteBook:
    """Aggressiveness of every active agent.

    Quotes live in fixed slots; a departing agent leaves a hole that the next
    arrival fills, lowest slot first.  The slot order is what uniform agent
    selection indexes into.
    """

    slots: list[Quote | None] = field(default_factory=list)
    last_price: float = 0.0

    def __len__(self) -> int:
        return sum(q is not None for q in self.slots)

    def __iter__(self) -> Iterator[Quote]:
        return (q for q in self.slots if q is not None)

    def side(self, side: Side) -> list[Quote]:
        return [q for q in self if q.side == side]

    def count(self, side: Side) -> int:
        return sum(1 for q in self if q.side == side)

    def slot_of(self, agent_id: int) -> int:
        for i, q in enumerate(self.slots):
            if q is not None and q.agent_id == agent_id:
                return i
        raise KeyError(agent_id)

    def remove(self, agent_id: int) -> int:
        i = self.slot_of(agent_id)
        self.slots[i] = None
        return i

    def free_slots(self) -> list[int]:
        return [i for i, q in enumerate(self.slots) if q is None]


def _better(a: Quote, b: Quote) -> bool:
    if a.epsilon != b.epsilon:
        return a.epsilon > b.epsilon
    return (a.arrival_index, a.agent_id) < (b.arrival_index, b.agent_id)


def max_aggressiveness(book: QuoteBook, side: Side) -> tuple[float, int]:
    """Largest aggressiveness on ``side`` and the agent holding it.

    Ties go to the earliest arrival, then the smallest id.
    """
    best = None
    for q in book:
        if q.side == side and (best is None or _better(q, best)):
            best = q
    if best is None:
        raise ValueError(f"no active {Side(side).label} side agents")
    return best.epsilon, best.agent_id


def trade_condition(eps_max_buy: float, eps_max_sell: float) -> bool:
    return eps_max_buy + eps_max_sell >= 0.0


def price_band(last_price: float, eps_max_buy: float, eps_max_sell: float) -> tuple[float, float]:
    """Range of prices acceptable to both the best buyer and the best seller."""
    if not trade_condition(eps_max_buy, eps_max_sell):
        raise NoTrade(f"limits do not cross (eps_b={eps_max_buy}, eps_s={eps_max_sell})")
    return last_price - eps_max_sell, last_price + eps_max_buy


def midpoint_price(last_price: float, eps_max_buy: float, eps_max_sell: float) -> float:
    if not trade_condition(eps_max_buy, eps_max_sell):
        raise NoTrade(f"limits do not cross (eps_b={eps_max_buy}, eps_s={eps_max_sell})")
    # The compiled kernel evaluates this exact expression; keep them in step.
    return last_price + (eps_max_buy - eps_max_sell) / 2.0


PriceRule = Callable[[float, float, float], float]

PRICE_RULES: dict[str, PriceRule] = {"midpoint": midpoint_price}


def max_cdf(theta, n: int, mu: float, sigma: float):
    """P(max of n iid Normal(mu, sigma) draws < theta); ``theta`` may be an array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if np.ndim(theta):
        return _max_cdf_array(np.asarray(theta, dtype=np.float64), n, mu, sigma)
    phi = 0.5 * math.erfc(-(theta - mu) / (sigma * math.sqrt(2.0)))
    return phi**n


_erfc = np.frompyfunc(math.erfc, 1, 1)


def _max_cdf_array(theta, n, mu, sigma):
    phi = 0.5 * _erfc(-(theta - mu) / (sigma * math.sqrt(2.0))).astype(np.float64)
    return phi**n
