"""Unit-agent market with Gaussian aggressiveness resampling.

Each of the ``N`` agents has one unit to buy or sell.  One event picks an
agent uniformly at random and redraws its aggressiveness from
``Normal(mu, sigma)``; then, if the best buyer and best seller cross, they
trade one unit at the midpoint price and leave.  Two new agents replace them
straight away, each a buyer with probability ``N_sell / (N_sell + N_buy)``
computed from the agents present at that moment.

Two routes run this model:

* the stepwise functions (:func:`init_population`, :func:`resample_step`,
  :func:`try_trade`, :func:`replenish`) built on the accounting and
  negotiation objects, used by the ``"reference"`` backend;
* the array event loop in :mod:`slipsim.kernel` (compiled or pure Python).

Given the same seed they produce identical trade logs.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .accounting import (
    AgentAccount,
    MarketState,
    Side,
    Trade,
    apply_trade,
    market_delta_wealth_check,
    open_account,
    outstanding_volumes,
    snapshot,
)
from .negotiation import PRICE_RULES, Quote, QuoteBook, max_aggressiveness, max_cdf, trade_condition
from .rng import RngStreams

IDLE_CAP = 10_000_000


class ConfigError(ValueError):
    """Invalid model configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SimulationStalled(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_agents: int = 10
    mu: float = -0.5
    sigma: float = 0.2
    seed: int = 0
    n_trades: int = 100_000
    # None means 10% of n_trades
    warmup_trades: int | None = None
    initial_price: float = 0.0

    def __post_init__(self):
        if self.n_agents < 2:
            raise ConfigError("n_agents", f"need at least 2 agents, got {self.n_agents}")
        if not self.sigma > 0:
            raise ConfigError("sigma", f"must be > 0, got {self.sigma}")
        if not np.isfinite(self.mu):
            raise ConfigError("mu", f"must be finite, got {self.mu}")
        if self.n_trades < 1:
            raise ConfigError("n_trades", f"must be >= 1, got {self.n_trades}")
        if self.warmup_trades is not None and self.warmup_trades < 0:
            raise ConfigError("warmup_trades", f"must be >= 0, got {self.warmup_trades}")
        if self.seed < 0:
            raise ConfigError("seed", f"must be non-negative, got {self.seed}")
        if not np.isfinite(self.initial_price):
            raise ConfigError("initial_price", "must be finite")

    @property
    def warmup(self) -> int:
        if self.warmup_trades is None:
            return self.n_trades // 10
        return self.warmup_trades

    @property
    def total_trades(self) -> int:
        return self.n_trades + self.warmup

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in data or data[f.name] is None:
                continue
            value = data[f.name]
            try:
                if f.name in ("mu", "sigma", "initial_price"):
                    value = float(value)
                else:
                    value = int(value)
                    if isinstance(data[f.name], float) and data[f.name] != value:
                        raise ValueError
            except (TypeError, ValueError):
                raise ConfigError(f.name, f"cannot interpret {data[f.name]!r}") from None
            kwargs[f.name] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class ExecutionRecord:
    agent_id: int
    side: Side
    arrival_index: int
    liquidation_index: int
    reference_price: float
    fill_price: float

    @property
    def tau(self) -> int:
        return self.liquidation_index - self.arrival_index

    @property
    def slippage(self) -> float:
        # one fill of dx = -side units
        return -int(self.side) * (self.fill_price - self.reference_price)


@dataclass
class RunArtifacts:
    """Everything one run produced, as column arrays.

    ``executions`` covers every liquidation, warmup included; use
    :attr:`completed` for the post-warmup records that feed statistics.
    """

    config: ModelConfig
    replicate: int
    backend: str
    events: int
    trades: dict[str, np.ndarray]
    executions: dict[str, np.ndarray]
    arrivals: dict[str, np.ndarray]
    final_price: float
    final_slots: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_trades(self) -> int:
        return len(self.trades["price"])

    def trade_log(self) -> dict[str, np.ndarray]:
        """Trade log columns in output order, including derived ones."""
        t = self.trades
        vb = t["v_buy_before"]
        vs = t["v_sell_before"]
        return {
            "index": np.arange(1, self.n_trades + 1, dtype=np.int64),
            "price": t["price"],
            "buyer_id": t["buyer_id"],
            "seller_id": t["seller_id"],
            "v_buy_before": vb,
            "v_sell_before": vs,
            "lambda_before": (vb - vs) / (vb + vs),
            "delta_p": t["delta_p"],
            "sum_dw_residual": t["sum_dw_residual"],
        }

    def execution_table(self, completed_only: bool = True) -> dict[str, np.ndarray]:
        e = self.executions
        mask = (
            e["liquidation_index"] > self.config.warmup
            if completed_only
            else np.ones(len(e["agent_id"]), dtype=bool)
        )
        side = e["side"][mask]
        ref = e["reference_price"][mask]
        fill = e["fill_price"][mask]
        return {
            "agent_id": e["agent_id"][mask],
            "side": side,
            "arrival_index": e["arrival_index"][mask],
            "liquidation_index": e["liquidation_index"][mask],
            "tau": e["liquidation_index"][mask] - e["arrival_index"][mask],
            "reference_price": ref,
            "fill_price": fill,
            "slippage": -side * (fill - ref),
        }

    @property
    def completed(self) -> list[ExecutionRecord]:
        tab = self.execution_table()
        return [
            ExecutionRecord(int(a), Side(int(s)), int(i), int(k), float(r), float(f))
            for a, s, i, k, r, f in zip(
                tab["agent_id"],
                tab["side"],
                tab["arrival_index"],
                tab["liquidation_index"],
                tab["reference_price"],
                tab["fill_price"],
            )
        ]


# ---------------------------------------------------------------------------
# stepwise route


@dataclass
class TradeOutcome:
    trade: Trade
    v_buy_before: int
    v_sell_before: int
    delta_p: float
    residual: float
    eps_buy: float
    eps_sell: float
    departed: tuple[AgentAccount, AgentAccount]


def init_population(config: ModelConfig, rng: RngStreams) -> tuple[MarketState, QuoteBook]:
    """Half buyers (rounded down), half sellers, all at the initial price."""
    state = MarketState(last_price=config.initial_price)
    book = QuoteBook(last_price=config.initial_price)
    n_buy = config.n_agents // 2
    for slot in range(config.n_agents):
        side = Side.BUYER if slot < n_buy else Side.SELLER
        acc = open_account(side, 1, config.initial_price, 0, agent_id=slot)
        state.add(acc)
        book.slots.append(Quote(acc.id, side, rng.normal(config.mu, config.sigma), 0))
    state.next_agent_id = config.n_agents
    return state, book


def resample_step(book: QuoteBook, rng: RngStreams, mu: float, sigma: float) -> int:
    """Redraw the aggressiveness of one uniformly chosen agent; return its id."""
    quote = book.slots[rng.pick()]
    quote.epsilon = rng.normal(mu, sigma)
    return quote.agent_id


def try_trade(state: MarketState, book: QuoteBook, price_rule: str = "midpoint") -> TradeOutcome | None:
    eb, buyer_id = max_aggressiveness(book, Side.BUYER)
    es, seller_id = max_aggressiveness(book, Side.SELLER)
    if not trade_condition(eb, es):
        return None
    price_prev = state.last_price
    price = PRICE_RULES[price_rule](price_prev, eb, es)

    present = [state.accounts[q.agent_id] for q in book]
    before = snapshot(present)
    v_buy, v_sell = outstanding_volumes(present)
    buyer = state.accounts[buyer_id]
    seller = state.accounts[seller_id]
    trade = apply_trade(state, buyer, seller, 1, price)
    residual = market_delta_wealth_check(before, state.accounts, price_prev, price)

    for acc in (buyer, seller):
        book.remove(acc.id)
        del state.accounts[acc.id]
    book.last_price = price
    return TradeOutcome(trade, v_buy, v_sell, price - price_prev, residual, eb, es, (buyer, seller))


def replenish(
    state: MarketState, book: QuoteBook, rng: RngStreams, mu: float, sigma: float
) -> list[AgentAccount]:
    """Fill the free slots with new unit agents, lowest slot first.

    The side of each arrival is drawn from the counts present at that
    moment, so an empty side is always refilled first.
    """
    n_buy = book.count(Side.BUYER)
    n_sell = book.count(Side.SELLER)
    new = []
    for slot in book.free_slots():
        total = n_buy + n_sell
        p_buy = n_sell / total if total > 0 else 0.5
        if rng.uniform() < p_buy:
            side = Side.BUYER
            n_buy += 1
        else:
            side = Side.SELLER
            n_sell += 1
        acc = open_account(side, 1, state.last_price, state.trade_count, agent_id=state.next_agent_id)
        state.next_agent_id += 1
        state.add(acc)
        book.slots[slot] = Quote(acc.id, side, rng.normal(mu, sigma), state.trade_count)
        new.append(acc)
    return new


def _run_reference(config: ModelConfig, rng: RngStreams, idle_cap: int):
    state, book = init_population(config, rng)
    trades, execs = [], []
    arrivals = [(a.id, int(a.side), 0, a.reference_price) for a in state.accounts.values()]
    events = idle = 0
    while state.trade_count < config.total_trades:
        if idle >= idle_cap:
            raise SimulationStalled(_stall_message(config, events, state.trade_count, idle_cap))
        events += 1
        idle += 1
        resample_step(book, rng, config.mu, config.sigma)
        out = try_trade(state, book)
        if out is None:
            continue
        idle = 0
        t = out.trade
        trades.append(
            (t.buyer_id, t.seller_id, out.v_buy_before, out.v_sell_before, t.price, out.delta_p, out.residual,
             out.eps_buy, out.eps_sell)
        )
        for acc in out.departed:
            execs.append((acc.id, int(acc.side), acc.arrival_index, acc.liquidation_index, acc.reference_price, t.price))
        for acc in replenish(state, book, rng, config.mu, config.sigma):
            arrivals.append((acc.id, int(acc.side), acc.arrival_index, acc.reference_price))
    final = {
        "agent_id": np.array([q.agent_id for q in book.slots], dtype=np.int64),
        "side": np.array([int(q.side) for q in book.slots], dtype=np.int64),
        "epsilon": np.array([q.epsilon for q in book.slots]),
    }
    return _pack(config, rng, "reference", events, trades, execs, arrivals, state.last_price, final)


def _pack(config, rng, backend, events, trades, execs, arrivals, final_price, final):
    ti = np.array([r[:4] for r in trades], dtype=np.int64).reshape(-1, 4)
    tf = np.array([r[4:] for r in trades], dtype=np.float64).reshape(-1, 5)
    ei = np.array([r[:4] for r in execs], dtype=np.int64).reshape(-1, 4)
    ef = np.array([r[4:] for r in execs], dtype=np.float64).reshape(-1, 2)
    ai = np.array([r[:3] for r in arrivals], dtype=np.int64).reshape(-1, 3)
    af = np.array([r[3] for r in arrivals], dtype=np.float64)
    return _artifacts(config, rng.replicate, backend, events, ti, tf, ei, ef, ai, af, final_price, final)


def _artifacts(config, replicate, backend, events, ti, tf, ei, ef, ai, af, final_price, final):
    return RunArtifacts(
        config=config,
        replicate=replicate,
        backend=backend,
        events=int(events),
        trades={
            "buyer_id": ti[:, 0].copy(),
            "seller_id": ti[:, 1].copy(),
            "v_buy_before": ti[:, 2].copy(),
            "v_sell_before": ti[:, 3].copy(),
            "price": tf[:, 0].copy(),
            "delta_p": tf[:, 1].copy(),
            "sum_dw_residual": tf[:, 2].copy(),
            "eps_buy": tf[:, 3].copy(),
            "eps_sell": tf[:, 4].copy(),
        },
        executions={
            "agent_id": ei[:, 0].copy(),
            "side": ei[:, 1].copy(),
            "arrival_index": ei[:, 2].copy(),
            "liquidation_index": ei[:, 3].copy(),
            "reference_price": ef[:, 0].copy(),
            "fill_price": ef[:, 1].copy(),
        },
        arrivals={
            "agent_id": ai[:, 0].copy(),
            "side": ai[:, 1].copy(),
            "arrival_index": ai[:, 2].copy(),
            "reference_price": af.copy(),
        },
        final_price=float(final_price),
        final_slots=final,
    )


def _stall_message(config: ModelConfig, events: int, trades: int, idle_cap: int) -> str:
    return (
        f"no trade in {idle_cap} consecutive resample events "
        f"(after {events} events and {trades} trades; mu={config.mu}, sigma={config.sigma}, "
        f"N={config.n_agents}); the trade condition is practically unreachable"
    )


# ---------------------------------------------------------------------------
# array route


def _run_kernel(config: ModelConfig, rng: RngStreams, backend: str, idle_cap: int):
    advance = kernel.get_advance(backend)
    n = config.n_agents
    n_buy = n // 2
    total = config.total_trades

    side = np.where(np.arange(n) < n_buy, -1, 1).astype(np.int64)
    ids = np.arange(n, dtype=np.int64)
    arrival = np.zeros(n, dtype=np.int64)
    ref = np.full(n, config.initial_price)
    cash = -side * ref
    eps = np.array([rng.normal(config.mu, config.sigma) for _ in range(n)])

    counters = np.zeros(kernel.N_COUNTERS, dtype=np.int64)
    counters[kernel.C_NEXT_ID] = n
    counters[kernel.C_ARRIVALS] = n
    price = np.array([config.initial_price])

    ti = np.zeros((total, 4), dtype=np.int64)
    tf = np.zeros((total, 5))
    ei = np.zeros((2 * total, 4), dtype=np.int64)
    ef = np.zeros((2 * total, 2))
    ai = np.zeros((2 * total + n, 3), dtype=np.int64)
    af = np.zeros(2 * total + n)
    ai[:n, 0] = ids
    ai[:n, 1] = side
    af[:n] = config.initial_price

    streams = {
        kernel.NEED_SELECTION: (rng.selection, kernel.C_SEL),
        kernel.NEED_AGGRESSIVENESS: (rng.aggressiveness, kernel.C_Z),
        kernel.NEED_SIDE: (rng.side, kernel.C_U),
    }
    while True:
        counters[kernel.C_SEL] = rng.selection.pos
        counters[kernel.C_Z] = rng.aggressiveness.pos
        counters[kernel.C_U] = rng.side.pos
        status = advance(
            side, ids, arrival, eps, ref, cash,
            rng.selection.buf, rng.aggressiveness.buf, rng.side.buf,
            counters, price,
            config.mu, config.sigma, total, idle_cap,
            ti, tf, ei, ef, ai, af,
        )
        rng.selection.pos = int(counters[kernel.C_SEL])
        rng.aggressiveness.pos = int(counters[kernel.C_Z])
        rng.side.pos = int(counters[kernel.C_U])
        if status == kernel.DONE:
            break
        if status == kernel.STALLED:
            raise SimulationStalled(
                _stall_message(
                    config, int(counters[kernel.C_EVENTS]), int(counters[kernel.C_TRADES]), idle_cap
                )
            )
        stream, _ = streams[status]
        stream.refill()

    final = {"agent_id": ids, "side": side, "epsilon": eps}
    return _artifacts(
        config, rng.replicate, backend, counters[kernel.C_EVENTS],
        ti, tf, ei, ef, ai, af, price[0], final,
    )


def run_simulation(
    config: ModelConfig,
    backend: str = "auto",
    replicate: int = 0,
    idle_cap: int = IDLE_CAP,
) -> RunArtifacts:
    """Run until ``config.total_trades`` trades have happened.

    ``backend`` is ``"auto"``, ``"compiled"``, ``"python"`` or
    ``"reference"`` (the slow object-level route).  All give the same
    result for the same config and replicate.
    """
    rng = RngStreams(config.seed, config.n_agents, replicate)
    if backend == "reference":
        return _run_reference(config, rng, idle_cap)
    if backend == "auto":
        backend = kernel.default_backend()
    return _run_kernel(config, rng, backend, idle_cap)


def frozen_participation(
    n_buy: int, n_sell: int, mu: float, sigma: float, trades: int, seed: int = 0, batch: int = 1 << 16
) -> np.ndarray:
    """How often each buyer of a frozen population is the one that trades.

    Every trial redraws all aggressiveness values fresh; trials where the
    best buyer and seller do not cross are discarded.  Returns per-buyer
    counts over ``trades`` crossing trials.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = np.zeros(n_buy, dtype=np.int64)
    got = 0
    while got < trades:
        b = rng.normal(mu, sigma, size=(batch, n_buy))
        s = rng.normal(mu, sigma, size=(batch, n_sell))
        fired = b.max(axis=1) + s.max(axis=1) >= 0.0
        winners = b[fired].argmax(axis=1)[: trades - got]
        counts += np.bincount(winners, minlength=n_buy)
        got += winners.size
    return counts


def _ks_distance(x: np.ndarray, cdf: np.ndarray) -> float:
    # x sorted, cdf evaluated at x
    n = x.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def dynamic_diagnostics(run: RunArtifacts) -> dict:
    """Observed quantities whose i.i.d. predictions are not expected to hold exactly.

    At each post-warmup trade, compares the winning buyer and seller
    aggressiveness with the fresh-draw law ``F^n`` (mixed over the observed
    side sizes), and reports how often the longest-waiting buyer is the one
    that trades, against the uniform ``1/N_B``.
    """
    cfg = run.config
    keep = np.arange(1, run.n_trades + 1) > cfg.warmup
    out: dict = {"trades": int(keep.sum())}
    if not keep.any():
        return out

    for name, eps_key, n_key in (("buy", "eps_buy", "v_buy_before"), ("sell", "eps_sell", "v_sell_before")):
        eps = run.trades[eps_key][keep]
        sizes = run.trades[n_key][keep]
        x = np.sort(eps)
        mix = np.zeros_like(x)
        for n, c in zip(*np.unique(sizes, return_counts=True)):
            mix += c / sizes.size * max_cdf(x, int(n), cfg.mu, cfg.sigma)
        out[f"eps_max_{name}"] = {
            "mean": float(eps.mean()),
            "quantiles_10_50_90": [float(q) for q in np.quantile(eps, [0.1, 0.5, 0.9])],
            "ks_distance_to_iid_max": _ks_distance(x, mix),
        }

    # replay who is present to find each trading buyer's rank by arrival
    arr = run.arrivals
    joined = {}
    for aid, side, i_a in zip(arr["agent_id"], arr["side"], arr["arrival_index"]):
        joined.setdefault(int(i_a), []).append((int(aid), int(side)))
    buyers = [aid for aid, s in joined.pop(0, []) if s < 0]
    t = run.trades
    by_size: dict[int, np.ndarray] = {}
    for r in range(run.n_trades):
        bid = int(t["buyer_id"][r])
        if keep[r]:
            n = len(buyers)
            counts = by_size.setdefault(n, np.zeros(n, dtype=np.int64))
            counts[buyers.index(bid)] += 1
        buyers.remove(bid)
        buyers += [aid for aid, s in joined.pop(r + 1, []) if s < 0]
    out["buyer_participation_by_arrival_rank"] = [
        {
            "n_buy": n,
            "trades": int(c.sum()),
            "iid_prediction": 1.0 / n,
            "frequency_oldest_first": (c / c.sum()).tolist(),
        }
        for n, c in sorted(by_size.items())
    ]
    return out
