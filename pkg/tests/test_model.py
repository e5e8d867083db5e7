import numpy as np
import pytest
from scipy import stats as sps

from slipsim import kernel, rng as rng_mod
from slipsim.accounting import MarketState, Side, open_account, wealth
from slipsim.model import (
    ConfigError,
    ExecutionRecord,
    ModelConfig,
    SimulationStalled,
    dynamic_diagnostics,
    frozen_participation,
    init_population,
    replenish,
    resample_step,
    run_simulation,
    try_trade,
)
from slipsim.negotiation import Quote, QuoteBook
from slipsim.rng import RngStreams

BACKENDS = ["reference", "python"] + (["compiled"] if kernel.HAVE_COMPILED else [])
FAST = dict(n_agents=10, mu=-0.2, sigma=0.2, n_trades=250, warmup_trades=25)


class ScriptedRng:
    """Stands in for RngStreams with fixed side uniforms."""

    def __init__(self, uniforms, eps=0.0):
        self._u = list(uniforms)
        self._eps = eps

    def uniform(self):
        return self._u.pop(0)

    def normal(self, mu, sigma):
        return self._eps


def _arrays_equal(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


# -- config -----------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs, field",
    [({"n_agents": 1}, "n_agents"), ({"sigma": 0.0}, "sigma"), ({"n_trades": 0}, "n_trades"),
     ({"warmup_trades": -1}, "warmup_trades"), ({"sigma": float("nan")}, "sigma")],
)
def test_config_validation_names_the_field(kwargs, field):
    with pytest.raises(ConfigError) as info:
        ModelConfig(**kwargs)
    assert info.value.field == field


def test_config_defaults():
    c = ModelConfig()
    assert (c.n_agents, c.mu, c.sigma, c.initial_price) == (10, -0.5, 0.2, 0.0)
    assert ModelConfig(n_trades=1000).warmup == 100
    assert ModelConfig(n_trades=1000, warmup_trades=0).total_trades == 1000


def test_config_from_mapping():
    c = ModelConfig.from_mapping({"n_agents": "12", "mu": "-0.4", "seed": 3})
    assert (c.n_agents, c.mu, c.seed) == (12, -0.4, 3)
    with pytest.raises(ConfigError):
        ModelConfig.from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        ModelConfig.from_mapping({"n_agents": 2.5})


# -- init_population --------------------------------------------------------

@pytest.mark.parametrize("n, n_buy, n_sell", [(10, 5, 5), (3, 1, 2), (2, 1, 1)])
def test_init_population_split(n, n_buy, n_sell):
    cfg = ModelConfig(n_agents=n)
    state, book = init_population(cfg, RngStreams(0, n))
    assert book.count(Side.BUYER) == n_buy
    assert book.count(Side.SELLER) == n_sell
    assert all(abs(a.position) == 1 and wealth(a, 0.0) == 0.0 for a in state.accounts.values())


def test_init_population_is_seeded():
    cfg = ModelConfig()
    _, b1 = init_population(cfg, RngStreams(5, 10))
    _, b2 = init_population(cfg, RngStreams(5, 10))
    _, b3 = init_population(cfg, RngStreams(6, 10))
    e1 = [q.epsilon for q in b1]
    assert e1 == [q.epsilon for q in b2]
    assert e1 != [q.epsilon for q in b3]


# -- resample_step ----------------------------------------------------------

def test_resample_picks_agents_uniformly_and_draws_normal():
    cfg = ModelConfig()
    rng = RngStreams(1, cfg.n_agents)
    _, book = init_population(cfg, rng)
    steps = 100_000
    hits = np.zeros(cfg.n_agents, dtype=np.int64)
    drawn = np.empty(steps)
    for k in range(steps):
        aid = resample_step(book, rng, cfg.mu, cfg.sigma)
        hits[aid] += 1
        drawn[k] = book.slots[aid].epsilon
        assert len(book) == cfg.n_agents
    _, p = sps.chisquare(hits)
    assert p > 0.001
    assert abs(drawn.mean() - cfg.mu) < 3 * cfg.sigma / np.sqrt(steps)


def test_resample_changes_exactly_one_entry():
    cfg = ModelConfig()
    rng = RngStreams(2, cfg.n_agents)
    _, book = init_population(cfg, rng)
    before = [q.epsilon for q in book]
    aid = resample_step(book, rng, cfg.mu, cfg.sigma)
    after = [q.epsilon for q in book]
    changed = [i for i, (x, y) in enumerate(zip(before, after)) if x != y]
    assert changed == [book.slot_of(aid)]


# -- try_trade --------------------------------------------------------------

def _manual_market(price, buyers, sellers):
    state = MarketState(last_price=price)
    book = QuoteBook(last_price=price)
    for e in buyers:
        a = open_account(Side.BUYER, 1, price, 0, agent_id=len(book.slots))
        state.add(a)
        book.slots.append(Quote(a.id, Side.BUYER, e, 0))
    for e in sellers:
        a = open_account(Side.SELLER, 1, price, 0, agent_id=len(book.slots))
        state.add(a)
        book.slots.append(Quote(a.id, Side.SELLER, e, 0))
    state.next_agent_id = len(book.slots)
    return state, book


def test_try_trade_executes_at_midpoint():
    state, book = _manual_market(100.0, buyers=[0.2, -0.6], sellers=[-0.9, -0.1])
    out = try_trade(state, book)
    # (0.2 - (-0.1)) / 2 = 0.15
    assert out.trade.price == pytest.approx(100.15, abs=1e-12)
    assert (out.trade.buyer_id, out.trade.seller_id) == (0, 3)
    assert (out.v_buy_before, out.v_sell_before) == (2, 2)
    assert abs(out.residual) < 1e-12
    assert state.last_price == out.trade.price
    assert book.free_slots() == [0, 3]
    for acc in out.departed:
        assert acc.position == 0 and acc.liquidation_index == 1
    assert set(state.accounts) == {1, 2}


def test_try_trade_no_cross_leaves_state_alone():
    state, book = _manual_market(100.0, buyers=[-0.3], sellers=[-0.2])
    assert try_trade(state, book) is None
    assert state.trade_count == 0 and len(book) == 2


def test_arrivals_take_last_trade_price_as_reference():
    state, book = _manual_market(100.0, buyers=[0.2, -0.6], sellers=[-0.9, -0.1])
    out = try_trade(state, book)
    new = replenish(state, book, ScriptedRng([0.1, 0.9]), -0.5, 0.2)
    assert [a.reference_price for a in new] == [out.trade.price] * 2
    assert [a.arrival_index for a in new] == [1, 1]


# -- replenish --------------------------------------------------------------

def test_replenish_buyer_probability_uses_current_counts():
    # 4 buyers + 4 sellers remain: first arrival is a buyer iff u < 0.5
    state, book = _manual_market(0.0, buyers=[0.0] * 5, sellers=[0.0] * 5)
    state.accounts.pop(0), state.accounts.pop(9)
    book.slots[0] = book.slots[9] = None
    new = replenish(state, book, ScriptedRng([0.49, 0.0]), -0.5, 0.2)
    assert new[0].side == Side.BUYER
    # counts now 5 buyers / 4 sellers: p_buy = 4/9 for the second arrival
    assert new[1].side == Side.BUYER

    state, book = _manual_market(0.0, buyers=[0.0] * 5, sellers=[0.0] * 5)
    state.accounts.pop(0), state.accounts.pop(9)
    book.slots[0] = book.slots[9] = None
    # a seller arrives first, leaving 4 buyers / 5 sellers: p_buy = 5/9
    new = replenish(state, book, ScriptedRng([0.5, 5 / 9]), -0.5, 0.2)
    assert [a.side for a in new] == [Side.SELLER, Side.SELLER]


def test_replenish_refills_an_empty_side():
    # 8 sellers, no buyers left: p_buy = 1, whatever the uniform
    state, book = _manual_market(0.0, buyers=[0.0, 0.0], sellers=[0.0] * 8)
    for aid in (0, 1):
        state.accounts.pop(aid)
        book.slots[aid] = None
    new = replenish(state, book, ScriptedRng([0.999999, 0.0]), -0.5, 0.2)
    assert new[0].side == Side.BUYER
    assert len(book) == 10
    assert book.count(Side.BUYER) >= 1 and book.count(Side.SELLER) >= 1


def test_replenish_two_agent_market():
    state, book = _manual_market(0.0, buyers=[0.0], sellers=[0.0])
    for aid in (0, 1):
        state.accounts.pop(aid)
        book.slots[aid] = None
    new = replenish(state, book, ScriptedRng([0.3, 0.3]), -0.5, 0.2)
    assert sorted(a.side for a in new) == [Side.BUYER, Side.SELLER]


# -- whole runs -------------------------------------------------------------

def test_backends_agree_bit_for_bit():
    cfg = ModelConfig(seed=17, **FAST)
    runs = [run_simulation(cfg, backend=b) for b in BACKENDS]
    for other in runs[1:]:
        assert _arrays_equal(runs[0].trades, other.trades)
        assert _arrays_equal(runs[0].executions, other.executions)
        assert _arrays_equal(runs[0].arrivals, other.arrivals)
        assert runs[0].events == other.events
        assert runs[0].final_price == other.final_price


def test_backends_agree_across_buffer_refills(monkeypatch):
    # tiny chunks force the kernels to hand back control constantly
    monkeypatch.setattr(rng_mod, "CHUNK", 5)
    cfg = ModelConfig(seed=3, n_agents=4, mu=-0.1, sigma=0.3, n_trades=200, warmup_trades=0)
    runs = [run_simulation(cfg, backend=b) for b in BACKENDS]
    for other in runs[1:]:
        assert _arrays_equal(runs[0].trades, other.trades)
        assert _arrays_equal(runs[0].executions, other.executions)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_small_populations_run(n):
    cfg = ModelConfig(seed=1, n_agents=n, mu=-0.2, sigma=0.2, n_trades=100)
    run = run_simulation(cfg)
    vb, vs = run.trades["v_buy_before"], run.trades["v_sell_before"]
    assert np.all(vb >= 1) and np.all(vs >= 1) and np.all(vb + vs == n)


def test_run_invariants():
    cfg = ModelConfig(seed=4, **FAST)
    run = run_simulation(cfg)
    assert run.n_trades == cfg.total_trades
    vb, vs = run.trades["v_buy_before"], run.trades["v_sell_before"]
    assert np.all(vb >= 1) and np.all(vs >= 1) and np.all(vb + vs == cfg.n_agents)
    assert np.max(np.abs(run.trades["sum_dw_residual"])) < 1e-9
    e = run.execution_table(completed_only=False)
    assert len(e["agent_id"]) == 2 * cfg.total_trades
    assert np.all(e["tau"] >= 1)
    # each trade liquidates exactly one buyer and one seller
    assert np.array_equal(e["side"].reshape(-1, 2), np.tile([-1, 1], (cfg.total_trades, 1)))
    assert len(run.final_slots["agent_id"]) == cfg.n_agents
    assert len(run.arrivals["agent_id"]) == cfg.n_agents + 2 * cfg.total_trades


def test_completed_records_drop_warmup_and_match_eq1():
    cfg = ModelConfig(seed=4, **FAST)
    run = run_simulation(cfg)
    recs = run.completed
    assert len(recs) == 2 * cfg.n_trades
    assert min(r.liquidation_index for r in recs) == cfg.warmup + 1
    for r in recs[:50]:
        dx = 1 if r.side == Side.BUYER else -1
        assert r.slippage == dx * (r.fill_price - r.reference_price)
        assert r.tau >= 1


def test_execution_record_sign_convention():
    buy = ExecutionRecord(1, Side.BUYER, 0, 3, 100.0, 101.0)
    sell = ExecutionRecord(2, Side.SELLER, 0, 3, 100.0, 101.0)
    assert (buy.slippage, sell.slippage, buy.tau) == (1.0, -1.0, 3)


def test_determinism_and_seed_sensitivity():
    a = run_simulation(ModelConfig(seed=9, **FAST))
    b = run_simulation(ModelConfig(seed=9, **FAST))
    c = run_simulation(ModelConfig(seed=10, **FAST))
    assert _arrays_equal(a.trades, b.trades)
    assert not np.array_equal(a.trades["price"], c.trades["price"])
    r1 = run_simulation(ModelConfig(seed=9, **FAST), replicate=1)
    assert not np.array_equal(a.trades["price"], r1.trades["price"])


@pytest.mark.parametrize("backend", BACKENDS)
def test_stall_cap_aborts_with_diagnostic(backend):
    cfg = ModelConfig(mu=-50.0, sigma=0.1, n_trades=1)
    with pytest.raises(SimulationStalled, match="no trade in 500"):
        run_simulation(cfg, backend=backend, idle_cap=500)


def test_frozen_participation_counts():
    counts = frozen_participation(3, 4, -0.5, 0.2, trades=3000, seed=1)
    assert counts.sum() == 3000
    assert np.all(np.abs(counts / 3000 - 1 / 3) < 0.05)


def test_dynamic_diagnostics_shape_and_sanity():
    run = run_simulation(ModelConfig(seed=5, **FAST))
    d = dynamic_diagnostics(run)
    assert d["trades"] == 250
    rows = d["buyer_participation_by_arrival_rank"]
    assert sum(r["trades"] for r in rows) == 250
    for r in rows:
        assert len(r["frequency_oldest_first"]) == r["n_buy"]
        assert sum(r["frequency_oldest_first"]) == pytest.approx(1.0)
    for side in ("buy", "sell"):
        e = d[f"eps_max_{side}"]
        assert 0.0 <= e["ks_distance_to_iid_max"] <= 1.0
    # the logged winners reproduce the logged prices
    t = run.trades
    prev = np.concatenate([[run.config.initial_price], t["price"][:-1]])
    assert np.array_equal(t["price"], prev + (t["eps_buy"] - t["eps_sell"]) / 2.0)
    assert np.all(t["eps_buy"] + t["eps_sell"] >= 0)
