"""Re-book a finished run through the accounting engine and check its identities.

The event loop keeps its own compact books.  The audit rebuilds every agent
account from the arrival and trade records, books each trade with
:func:`slipsim.accounting.apply_trade`, and compares the result with what
the run reported.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .accounting import (
    AgentAccount,
    MarketState,
    Side,
    account_slippage,
    apply_trade,
    delta_wealth,
    delta_wealth_two_term,
    market_delta_wealth_check,
    open_account,
    outstanding_volumes,
    snapshot,
    slippage,
    wealth,
)
from .model import RunArtifacts

DW_REL_TOL = 1e-12
MARKET_ABS_TOL = 1e-9
TR_ABS_TOL = 1e-9


@dataclass
class Violation:
    trade_index: int
    identity: str
    detail: str

    def __str__(self):
        return f"trade {self.trade_index}: {self.identity}: {self.detail}"


@dataclass
class AuditReport:
    trades_checked: int = 0
    executions_checked: int = 0
    max_market_residual: float = 0.0
    max_logged_residual: float = 0.0
    max_dw_form_gap: float = 0.0
    max_tr_gap: float = 0.0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "trades_checked": self.trades_checked,
            "executions_checked": self.executions_checked,
            "max_market_residual": self.max_market_residual,
            "max_logged_residual": self.max_logged_residual,
            "max_dw_form_gap": self.max_dw_form_gap,
            "max_tr_gap": self.max_tr_gap,
            "violations": [str(v) for v in self.violations[:50]],
            "n_violations": len(self.violations),
        }


def _fail(report, i, identity, detail, limit=1000):
    if len(report.violations) < limit:
        report.violations.append(Violation(i, identity, detail))


def audit_run(run: RunArtifacts, fault_trade: int | None = None, fault_size: float = 1e-3) -> AuditReport:
    """Replay ``run`` trade by trade and check every accounting identity.

    ``fault_trade`` is a test hook: the logged price of that trade (1-based)
    is shifted by ``fault_size`` before the replay, the way a bookkeeping bug
    would leave the trade log disagreeing with the agents' fills.
    """
    report = AuditReport()
    cfg = run.config
    arr = run.arrivals
    by_arrival: dict[int, list[AgentAccount]] = defaultdict(list)
    for aid, side, i_a, ref in zip(arr["agent_id"], arr["side"], arr["arrival_index"], arr["reference_price"]):
        by_arrival[int(i_a)].append(open_account(Side(int(side)), 1, float(ref), int(i_a), agent_id=int(aid)))

    recorded_fill = {}
    ex = run.executions
    for aid, k, fill in zip(ex["agent_id"], ex["liquidation_index"], ex["fill_price"]):
        recorded_fill[int(aid)] = (int(k), float(fill))

    t = run.trades
    prices = t["price"].astype(float).copy()
    if fault_trade is not None:
        prices[fault_trade - 1] += fault_size

    state = MarketState(last_price=cfg.initial_price)
    order: list[int] = []  # ids present, in arrival order
    for acc in by_arrival.pop(0, []):
        state.add(acc)
        order.append(acc.id)

    for r in range(run.n_trades):
        i = r + 1
        present = [state.accounts[a] for a in order]
        before = snapshot(present)
        price_prev = state.last_price
        price = float(prices[r])
        v_buy, v_sell = outstanding_volumes(present)
        if (v_buy, v_sell) != (int(t["v_buy_before"][r]), int(t["v_sell_before"][r])):
            _fail(report, i, "outstanding volumes", f"replay ({v_buy}, {v_sell}) vs logged "
                  f"({t['v_buy_before'][r]}, {t['v_sell_before'][r]})")

        buyer = state.accounts[int(t["buyer_id"][r])]
        seller = state.accounts[int(t["seller_id"][r])]
        cash_b, cash_s = buyer.cash, seller.cash
        pos_b, pos_s = buyer.position, seller.position
        apply_trade(state, buyer, seller, 1, price)

        # conservation: the two cash flows and the two position changes cancel
        flow_b = -(1 * price)
        flow_s = 1 * price
        if flow_b + flow_s != 0.0 or (buyer.position - pos_b) + (seller.position - pos_s) != 0:
            _fail(report, i, "conservation", "cash or asset created by the trade")
        if buyer.cash != cash_b + flow_b or seller.cash != cash_s + flow_s:
            _fail(report, i, "conservation", "booked cash differs from the trade flow")

        for snap in before:
            acc = state.accounts[snap.id]
            long_form = delta_wealth_two_term(snap.position, acc.position, price_prev, price)
            short_form = delta_wealth(snap.position, price_prev, price)
            scale = max(abs(snap.position * price_prev), abs(acc.position * price),
                        abs((acc.position - snap.position) * price), abs(short_form))
            gap = abs(long_form - short_form)
            report.max_dw_form_gap = max(report.max_dw_form_gap, gap / scale if scale else gap)
            if gap > DW_REL_TOL * scale:
                _fail(report, i, "dW two-term form", f"agent {snap.id}: {long_form!r} vs {short_form!r}")
            booked = wealth(acc, price) - (snap.position * price_prev + snap.cash)
            if not math.isclose(booked, short_form, rel_tol=DW_REL_TOL, abs_tol=DW_REL_TOL * scale):
                _fail(report, i, "dW booked", f"agent {snap.id}: {booked!r} vs {short_form!r}")

        residual = market_delta_wealth_check(before, state.accounts, price_prev, price)
        report.max_market_residual = max(report.max_market_residual, abs(residual))
        if abs(residual) > MARKET_ABS_TOL:
            _fail(report, i, "market wealth identity", f"residual {residual!r}")
        logged = float(t["sum_dw_residual"][r])
        report.max_logged_residual = max(report.max_logged_residual, abs(logged))
        if abs(logged) > MARKET_ABS_TOL:
            _fail(report, i, "market wealth identity (logged)", f"residual {logged!r}")
        logged_dp = float(t["delta_p"][r])
        if logged_dp != price - price_prev:
            _fail(report, i, "price change", f"logged {logged_dp!r} vs replay {price - price_prev!r}")

        for acc in (buyer, seller):
            if acc.position != 0:
                continue
            report.executions_checked += 1
            tr = account_slippage(acc)
            tr_eq1 = slippage(acc.fills, acc.reference_price, int(acc.side))
            for p_any in (price, price + 1.0, -7.25):
                gap = abs(tr + wealth(acc, p_any))
                report.max_tr_gap = max(report.max_tr_gap, gap)
                if gap > TR_ABS_TOL:
                    _fail(report, i, "TR = -W", f"agent {acc.id}: TR {tr!r}, W {wealth(acc, p_any)!r}")
            if tr != tr_eq1:
                _fail(report, i, "TR", f"agent {acc.id}: fill sum differs")
            k, fill = recorded_fill.get(acc.id, (None, None))
            if k != acc.liquidation_index or fill != price:
                _fail(report, i, "execution record", f"agent {acc.id}: recorded (k={k}, fill={fill!r}) "
                      f"vs booked (k={acc.liquidation_index}, fill={price!r})")
            order.remove(acc.id)
            del state.accounts[acc.id]

        for acc in by_arrival.pop(i, []):
            if acc.reference_price != price:
                _fail(report, i, "reference price", f"agent {acc.id} arrived at {acc.reference_price!r}")
            state.add(acc)
            order.append(acc.id)
        report.trades_checked += 1

    if len(state.accounts) != cfg.n_agents:
        _fail(report, run.n_trades, "population", f"{len(state.accounts)} agents at the end, expected {cfg.n_agents}")
    return report


def pairwise_scenario(reference_price: float = 100.0, fills=((1, 101.0), (1, 99.5), (1, 100.25))):
    """Two agents opened at one price trade only with each other until both are flat.

    Returns ``(TR_buyer, TR_seller)``; their sum is exactly zero.
    """
    qty = sum(q for q, _ in fills)
    state = MarketState(last_price=reference_price)
    buyer = open_account(Side.BUYER, qty, reference_price, 0, agent_id=0)
    seller = open_account(Side.SELLER, qty, reference_price, 0, agent_id=1)
    state.add(buyer)
    state.add(seller)
    for q, p in fills:
        apply_trade(state, buyer, seller, q, p)
    return account_slippage(buyer), account_slippage(seller)
