"""Agent accounts, trade booking and the wealth/slippage identities.

Every agent holds a position ``x`` (negative for a buyer, positive for a
seller) and a cash account opened at ``-x * reference_price`` so that its
mark-to-market wealth starts at exactly zero.  Trades move cash and asset
between exactly two accounts; nothing is created or destroyed.

Prices are plain floats and are allowed to go negative: the price rule used
by the simulator is additive, so a long enough run can wander below zero.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field


class AccountingError(ValueError):
    """Raised when a booking would violate the account rules."""


class InvariantBreach(RuntimeError):
    """Raised when a market-wide invariant does not hold."""


class IncompleteLiquidation(AccountingError):
    """Slippage was requested for a position that is still open."""


class Side(enum.IntEnum):
    # The value is the sign of the position while the agent is active.
    BUYER = -1
    SELLER = 1

    @property
    def label(self) -> str:
        return "buy" if self is Side.BUYER else "sell"

    @classmethod
    def from_label(cls, label: str) -> "Side":
        try:
            return {"buy": cls.BUYER, "sell": cls.SELLER}[label]
        except KeyError:
            raise ValueError(f"unknown side label {label!r}") from None


@dataclass
class AgentAccount:
    id: int
    side: Side
    arrival_index: int
    reference_price: float
    position: int
    cash: float
    liquidation_index: int | None = None
    # (delta_x, price) for every trade the agent took part in
    fills: list[tuple[int, float]] = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.position != 0

    def wealth(self, price: float) -> float:
        return wealth(self, price)


@dataclass(frozen=True)
class Trade:
    index: int
    price: float
    quantity: int
    buyer_id: int
    seller_id: int

    def __post_init__(self):
        if self.quantity <= 0:
            raise AccountingError(f"trade quantity must be positive, got {self.quantity}")
        if self.buyer_id == self.seller_id:
            raise AccountingError("an agent cannot trade with itself")


@dataclass
class MarketState:
    last_price: float = 0.0
    trade_count: int = 0
    accounts: dict[int, AgentAccount] = field(default_factory=dict)
    next_agent_id: int = 0

    def add(self, account: AgentAccount) -> None:
        if account.id in self.accounts:
            raise AccountingError(f"duplicate agent id {account.id}")
        self.accounts[account.id] = account

    def active_accounts(self) -> list[AgentAccount]:
        return [a for a in self.accounts.values() if a.active]


def open_account(
    side: Side,
    quantity_magnitude: int,
    last_price: float,
    arrival_index: int,
    agent_id: int = 0,
) -> AgentAccount:
    """Open an account for an agent that has to liquidate ``quantity_magnitude`` units.

    The cash account is set to ``-position * last_price`` so that the
    agent's wealth at the arrival price is exactly zero.
    """
    if quantity_magnitude < 1:
        raise AccountingError(f"quantity_magnitude must be >= 1, got {quantity_magnitude}")
    if not math.isfinite(last_price):
        raise AccountingError(f"reference price must be finite, got {last_price}")
    side = Side(side)
    position = int(side) * quantity_magnitude
    return AgentAccount(
        id=agent_id,
        side=side,
        arrival_index=arrival_index,
        reference_price=last_price,
        position=position,
        cash=-position * last_price,
    )


def apply_trade(
    state: MarketState,
    buyer: AgentAccount,
    seller: AgentAccount,
    quantity: int,
    price: float,
) -> Trade:
    """Book a trade of ``quantity`` units at ``price`` from ``seller`` to ``buyer``.

    Both accounts are updated in place, ``state`` advances by one trade and
    an account whose position reaches zero gets its liquidation index.
    """
    if quantity <= 0:
        raise AccountingError(f"trade quantity must be positive, got {quantity}")
    if not math.isfinite(price):
        raise AccountingError(f"trade price must be finite, got {price}")
    if buyer.position >= 0:
        raise AccountingError(f"agent {buyer.id} is not an active buyer (x={buyer.position})")
    if seller.position <= 0:
        raise AccountingError(f"agent {seller.id} is not an active seller (x={seller.position})")
    if quantity > -buyer.position or quantity > seller.position:
        raise AccountingError(
            f"quantity {quantity} overshoots positions "
            f"(buyer x={buyer.position}, seller x={seller.position})"
        )

    flow = quantity * price
    buyer.cash -= flow
    buyer.position += quantity
    seller.cash += flow
    seller.position -= quantity
    buyer.fills.append((quantity, price))
    seller.fills.append((-quantity, price))

    state.trade_count += 1
    state.last_price = price
    for account in (buyer, seller):
        if account.position == 0:
            account.liquidation_index = state.trade_count
    return Trade(state.trade_count, price, quantity, buyer.id, seller.id)


def wealth(account: AgentAccount, price: float) -> float:
    return account.position * price + account.cash


def delta_wealth(position_before: int, price_prev: float, price_new: float) -> float:
    """Wealth change of a position held across one price move (position times return)."""
    return position_before * (price_new - price_prev)


def delta_wealth_two_term(
    position_before: int, position_after: int, price_prev: float, price_new: float
) -> float:
    """Holding term minus the cash spent, the long form of :func:`delta_wealth`."""
    holding = position_after * price_new - position_before * price_prev
    cash_change = (position_after - position_before) * price_new
    return holding - cash_change


def slippage(
    fills: Iterable[tuple[int, float]],
    reference_price: float,
    initial_position: int | None = None,
) -> float:
    """Transaction cost ``sum(dx * (P - P_ref))`` of a completed parent order.

    ``fills`` holds ``(delta_x, price)`` pairs; buys have ``delta_x > 0``.
    Positive values are a loss.  When ``initial_position`` is given the
    fills must close it exactly, otherwise :class:`IncompleteLiquidation`
    is raised (see :func:`provisional_slippage` for open positions).
    """
    total = 0.0
    net = 0
    for dx, price in fills:
        total += dx * (price - reference_price)
        net += dx
    if initial_position is not None and net != -initial_position:
        raise IncompleteLiquidation(
            f"fills net to {net} but the position to close is {initial_position}"
        )
    return total


def account_slippage(account: AgentAccount) -> float:
    if account.position != 0:
        raise IncompleteLiquidation(
            f"agent {account.id} still holds x={account.position}; "
            "use provisional_slippage for open positions"
        )
    return slippage(account.fills, account.reference_price)


def provisional_slippage(account: AgentAccount, price: float) -> float:
    """Mark-to-market slippage of a position that is not liquidated yet."""
    return -wealth(account, price)


def outstanding_volumes(accounts: Iterable[AgentAccount]) -> tuple[int, int]:
    """Return ``(V_buy, V_sell)``, the unexecuted buy and sell quantities."""
    v_buy = 0
    v_sell = 0
    for a in accounts:
        if a.position > 0:
            v_sell += a.position
        elif a.position < 0:
            v_buy -= a.position
    if v_buy == 0 or v_sell == 0:
        raise InvariantBreach(f"empty market side (V_buy={v_buy}, V_sell={v_sell})")
    return v_buy, v_sell


@dataclass(frozen=True)
class AccountSnapshot:
    id: int
    position: int
    cash: float


def snapshot(accounts: Iterable[AgentAccount]) -> list[AccountSnapshot]:
    return [AccountSnapshot(a.id, a.position, a.cash) for a in accounts]


def market_delta_wealth_check(
    before: Sequence[AccountSnapshot],
    accounts: dict[int, AgentAccount],
    price_prev: float,
    price_new: float,
) -> float:
    """Residual of the market-average wealth identity over one trade.

    ``before`` lists the accounts present before the trade, in the order
    the sum is taken; ``accounts`` gives their state afterwards.  Returns
    ``sum(dW) + (V_buy - V_sell) * dP``, which is zero in exact arithmetic.
    """
    total = 0.0
    v_buy = 0
    v_sell = 0
    for snap in before:
        after = accounts[snap.id]
        w_before = snap.position * price_prev + snap.cash
        w_after = after.position * price_new + after.cash
        total += w_after - w_before
        if snap.position > 0:
            v_sell += snap.position
        elif snap.position < 0:
            v_buy -= snap.position
    return total + (v_buy - v_sell) * (price_new - price_prev)
