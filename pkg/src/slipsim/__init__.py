"""Seeded unit-agent market simulator with double-entry slippage accounting."""

__version__ = "0.1.0"

from .accounting import (  # noqa: E402
    AgentAccount,
    MarketState,
    Side,
    Trade,
    apply_trade,
    delta_wealth,
    market_delta_wealth_check,
    open_account,
    outstanding_volumes,
    slippage,
    wealth,
)
from .kernel import HAVE_COMPILED  # noqa: E402
from .model import ModelConfig, RunArtifacts, run_simulation  # noqa: E402
from .negotiation import (  # noqa: E402
    QuoteBook,
    max_aggressiveness,
    midpoint_price,
    price_band,
    trade_condition,
)

__all__ = [
    "AgentAccount", "MarketState", "Side", "Trade", "apply_trade", "delta_wealth",
    "market_delta_wealth_check", "open_account", "outstanding_volumes", "slippage", "wealth",
    "HAVE_COMPILED", "ModelConfig", "RunArtifacts", "run_simulation", "QuoteBook",
    "max_aggressiveness", "midpoint_price", "price_band", "trade_condition",
]
