"""Backend selection for the event loop.

The compiled extension ``slipsim._kernel`` is used when it is importable;
otherwise, or when ``SLIPSIM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python twin is used.  Both expose the same ``advance``
function.

``advance`` arguments
---------------------
agent slots (length N, mutated):
    ``side`` (-1 buyer, +1 seller, which is also the unit position),
    ``ids``, ``arrival`` (int64); ``eps``, ``ref``, ``cash`` (float64)
random buffers (read only):
    ``sel`` slot picks, ``z`` standard normals, ``u`` uniforms
``counters`` (int64, mutated):
    trades, next_id, sel_pos, z_pos, u_pos, idle_events, events,
    n_executions, n_arrivals
``price`` (float64[1], mutated): last trade price
outputs, written at the row given by the matching counter:
    ``trade_i`` (T, 4) buyer_id, seller_id, v_buy_before, v_sell_before
    ``trade_f`` (T, 5) price, delta_p, sum_dw_residual, eps_buy, eps_sell
        (the two winning aggressiveness values)
    ``exec_i`` (2T, 4) agent_id, side, arrival_index, liquidation_index
    ``exec_f`` (2T, 2) reference_price, fill_price
    ``arr_i`` (2T, 3) agent_id, side, arrival_index
    ``arr_f`` (2T,) reference_price

The return value is one of the status codes below.  On a ``NEED_*`` status
the caller refills that random buffer and calls again.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

DONE = 0
NEED_SELECTION = 1
NEED_AGGRESSIVENESS = 2
NEED_SIDE = 3
STALLED = 4

C_TRADES, C_NEXT_ID, C_SEL, C_Z, C_U, C_IDLE, C_EVENTS, C_EXECS, C_ARRIVALS = range(9)
N_COUNTERS = 9

BACKENDS = {"python": _kernel_py.advance}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.advance


def _forced_pure() -> bool:
    return os.environ.get("SLIPSIM_PURE_PYTHON", "") not in ("", "0")


def default_backend() -> str:
    if "compiled" in BACKENDS and not _forced_pure():
        return "compiled"
    return "python"


def get_advance(name: str = "auto"):
    if name == "auto":
        name = default_backend()
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} unavailable (have: {', '.join(sorted(BACKENDS))})"
        ) from None


HAVE_COMPILED = "compiled" in BACKENDS
