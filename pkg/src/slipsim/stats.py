"""Streaming accumulators behind the slippage/imbalance/execution-time tables.

All accumulators support ``merge`` so replicate runs can be reduced in any
order.  Moments use the pairwise update of Chan et al. extended to the third
central moment (Pebay 2008), so adding a whole array is one merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InsufficientData(ValueError):
    pass


@dataclass
class Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0

    @classmethod
    def of(cls, values) -> "Moments":
        x = np.asarray(values, dtype=np.float64)
        n = x.size
        if n == 0:
            return cls()
        mean = float(x.mean())
        d = x - mean
        return cls(n, mean, float(np.dot(d, d)), float(np.sum(d * d * d)))

    def add(self, value: float) -> None:
        self.merge_in(Moments(1, float(value), 0.0, 0.0))

    def add_array(self, values) -> None:
        self.merge_in(Moments.of(values))

    def merge_in(self, other: "Moments") -> None:
        merged = self.merge(other)
        self.count, self.mean, self.m2, self.m3 = merged.count, merged.mean, merged.m2, merged.m3

    def merge(self, other: "Moments") -> "Moments":
        na, nb = self.count, other.count
        if nb == 0:
            return Moments(na, self.mean, self.m2, self.m3)
        if na == 0:
            return Moments(nb, other.mean, other.m2, other.m3)
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + delta * delta * na * nb / n
        m3 = (
            self.m3
            + other.m3
            + delta**3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n
        )
        return Moments(n, mean, m2, m3)

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            return math.nan
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def sem(self) -> float:
        if self.count < 2:
            return math.nan
        return math.sqrt(self.variance / self.count)

    @property
    def skewness(self) -> float:
        """Adjusted Fisher-Pearson sample skewness; NaN below three values."""
        n = self.count
        if n < 3 or self.m2 == 0:
            return math.nan
        g1 = (self.m3 / n) / (self.m2 / n) ** 1.5
        return g1 * math.sqrt(n * (n - 1)) / (n - 2)


def sample_skewness(values) -> float:
    return Moments.of(values).skewness


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray = None
    underflow: int = 0
    overflow: int = 0
    moments: Moments = field(default_factory=Moments)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        if self.edges.ndim != 1 or self.edges.size < 2 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing with at least 2 entries")
        if self.counts is None:
            self.counts = np.zeros(self.edges.size - 1, dtype=np.int64)

    @classmethod
    def uniform(cls, lo: float, hi: float, bins: int) -> "Histogram":
        return cls(np.linspace(lo, hi, bins + 1))

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def add_array(self, values) -> None:
        x = np.asarray(values, dtype=np.float64)
        self.moments.add_array(x)
        # right edge is inclusive for the last bin
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx[x == self.edges[-1]] = self.edges.size - 2
        under = idx < 0
        over = idx >= self.edges.size - 1
        self.underflow += int(under.sum())
        self.overflow += int(over.sum())
        inside = idx[~(under | over)]
        self.counts += np.bincount(inside, minlength=self.counts.size)

    def add(self, value: float) -> None:
        self.add_array([value])

    def merge(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge histograms with different edges")
        return Histogram(
            self.edges.copy(),
            self.counts + other.counts,
            self.underflow + other.underflow,
            self.overflow + other.overflow,
            self.moments.merge(other.moments),
        )


@dataclass
class BinnedMean:
    """Mean of ``y`` conditioned on which bin ``x`` falls into."""

    edges: np.ndarray
    count: np.ndarray = None
    total: np.ndarray = None
    total_sq: np.ndarray = None
    outside: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        k = self.edges.size - 1
        if self.count is None:
            self.count = np.zeros(k, dtype=np.int64)
            self.total = np.zeros(k)
            self.total_sq = np.zeros(k)

    def bin_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx[x == self.edges[-1]] = self.edges.size - 2
        return idx

    def add_array(self, x, y) -> None:
        y = np.asarray(y, dtype=np.float64)
        idx = self.bin_index(x)
        ok = (idx >= 0) & (idx < self.count.size)
        self.outside += int((~ok).sum())
        idx, y = idx[ok], y[ok]
        k = self.count.size
        self.count += np.bincount(idx, minlength=k)
        self.total += np.bincount(idx, weights=y, minlength=k)
        self.total_sq += np.bincount(idx, weights=y * y, minlength=k)

    def add(self, x: float, y: float) -> None:
        self.add_array([x], [y])

    def merge(self, other: "BinnedMean") -> "BinnedMean":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge binned means with different edges")
        return BinnedMean(
            self.edges.copy(),
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
            self.outside + other.outside,
        )

    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.total / self.count, np.nan)

    def sems(self) -> np.ndarray:
        n = self.count.astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = self.total / n
            var = (self.total_sq - n * mean * mean) / (n - 1)
            return np.where(self.count > 1, np.sqrt(np.maximum(var, 0.0) / n), np.nan)

    def table(self, min_count: int = 1) -> list[dict]:
        means, sems = self.means(), self.sems()
        rows = []
        for i in np.flatnonzero(self.count >= max(min_count, 1)):
            rows.append(
                {
                    "lo": float(self.edges[i]),
                    "hi": float(self.edges[i + 1]),
                    "count": int(self.count[i]),
                    "mean": float(means[i]),
                    "sem": float(sems[i]),
                }
            )
        return rows


@dataclass
class CoMoment:
    count: int = 0
    mean_x: float = 0.0
    mean_y: float = 0.0
    cxy: float = 0.0
    m2x: float = 0.0
    m2y: float = 0.0

    @classmethod
    def of(cls, x, y) -> "CoMoment":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.size == 0:
            return cls()
        mx, my = float(x.mean()), float(y.mean())
        dx, dy = x - mx, y - my
        return cls(x.size, mx, my, float(np.dot(dx, dy)), float(np.dot(dx, dx)), float(np.dot(dy, dy)))

    def add_array(self, x, y) -> None:
        m = self.merge(CoMoment.of(x, y))
        self.__dict__.update(m.__dict__)

    def add(self, x: float, y: float) -> None:
        self.add_array([x], [y])

    def merge(self, other: "CoMoment") -> "CoMoment":
        na, nb = self.count, other.count
        if nb == 0:
            return CoMoment(**self.__dict__)
        if na == 0:
            return CoMoment(**other.__dict__)
        n = na + nb
        dx = other.mean_x - self.mean_x
        dy = other.mean_y - self.mean_y
        f = na * nb / n
        return CoMoment(
            n,
            self.mean_x + dx * nb / n,
            self.mean_y + dy * nb / n,
            self.cxy + other.cxy + dx * dy * f,
            self.m2x + other.m2x + dx * dx * f,
            self.m2y + other.m2y + dy * dy * f,
        )

    @property
    def covariance(self) -> float:
        if self.count < 2:
            return math.nan
        return self.cxy / (self.count - 1)

    @property
    def correlation(self) -> float:
        if self.count < 2 or self.m2x == 0 or self.m2y == 0:
            return math.nan
        return self.cxy / math.sqrt(self.m2x * self.m2y)

    @property
    def correlation_se(self) -> float:
        """Large-sample standard error ``sqrt((1 - r^2) / (n - 2))``."""
        if self.count < 3:
            return math.nan
        r = self.correlation
        return math.sqrt(max(1.0 - r * r, 0.0) / (self.count - 2))


@dataclass
class WealthLedger:
    """Market-wide sums of the per-trade wealth identity."""

    n_trades: int = 0
    sum_dw: float = 0.0
    # sum over trades of (V_buy - V_sell) * dP
    sum_gap_dp: float = 0.0
    max_abs_residual: float = 0.0

    def add_array(self, sum_dw, gap_dp, residual) -> None:
        self.n_trades += int(np.size(sum_dw))
        self.sum_dw += float(np.sum(sum_dw))
        self.sum_gap_dp += float(np.sum(gap_dp))
        if np.size(residual):
            self.max_abs_residual = max(self.max_abs_residual, float(np.max(np.abs(residual))))

    def merge(self, other: "WealthLedger") -> "WealthLedger":
        return WealthLedger(
            self.n_trades + other.n_trades,
            self.sum_dw + other.sum_dw,
            self.sum_gap_dp + other.sum_gap_dp,
            max(self.max_abs_residual, other.max_abs_residual),
        )


# ---------------------------------------------------------------------------


def imbalance(v_buy, v_sell):
    """Outstanding-volume imbalance ``(V_buy - V_sell) / (V_buy + V_sell)`` in [-1, 1]."""
    vb = np.asarray(v_buy, dtype=np.float64)
    vs = np.asarray(v_sell, dtype=np.float64)
    if np.any(vb < 0) or np.any(vs < 0):
        raise ValueError("volumes must be non-negative")
    if np.any(vb + vs == 0):
        raise ValueError("imbalance undefined when both volumes are zero")
    lam = (vb - vs) / (vb + vs)
    return float(lam) if lam.ndim == 0 else lam


def tau_edges(unit_max: int = 50, factor: float = 1.25, top: float = 1e7) -> np.ndarray:
    """Unit-width bins ``[k, k+1)`` for ``k = 1..unit_max``, then geometric growth."""
    edges = list(range(1, unit_max + 2))
    e = float(edges[-1])
    while e < top:
        e = math.ceil(e * factor)
        edges.append(e)
    return np.asarray(edges, dtype=np.float64)


@dataclass(frozen=True)
class Binning:
    lambda_bins: int = 21
    tau_unit_max: int = 50
    tau_factor: float = 1.25
    slippage_bins: int = 80
    # None means symmetric around zero, reaching the largest |slippage|
    slippage_range: tuple[float, float] | None = None

    def lambda_edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.lambda_bins + 1)

    def tau_edges(self) -> np.ndarray:
        return tau_edges(self.tau_unit_max, self.tau_factor)

    def slippage_edges(self, values=None) -> np.ndarray:
        if self.slippage_range is not None:
            lo, hi = self.slippage_range
        else:
            top = float(np.max(np.abs(values))) if values is not None and np.size(values) else 1.0
            top = top if top > 0 else 1.0
            lo, hi = -top, top
        return np.linspace(lo, hi, self.slippage_bins + 1)


@dataclass
class RunStats:
    slippage: Histogram
    tau_slippage: BinnedMean
    exec_time: Moments
    lambda_dp: BinnedMean
    lambda_dp_cov: CoMoment
    ledger: WealthLedger

    @classmethod
    def empty(cls, binning: Binning = Binning(), slippage_edges=None) -> "RunStats":
        if slippage_edges is None:
            slippage_edges = binning.slippage_edges()
        return cls(
            Histogram(slippage_edges),
            BinnedMean(binning.tau_edges()),
            Moments(),
            BinnedMean(binning.lambda_edges()),
            CoMoment(),
            WealthLedger(),
        )

    def record_trade_observation(
        self,
        lambda_before: float,
        price_change: float,
        sum_dw: float,
        volume_gap: float | None = None,
        residual: float = 0.0,
    ) -> None:
        """Add one trade; ``lambda_before`` is measured on the pre-trade state."""
        self.record_trades(
            [lambda_before],
            [price_change],
            [sum_dw],
            [0.0 if volume_gap is None else volume_gap * price_change],
            [residual],
        )

    def record_trades(self, lam, dp, sum_dw, gap_dp, residual) -> None:
        self.lambda_dp.add_array(lam, dp)
        self.lambda_dp_cov.add_array(lam, dp)
        self.ledger.add_array(sum_dw, gap_dp, residual)

    def record_execution(self, slippage: float, tau: int) -> None:
        self.record_executions([slippage], [tau])

    def record_executions(self, slippage, tau) -> None:
        self.slippage.add_array(slippage)
        self.tau_slippage.add_array(tau, slippage)
        self.exec_time.add_array(tau)

    def merge(self, other: "RunStats") -> "RunStats":
        return RunStats(
            self.slippage.merge(other.slippage),
            self.tau_slippage.merge(other.tau_slippage),
            self.exec_time.merge(other.exec_time),
            self.lambda_dp.merge(other.lambda_dp),
            self.lambda_dp_cov.merge(other.lambda_dp_cov),
            self.ledger.merge(other.ledger),
        )


def observe_trade_log(stats: RunStats, log: dict, warmup: int = 0) -> None:
    """Feed post-warmup rows of a trade log (column dict) into ``stats``."""
    keep = np.asarray(log["index"]) > warmup
    vb = np.asarray(log["v_buy_before"], dtype=np.float64)[keep]
    vs = np.asarray(log["v_sell_before"], dtype=np.float64)[keep]
    dp = np.asarray(log["delta_p"], dtype=np.float64)[keep]
    res = np.asarray(log["sum_dw_residual"], dtype=np.float64)[keep]
    gap_dp = (vb - vs) * dp
    stats.record_trades(imbalance(vb, vs) if vb.size else vb, dp, res - gap_dp, gap_dp, res)


def observe_executions(stats: RunStats, table: dict) -> None:
    stats.record_executions(table["slippage"], table["tau"])


def bootstrap_skewness_ci(values, n_resamples: int = 1000, level: float = 0.99, seed: int = 0):
    """Percentile bootstrap interval for the sample skewness."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        raise InsufficientData("need at least 3 values")
    rng = np.random.Generator(np.random.PCG64(seed))
    skews = np.empty(n_resamples)
    for b in range(n_resamples):
        skews[b] = sample_skewness(x[rng.integers(0, x.size, x.size)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(skews, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def summarize(stats: RunStats) -> dict:
    """Plain-dict report of everything the figure tables are built from."""
    s = stats.slippage.moments
    if s.count < 3:
        raise InsufficientData(f"need at least 3 completed executions, have {s.count}")
    c = stats.lambda_dp_cov
    ledger = stats.ledger
    return {
        "executions": {
            "count": s.count,
            "mean_slippage": s.mean,
            "sem_slippage": s.sem,
            "std_slippage": s.std,
            "skewness": s.skewness,
            "mean_tau": stats.exec_time.mean,
        },
        "trades": {
            "count": c.count,
            "lambda_dp_covariance": c.covariance,
            "lambda_dp_correlation": c.correlation,
            "lambda_dp_correlation_se": c.correlation_se,
            "sum_dw": ledger.sum_dw,
            "sum_gap_dp": ledger.sum_gap_dp,
            "max_abs_residual": ledger.max_abs_residual,
        },
        "imbalance_vs_dp": stats.lambda_dp.table(),
        "slippage_vs_tau": stats.tau_slippage.table(),
        "slippage_histogram": {
            "edges": stats.slippage.edges.tolist(),
            "counts": stats.slippage.counts.tolist(),
            "underflow": stats.slippage.underflow,
            "overflow": stats.slippage.overflow,
        },
    }
