"""Windowed technical indicators over OHLCV arrays.

Every indicator returns an array aligned with the input bars, NaN where the
lookback is not yet available.  The value at bar ``t`` depends only on bars
``t - lookback .. t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

IndicatorFn = Callable[..., np.ndarray]


def _rolling(a: np.ndarray, w: int) -> np.ndarray:
    """Windows of length ``w`` ending at bars ``w-1 .. n-1``."""
    return sliding_window_view(a, w)


def _pad(values: np.ndarray, n: int) -> np.ndarray:
    out = np.full(n, np.nan)
    if len(values):
        out[n - len(values):] = values
    return out


def _safe_div(num, den, fill):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, float(fill))
    np.divide(num, den, out=out, where=den != 0)
    return out


def _changes(x: np.ndarray) -> np.ndarray:
    # d[j] = x[j] - x[j-1]; d[0] undefined
    d = np.full(len(x), np.nan)
    d[1:] = np.diff(x)
    return d


def _ema_weights(tau: int) -> np.ndarray:
    alpha = 2.0 / (tau + 1.0)
    w = (1.0 - alpha) ** np.arange(tau, -1, -1)  # oldest first
    return w / w.sum()


def windowed_ema(x: np.ndarray, tau: int) -> np.ndarray:
    """Exponential weighting truncated to the ``tau + 1`` most recent bars."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < tau + 1:
        return np.full(n, np.nan)
    return _pad(_rolling(x, tau + 1) @ _ema_weights(tau), n)


def sma(o, h, l, c, v, tau):
    return _pad(_rolling(c, tau).mean(axis=1), len(c))


def ema(o, h, l, c, v, tau):
    return windowed_ema(c, tau)


def wma(o, h, l, c, v, tau):
    w = np.arange(1, tau + 1, dtype=float)
    return _pad(_rolling(c, tau) @ (w / w.sum()), len(c))


def momentum(o, h, l, c, v, tau):
    out = np.full(len(c), np.nan)
    out[tau:] = c[tau:] - c[:-tau]
    return out


def roc(o, h, l, c, v, tau):
    out = np.full(len(c), np.nan)
    out[tau:] = 100.0 * (c[tau:] / c[:-tau] - 1.0)
    return out


def disparity(o, h, l, c, v, tau):
    return c / sma(o, h, l, c, v, tau)


def rsi(o, h, l, c, v, tau):
    """Cutler RSI; 100 with no losses, 0 with no gains, 50 when flat."""
    d = _changes(c)[1:]
    if len(d) < tau:
        return np.full(len(c), np.nan)
    win = _rolling(d, tau)
    gains = np.clip(win, 0, None).sum(axis=1)
    losses = np.clip(-win, 0, None).sum(axis=1)
    return _pad(_safe_div(100.0 * gains, gains + losses, 50.0), len(c))


def williams_r(o, h, l, c, v, tau):
    hh = _rolling(h, tau).max(axis=1)
    ll = _rolling(l, tau).min(axis=1)
    cc = c[tau - 1:]
    return _pad(_safe_div(-100.0 * (hh - cc), hh - ll, -50.0), len(c))


def cci(o, h, l, c, v, tau):
    tp = (h + l + c) / 3.0
    win = _rolling(tp, tau)
    mean = win.mean(axis=1)
    mad = np.abs(win - mean[:, None]).mean(axis=1)
    return _pad(_safe_div(tp[tau - 1:] - mean, 0.015 * mad, 0.0), len(c))


def _true_range(h, l, c):
    prev = np.empty_like(c)
    prev[0] = np.nan
    prev[1:] = c[:-1]
    return np.maximum.reduce([h - l, np.abs(h - prev), np.abs(l - prev)])


def atr(o, h, l, c, v, tau):
    tr = _true_range(h, l, c)[1:]
    if len(tr) < tau:
        return np.full(len(c), np.nan)
    return _pad(_rolling(tr, tau).mean(axis=1), len(c))


def stoch_k(o, h, l, c, v, tau):
    hh = _rolling(h, tau).max(axis=1)
    ll = _rolling(l, tau).min(axis=1)
    return _pad(_safe_div(100.0 * (c[tau - 1:] - ll), hh - ll, 50.0), len(c))


def stoch_d(o, h, l, c, v, tau):
    k = stoch_k(o, h, l, c, v, tau)
    valid = k[tau - 1:]
    if len(valid) < 3:
        return np.full(len(c), np.nan)
    return _pad(_rolling(valid, 3).mean(axis=1), len(c))


def _bollinger(c, tau):
    win = _rolling(c, tau)
    return win.mean(axis=1), win.std(axis=1)


def bollinger_pct_b(o, h, l, c, v, tau):
    mean, sd = _bollinger(c, tau)
    lower = mean - 2.0 * sd
    return _pad(_safe_div(c[tau - 1:] - lower, 4.0 * sd, 0.5), len(c))


def bollinger_bandwidth(o, h, l, c, v, tau):
    mean, sd = _bollinger(c, tau)
    return _pad(_safe_div(4.0 * sd, mean, 0.0), len(c))


def obv_roc(o, h, l, c, v, tau):
    """OBV change over the window, scaled by traded volume in the window."""
    signed = (np.sign(_changes(c)) * v)[1:]
    vol = v[1:].astype(float)
    if len(signed) < tau:
        return np.full(len(c), np.nan)
    num = _rolling(signed, tau).sum(axis=1)
    den = _rolling(vol, tau).sum(axis=1)
    return _pad(_safe_div(num, den, 0.0), len(c))


def volume_ratio(o, h, l, c, v, tau):
    mean = _rolling(v.astype(float), tau).mean(axis=1)
    return _pad(_safe_div(v[tau - 1:], mean, 1.0), len(c))


def close_std(o, h, l, c, v, tau):
    return _pad(_rolling(c, tau).std(axis=1), len(c))


def mfi(o, h, l, c, v, tau):
    tp = (h + l + c) / 3.0
    d = _changes(tp)[1:]
    flow = (tp * v)[1:]
    if len(d) < tau:
        return np.full(len(c), np.nan)
    pos = _rolling(np.where(d > 0, flow, 0.0), tau).sum(axis=1)
    neg = _rolling(np.where(d < 0, flow, 0.0), tau).sum(axis=1)
    return _pad(_safe_div(100.0 * pos, pos + neg, 50.0), len(c))


def _ema_from(x, tau, start):
    out = np.full(len(x), np.nan)
    out[start:] = windowed_ema(x[start:], tau)
    return out


def trix(o, h, l, c, v, tau):
    """One-bar rate of change of a triple-smoothed windowed EMA."""
    e3 = _ema_from(_ema_from(windowed_ema(c, tau), tau, tau), tau, 2 * tau)
    out = np.full(len(c), np.nan)
    out[1:] = 100.0 * (e3[1:] / e3[:-1] - 1.0)
    return out


def psy(o, h, l, c, v, tau):
    up = (_changes(c)[1:] > 0).astype(float)
    if len(up) < tau:
        return np.full(len(c), np.nan)
    return _pad(100.0 * _rolling(up, tau).mean(axis=1), len(c))


def highest_high_ratio(o, h, l, c, v, tau):
    return _pad(c[tau - 1:] / _rolling(h, tau).max(axis=1), len(c))


def lowest_low_ratio(o, h, l, c, v, tau):
    return _pad(c[tau - 1:] / _rolling(l, tau).min(axis=1), len(c))


def volume_momentum(o, h, l, c, v, tau):
    out = np.full(len(c), np.nan)
    vf = v.astype(float)
    out[tau:] = vf[tau:] - vf[:-tau]
    return out


def ad_oscillator(o, h, l, c, v, tau):
    """Volume-weighted close-location value over the window."""
    clv = _safe_div((c - l) - (h - c), h - l, 0.0)
    num = _rolling(clv * v, tau).sum(axis=1)
    den = _rolling(v.astype(float), tau).sum(axis=1)
    return _pad(_safe_div(num, den, 0.0), len(c))


@dataclass(frozen=True)
class Indicator:
    name: str
    func: IndicatorFn
    windows: tuple[int, ...]
    lookback: Callable[[int], int]

    def feature_names(self) -> list[str]:
        return [f"{self.name}_{tau}" for tau in self.windows]

    def max_lookback(self) -> int:
        return max(self.lookback(tau) for tau in self.windows)


_SHORT = (5, 10, 20)
_LONG = (10, 20)


def _same(tau):
    return tau - 1


def _plus(k):
    return lambda tau: tau + k


DEFAULT_REGISTRY: tuple[Indicator, ...] = (
    Indicator("sma", sma, _SHORT, _same),
    Indicator("ema", ema, _SHORT, _plus(0)),
    Indicator("wma", wma, _SHORT, _same),
    Indicator("momentum", momentum, _SHORT, _plus(0)),
    Indicator("roc", roc, _SHORT, _plus(0)),
    Indicator("disparity", disparity, _SHORT, _same),
    Indicator("rsi", rsi, _SHORT, _plus(0)),
    Indicator("williams_r", williams_r, _SHORT, _same),
    Indicator("cci", cci, _SHORT, _same),
    Indicator("atr", atr, _SHORT, _plus(0)),
    Indicator("stoch_k", stoch_k, _SHORT, _same),
    Indicator("stoch_d", stoch_d, _SHORT, _plus(1)),
    Indicator("bb_pct_b", bollinger_pct_b, _SHORT, _same),
    Indicator("bb_width", bollinger_bandwidth, _SHORT, _same),
    Indicator("obv_roc", obv_roc, _SHORT, _plus(0)),
    Indicator("volume_ratio", volume_ratio, _SHORT, _same),
    Indicator("close_std", close_std, _SHORT, _same),
    Indicator("mfi", mfi, _SHORT, _plus(0)),
    Indicator("trix", trix, _SHORT, lambda tau: 3 * tau + 1),
    Indicator("psy", psy, _SHORT, _plus(0)),
    Indicator("hh_ratio", highest_high_ratio, _LONG, _same),
    Indicator("ll_ratio", lowest_low_ratio, _LONG, _same),
    Indicator("volume_momentum", volume_momentum, _LONG, _plus(0)),
    Indicator("ad_oscillator", ad_oscillator, _LONG, _same),
)


def registry_feature_names(registry: Sequence[Indicator] = DEFAULT_REGISTRY) -> list[str]:
    return [name for ind in registry for name in ind.feature_names()]


def registry_lookback(registry: Sequence[Indicator] = DEFAULT_REGISTRY) -> int:
    """Largest number of prior bars any feature needs."""
    return max(ind.max_lookback() for ind in registry)
