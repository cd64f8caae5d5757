"""Ensemble comparison: mean/SD states, pooled scores, MSE/MAE and windowed SSIM."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .integrate import Ensemble

K1, K2 = 0.01, 0.03
WINDOW = 8


def _members(e) -> np.ndarray:
    m = e.members if isinstance(e, Ensemble) else np.asarray(e, dtype=float)
    if m.ndim < 2 or len(m) == 0:
        raise ValueError("empty ensemble")
    return m


def ensemble_mean_state(e) -> np.ndarray:
    return _members(e).mean(axis=0)


def ensemble_sd_state(e) -> np.ndarray:
    """Elementwise population standard deviation (divide by M)."""
    m = _members(e)
    return np.sqrt(np.mean((m - m.mean(axis=0)) ** 2, axis=0))


def mean_score(e) -> float:
    return float(_members(e).mean())


def std_score(e) -> float:
    """Square root of the pooled variance about the pooled mean."""
    m = _members(e)
    return float(np.sqrt(np.mean((m - m.mean()) ** 2)))


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def _ssim_window(x, y, c1, c2):
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    cov = np.mean((x - mx) * (y - my))
    return ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(a, b, data_range: float = 1.0, window: int = WINDOW) -> float:
    """Mean SSIM over non-overlapping ``window x window`` tiles and channels.

    ``a`` and ``b`` are (H, W) or (C, H, W). Uniform weighting inside a tile;
    trailing rows/columns that do not fill a whole tile are ignored.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ValueError("ssim needs (H, W) or (C, H, W) grids")
    _, h, w = a.shape
    if h < window or w < window:
        raise ValueError(f"grid {h}x{w} smaller than one {window}x{window} window")
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    vals = [
        _ssim_window(a[c, i:i + window, j:j + window], b[c, i:i + window, j:j + window], c1, c2)
        for c in range(a.shape[0])
        for i in range(0, h - window + 1, window)
        for j in range(0, w - window + 1, window)
    ]
    return float(np.mean(vals))


def is_grid(shape) -> bool:
    return len(shape) == 3 and shape[1] >= WINDOW and shape[2] >= WINDOW


@dataclass
class MetricsReport:
    mean_score_pred: float
    mean_score_true: float
    std_score_pred: float
    std_score_true: float
    mean_state_mse: float
    mean_state_mae: float
    mean_state_ssim: float | None
    sd_state_mse: float
    sd_state_mae: float
    sd_state_ssim: float | None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return list(asdict(self).values())

    def csv_row(self, label: str | None = None) -> str:
        cells = ["NA" if v is None else f"{v:.6g}" for v in self.values()]
        return ",".join(([label] if label is not None else []) + cells)

    def text(self, label: str = "") -> str:
        def fmt(v):
            return "  -  " if v is None else f"{v:.3g}"

        return (
            f"{label}\n"
            f"  scores      mean {fmt(self.mean_score_pred)} (true {fmt(self.mean_score_true)})"
            f"   std {fmt(self.std_score_pred)} (true {fmt(self.std_score_true)})\n"
            f"  mean state  MSE {fmt(self.mean_state_mse)}  MAE {fmt(self.mean_state_mae)}"
            f"  SSIM {fmt(self.mean_state_ssim)}\n"
            f"  SD state    MSE {fmt(self.sd_state_mse)}  MAE {fmt(self.sd_state_mae)}"
            f"  SSIM {fmt(self.sd_state_ssim)}"
        )


def compare(pred, truth, data_range: float = 1.0) -> MetricsReport:
    """Fill one report row; SSIM is ``None`` for non-image states."""
    p, t = _members(pred), _members(truth)
    if p.shape[1:] != t.shape[1:]:
        raise ValueError(f"state shapes differ: {p.shape[1:]} vs {t.shape[1:]}")
    pm, tm = ensemble_mean_state(p), ensemble_mean_state(t)
    ps, ts = ensemble_sd_state(p), ensemble_sd_state(t)
    grid = is_grid(p.shape[1:])
    return MetricsReport(
        mean_score(p), mean_score(t), std_score(p), std_score(t),
        mse(pm, tm), mae(pm, tm), ssim(pm, tm, data_range) if grid else None,
        mse(ps, ts), mae(ps, ts), ssim(ps, ts, data_range) if grid else None,
    )


def report_is_finite(r: MetricsReport) -> bool:
    return all(v is None or math.isfinite(v) for v in r.values())
