"""Least-squares fits of power-law and exponential decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError


@dataclass(frozen=True)
class FitResult:
    """Slope of a straight-line fit with its standard error.

    For power laws ``slope`` is the exponent of ``t``; for exponential
    fits it is ``-eta`` in ``value ~ exp(-eta t)``.
    """

    slope: float
    stderr: float
    intercept: float
    npoints: int

    @property
    def rate(self) -> float:
        """Exponential decay rate ``eta = -slope``."""
        return -self.slope


def _weighted_line(x, y, weights=None) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points for a line fit")
    sw = np.sqrt(w)
    design = np.column_stack([x, np.ones_like(x)]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, y * sw, rcond=None)
    resid = (y - (coef[0] * x + coef[1])) * sw
    dof = x.size - 2
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        stderr = float(np.sqrt(max(cov[0, 0], 0.0)))
    else:
        stderr = 0.0
    return FitResult(float(coef[0]), stderr, float(coef[1]), int(x.size))


def power_law_fit(t, values, t_min=None, t_max=None, weights=None, min_points=2) -> FitResult:
    """Fit ``log|values| = slope * log t + c`` on ``t_min <= t <= t_max``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = np.ones(t.shape, dtype=bool)
    if t_min is not None:
        mask &= t >= t_min * (1 - 1e-12)
    if t_max is not None:
        mask &= t <= t_max * (1 + 1e-12)
    if mask.sum() < min_points:
        raise FitError(f"only {int(mask.sum())} points in the fit window, need {min_points}")
    if np.any(t[mask] <= 0) or np.any(~(v[mask] > 0)):
        raise FitError("power-law fit needs positive times and positive values")
    w = None if weights is None else np.asarray(weights, dtype=float)[mask]
    return _weighted_line(np.log(t[mask]), np.log(v[mask]), w)


def exponential_fit(t, values, last_fraction=0.5) -> FitResult:
    """Fit ``log|values|`` linearly in ``t`` over the last part of the range."""
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    start = t.min() + (1.0 - last_fraction) * (t.max() - t.min())
    mask = t >= start - 1e-12 * abs(start)
    if mask.sum() < 2:
        raise FitError("exponential fit needs two points in the window")
    if np.any(v[mask] <= 0):
        raise FitError("exponential fit needs positive values")
    return _weighted_line(t[mask], np.log(v[mask]))
