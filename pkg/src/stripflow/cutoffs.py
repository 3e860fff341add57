"""Smooth cutoff primitives shared by the exhaustion constructions."""

from __future__ import annotations

import numpy as np


def smoothstep(t):
    """C^2 quintic step: 0 for t<=0, 1 for t>=1, zero first/second derivatives at the ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep_integral(t):
    """Antiderivative of `smoothstep` with value 0 at t=0 (equals t-1/2 for t>=1)."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    base = tc**4 * (2.5 + tc * (-3.0 + tc))
    return base + np.where(t > 1.0, t - 1.0, 0.0)


def ramp_cutoff(s, length: float, eps: float):
    """Per-edge cutoff: 0 within eps of the ends, 1 on [2*eps, length-2*eps]."""
    s = np.asarray(s, dtype=float)
    up = smoothstep((s - eps) / eps)
    down = smoothstep((length - eps - s) / eps)
    return np.minimum(up, down)


def ramp_cutoff_integral(s, length: float, eps: float):
    """Integral of `ramp_cutoff` from 0 to s (total over the edge: length - 3*eps)."""
    s = np.asarray(s, dtype=float)
    total = length - 3.0 * eps
    rising = eps * smoothstep_integral((s - eps) / eps)
    falling = total - eps * smoothstep_integral((length - eps - s) / eps)
    return np.where(s <= length / 2.0, np.minimum(rising, total), np.maximum(falling, 0.0))


def unit_cutoff(t):
    """[0,1]-valued cutoff of one variable: 1 on t<=1, 0 on t>=2, smooth in between."""
    return 1.0 - smoothstep(np.asarray(t, dtype=float) - 1.0)
