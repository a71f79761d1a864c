"""Closed-form layer: model constants, Kalman-Bucy belief formulas, holding
cost, the ambiguity driver and the (x, m) <-> (x1, x2) coordinate change.

Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from statistics import NormalDist

import numpy as np

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class ModelParams:
    a: float = 0.2
    b: float = 0.2
    s: float = 0.1
    rho: float = 0.2
    gamma: float = 20.0
    ell: float = 2.0
    uu: float = 2.0
    c_lo: float = 1.0
    c_hi: float = 1.0
    T: float = 20.0
    m_lo: float = -10.0
    m_hi: float = 10.0
    m0: float = 0.0

    def __post_init__(self):
        for name in ("b", "rho", "ell", "uu", "c_lo", "c_hi", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("s", "gamma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.m_lo < self.m0 < self.m_hi:
            raise ValueError(
                f"need m_lo < m0 < m_hi, got {self.m_lo}, {self.m0}, {self.m_hi}")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FilterState:
    x: float
    m: float
    t: float = 0.0


def riccati_variance(s0, t):
    """Belief variance S(t) = s0 / (1 + s0 t), the solution of dS = -S^2 dt."""
    return s0 / (1.0 + s0 * t)


def drift_coefficient(m, params: ModelParams):
    return params.a - m * params.b


def holding_cost(x, params: ModelParams):
    x = np.asarray(x, dtype=float)
    out = params.c_lo * np.maximum(-x, 0.0) + params.c_hi * np.maximum(x, 0.0)
    return float(out) if out.ndim == 0 else out


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    return _STD_NORMAL.inv_cdf(p)


def belief_tail_probability(h: float, t: float, s0: float) -> float:
    """P(|M_t - M_0| > h) for the unreflected belief martingale."""
    if h <= 0:
        raise ValueError("h must be positive")
    if t <= 0 or s0 <= 0:
        raise ValueError("tail probability is degenerate (identically 0) for t = 0 or s0 = 0")
    scale = math.sqrt((1.0 + s0 * t) / (s0 * s0 * t))
    return 2.0 * (1.0 - normal_cdf(h * scale))


def band_half_width(s0: float) -> float:
    # sup_t sqrt(s0^2 t / (1 + s0 t)) is approached as t -> inf
    return math.sqrt(s0)


def confidence_band(m0: float, s0: float, d: float) -> tuple[float, float]:
    """Widest two-sided (1 - d) band of the belief over all t >= 0."""
    if not 0 < d <= 1:
        raise ValueError("d must lie in (0, 1]")
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    z = normal_quantile(1.0 - d / 2.0)
    w = band_half_width(s0)
    return (m0 - z * w, m0 + z * w)


def driver(y, z, x, S, params: ModelParams):
    """Generator of the quadratic BSDE: -rho y + f(x) + (gamma S / 2) z^2."""
    return -params.rho * y + holding_cost(x, params) + 0.5 * params.gamma * S * z * z


def to_aux_coordinates(x, m, S, params: ModelParams):
    if np.any(np.asarray(S) <= 0):
        raise ValueError("auxiliary coordinates need S > 0 (no-learning case has no transform)")
    return x, x - (params.b / S) * m


def from_aux_coordinates(x1, x2, S, params: ModelParams):
    if np.any(np.asarray(S) <= 0):
        raise ValueError("auxiliary coordinates need S > 0 (no-learning case has no transform)")
    return x1, (S / params.b) * (x1 - x2)
