"""Sigmoidal activations and the kernels built from them.

``phi(x) = (sigma(x + 1) - sigma(x - 1)) / 2`` is a bump of unit mass and
``psi`` is its tensor product over the coordinates of a point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatchError, NnmcError

__all__ = ["SigmoidSpec", "sigma_eval", "phi_eval", "psi_eval", "RAMP_HALF_WIDTH"]

KINDS = ("logistic", "smoothed_ramp")

# the ramp rises from 0 to 1 on [-RAMP_HALF_WIDTH, RAMP_HALF_WIDTH]
RAMP_HALF_WIDTH = 3.0


@dataclass(frozen=True)
class SigmoidSpec:
    """Sigmoid ``kind`` evaluated as ``sigma(steepness * x)``."""

    kind: str = "logistic"
    steepness: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NnmcError(f"unknown sigmoid kind {self.kind!r}; expected one of {KINDS}")
        if not (self.steepness > 0 and math.isfinite(self.steepness)):
            raise NnmcError(f"steepness must be positive and finite, got {self.steepness}")

    @property
    def phi_support(self) -> float:
        """Radius outside which phi vanishes exactly (inf for the logistic)."""
        if self.kind == "smoothed_ramp":
            return 1.0 + RAMP_HALF_WIDTH / self.steepness
        return math.inf


def _ramp(t):
    # monotone cubic (smoothstep) on [-3, 3], exact 0 / 1 outside
    s = np.clip((np.asarray(t, dtype=np.float64) + RAMP_HALF_WIDTH) / (2 * RAMP_HALF_WIDTH), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def sigma_eval(spec: SigmoidSpec, x):
    """Evaluate the sigmoid; accepts scalars or arrays."""
    t = spec.steepness * np.asarray(x, dtype=np.float64)
    out = expit(t) if spec.kind == "logistic" else _ramp(t)
    return out if out.ndim else float(out)


def phi_eval(spec: SigmoidSpec, x):
    """Kernel ``(sigma(x+1) - sigma(x-1)) / 2``, written so that phi(x) == phi(-x) bit for bit."""
    x = np.asarray(x, dtype=np.float64)
    w = spec.steepness
    if spec.kind == "logistic":
        # sigma(a) - sigma(b) = sigma(a) * sigma(-b) * (1 - exp(b - a)); no cancellation in the tails
        out = 0.5 * (expit(w * (x + 1.0)) * expit(w * (1.0 - x))) * -math.expm1(-2.0 * w)
    else:
        # sigma(w(x-1)) = 1 - sigma(w(1-x)) for the symmetric ramp
        out = np.maximum(0.5 * ((_ramp(w * (x + 1.0)) + _ramp(w * (1.0 - x))) - 1.0), 0.0)
    return out if out.ndim else float(out)


def psi_eval(spec: SigmoidSpec, x_vec, d: int | None = None) -> float:
    """Product of ``phi`` over the coordinates of ``x_vec``."""
    x = np.atleast_1d(np.asarray(x_vec, dtype=np.float64))
    if x.ndim != 1 or x.size < 1 or (d is not None and x.size != d):
        raise DimensionMismatchError(f"psi_eval: expected a vector of length {d}, got shape {x.shape}")
    return float(np.prod(phi_eval(spec, x)))
