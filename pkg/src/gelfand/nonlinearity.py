"""Built-in nonlinearities f with their left derivative f'_- and primitive F.

All families are nonnegative and nondecreasing on the range where solutions
live (t >= 0).  f'_- follows the liminf convention, so the Affine kink at
t = B/A gets slope 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("exp", "power", "affine", "constant")


@dataclass(frozen=True)
class Nonlinearity:
    family: str
    q: float | None = None
    A: float | None = None
    B: float | None = None
    c: float | None = None

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
        if fam == "power" and not (self.q is not None and self.q > 1):
            raise ValueError("power family needs q > 1")
        if fam == "affine" and not (self.A is not None and self.A > 0 and self.B is not None):
            raise ValueError("affine family needs A > 0 and B")
        if fam == "constant" and not (self.c is not None and self.c >= 0):
            raise ValueError("constant family needs c >= 0")

    # -- constructors -----------------------------------------------------

    @classmethod
    def exponential(cls) -> "Nonlinearity":
        return cls("exp")

    @classmethod
    def power(cls, q: float) -> "Nonlinearity":
        return cls("power", q=float(q))

    @classmethod
    def affine(cls, A: float, B: float) -> "Nonlinearity":
        return cls("affine", A=float(A), B=float(B))

    @classmethod
    def constant(cls, c: float) -> "Nonlinearity":
        return cls("constant", c=float(c))

    # -- evaluation -------------------------------------------------------

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exp":
            return np.exp(t)
        if self.family == "power":
            return np.maximum(1.0 + t, 0.0) ** self.q
        if self.family == "affine":
            return np.maximum(self.A * t - self.B, 0.0)
        return np.full_like(t, self.c)

    def dleft(self, t):
        """Left derivative f'_-(t)."""
        t = np.asarray(t, dtype=float)
        if self.family == "exp":
            return np.exp(t)
        if self.family == "power":
            return self.q * np.maximum(1.0 + t, 0.0) ** (self.q - 1)
        if self.family == "affine":
            return np.where(t > self.B / self.A, self.A, 0.0)
        return np.zeros_like(t)

    def primitive(self, t):
        """F(t) = ∫_0^t f, so F(0) = 0."""
        t = np.asarray(t, dtype=float)
        if self.family == "exp":
            return np.expm1(t)
        if self.family == "power":
            q = self.q
            return (np.maximum(1.0 + t, 0.0) ** (q + 1) - 1.0) / (q + 1)
        if self.family == "affine":
            t0 = self.B / self.A
            return 0.5 * self.A * (np.maximum(t - t0, 0.0) ** 2 - max(-t0, 0.0) ** 2)
        return self.c * t

    @property
    def is_linear(self) -> bool:
        """True when f has no superlinear growth (no fold is expected)."""
        return self.family in ("constant", "affine")

    def describe(self) -> dict:
        d = {"family": self.family}
        for key in ("q", "A", "B", "c"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        return d
