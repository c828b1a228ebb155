"""Uniform time grids, sampled functions and the fractional-order check."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DomainError, GridMismatchError

__all__ = ["TimeGrid", "SampledFn", "check_alpha", "same_grid"]


def check_alpha(alpha: float, *, allow_one: bool = False) -> float:
    """Validate a fractional order; ``alpha = 1`` only when ``allow_one``."""
    alpha = float(alpha)
    upper_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (math.isfinite(alpha) and alpha > 0.0 and upper_ok):
        rng = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"fractional order must lie in {rng}, got {alpha!r}")
    return alpha


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_j = j * t_end / n_steps`` of ``[0, t_end]``."""

    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise DomainError(f"t_end must be finite and > 0, got {self.t_end!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def h(self) -> float:
        return self.t_end / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1, dtype=float) * self.t_end / self.n_steps
        t[-1] = self.t_end
        t.setflags(write=False)
        return t

    def __len__(self) -> int:
        return self.n_steps + 1

    def refine(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.t_end, self.n_steps * factor)


def same_grid(*grids: TimeGrid) -> TimeGrid:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {g}")
    return first


@dataclass(frozen=True)
class SampledFn:
    """Values of a real function at the nodes of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise GridMismatchError(
                f"expected {len(self.grid)} values for {self.grid}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("sampled function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: TimeGrid, f: Callable[[np.ndarray], np.ndarray]) -> SampledFn:
        return cls(grid, np.broadcast_to(np.asarray(f(grid.nodes), dtype=float), (len(grid),)))

    @classmethod
    def constant(cls, grid: TimeGrid, c: float) -> SampledFn:
        return cls(grid, np.full(len(grid), float(c)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    def is_nondecreasing(self, tol: float = 1e-12) -> bool:
        """Nondecreasing up to ``tol`` relative to the function scale (flat segments pass)."""
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(np.all(np.diff(self.values) >= -tol * scale))
