"""Closed registry of scalar function families.

The same registry serves two roles: time profiles ``a(t), b(t), g(t)`` for the
bound evaluators, and state coefficients ``b(x), sigma1(x), sigma2(x)`` for the
simulator and the Fokker-Planck solver.  A family is written ``name:p1,p2``;
there is deliberately no expression parser.

=============  =========  =====================
name           params     f(x)
=============  =========  =====================
``zero``       none       0
``const``      c          c
``linear``     c          c * x
``affine``     c0, c1     c0 + c1 * x
``sin``        c          c * sin(x)
=============  =========  =====================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["Family", "parse_family", "FAMILY_NAMES"]

_ARITY = {"zero": 0, "const": 1, "linear": 1, "affine": 2, "sin": 1}
_ALIASES = {"constant": "const", "sinusoidal": "sin"}
FAMILY_NAMES = tuple(_ARITY)


@dataclass(frozen=True)
class Family:
    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        name = _ALIASES.get(self.name, self.name)
        if name not in _ARITY:
            raise DomainError(f"unknown function family {self.name!r}; known: {', '.join(FAMILY_NAMES)}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _ARITY[name]:
            raise DomainError(f"family {name!r} takes {_ARITY[name]} parameter(s), got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise DomainError(f"family parameters must be finite, got {params}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "params", params)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.name == "zero":
            return np.zeros_like(x)
        if self.name == "const":
            return np.full_like(x, p[0])
        if self.name == "linear":
            return p[0] * x
        if self.name == "affine":
            return p[0] + p[1] * x
        return p[0] * np.sin(x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.name in ("zero", "const"):
            return np.zeros_like(x)
        if self.name == "linear":
            return np.full_like(x, p[0])
        if self.name == "affine":
            return np.full_like(x, p[1])
        return p[0] * np.cos(x)

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "sin":
            return -self.params[0] * np.sin(x)
        return np.zeros_like(x)

    @property
    def lipschitz(self) -> float:
        """Global Lipschitz constant ``sup |f'|``."""
        p = self.params
        if self.name in ("zero", "const"):
            return 0.0
        if self.name == "affine":
            return abs(p[1])
        return abs(p[0])

    @property
    def growth_sq(self) -> float:
        """Smallest closed-form ``K2`` with ``f(x)**2 <= K2 * (1 + x**2)`` for all x."""
        p = self.params
        if self.name == "zero":
            return 0.0
        if self.name == "affine":
            # Cauchy-Schwarz: (c0 + c1 x)^2 <= (c0^2 + c1^2)(1 + x^2)
            return p[0] ** 2 + p[1] ** 2
        return p[0] ** 2

    @property
    def state_independent(self) -> bool:
        return self.name in ("zero", "const")

    @property
    def is_zero(self) -> bool:
        return self.name == "zero" or all(p == 0.0 for p in self.params)

    def spec(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}:" + ",".join(repr(p) for p in self.params)

    def __str__(self) -> str:
        return self.spec()


def parse_family(text: str | Family) -> Family:
    """Parse ``"affine:1,0.5"`` style descriptors (``"const:0"`` etc.)."""
    if isinstance(text, Family):
        return text
    text = text.strip()
    name, _, rest = text.partition(":")
    try:
        params = tuple(float(s) for s in rest.split(",")) if rest.strip() else ()
    except ValueError as exc:
        raise DomainError(f"cannot parse family parameters in {text!r}") from exc
    return Family(name.strip().lower(), params)
