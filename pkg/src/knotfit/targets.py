"""Built-in scalar target functions on [0,1] with analytic derivatives.

Each target carries its first and second derivative so that curvature-based
mesh densities can be evaluated without numerical differentiation of the
target itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "TargetFunction",
    "builtin_targets",
    "get_target",
    "register_target",
    "target_ids",
]


@dataclass(frozen=True)
class TargetFunction:
    """A scalar function u on [0,1] together with u' and u''.

    Attributes
    ----------
    id : str
        Short name used for registry/CLI lookup.
    f, d1, d2 : callable
        Vectorized evaluations of u, u' and u''.  All three are defined on
        the open interval (0,1); ``d2`` must not be evaluated at any of the
        listed ``singular_points``.
    smallest_length_scale : float or None
        Reporting metadata: the finest feature size of the target, if any.
    singular_points : tuple of float
        Locations where u'' is unbounded.
    """

    id: str
    f: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    smallest_length_scale: Optional[float] = None
    singular_points: tuple = ()

    def __call__(self, x):
        return self.f(x)


def _u1() -> TargetFunction:
    return TargetFunction(
        id="u1",
        f=lambda x: x * (1.0 - x),
        d1=lambda x: 1.0 - 2.0 * x,
        d2=lambda x: np.full_like(np.asarray(x, dtype=float), -2.0),
    )


def _u2() -> TargetFunction:
    return TargetFunction(
        id="u2",
        f=lambda x: np.sin(np.pi * x),
        d1=lambda x: np.pi * np.cos(np.pi * x),
        d2=lambda x: -(np.pi**2) * np.sin(np.pi * x),
    )


def _u3() -> TargetFunction:
    # u'' = -(2/9) x^(-4/3) is unbounded as x -> 0.
    return TargetFunction(
        id="u3",
        f=lambda x: np.asarray(x, dtype=float) ** (2.0 / 3.0),
        d1=lambda x: (2.0 / 3.0) * np.asarray(x, dtype=float) ** (-1.0 / 3.0),
        d2=lambda x: -(2.0 / 9.0) * np.asarray(x, dtype=float) ** (-4.0 / 3.0),
        singular_points=(0.0,),
    )


def _u4() -> TargetFunction:
    a = 100.0

    def f(x):
        return np.tanh(a * (x - 0.25))

    def d1(x):
        t = np.tanh(a * (x - 0.25))
        return a * (1.0 - t * t)

    def d2(x):
        t = np.tanh(a * (x - 0.25))
        return -2.0 * a * a * t * (1.0 - t * t)

    return TargetFunction(id="u4", f=f, d1=d1, d2=d2, smallest_length_scale=1.0 / a)


def _u5() -> TargetFunction:
    b = 500.0
    w = 20.0 * np.pi

    def parts(x):
        q = np.asarray(x, dtype=float) - 0.75
        g = np.exp(-b * q * q)
        return q, g

    def f(x):
        q, g = parts(x)
        return g * np.sin(w * (q + 0.75))

    def d1(x):
        q, g = parts(x)
        s = np.sin(w * (q + 0.75))
        c = np.cos(w * (q + 0.75))
        return g * (-2.0 * b * q * s + w * c)

    def d2(x):
        q, g = parts(x)
        s = np.sin(w * (q + 0.75))
        c = np.cos(w * (q + 0.75))
        gpp = (4.0 * b * b * q * q - 2.0 * b) * s
        cross = 2.0 * (-2.0 * b * q) * w * c
        return g * (gpp + cross - w * w * s)

    return TargetFunction(
        id="u5", f=f, d1=d1, d2=d2, smallest_length_scale=1.0 / math.sqrt(b)
    )


_REGISTRY: dict = {}


def register_target(target: TargetFunction) -> TargetFunction:
    """Add a target to the registry (overwrites an existing id)."""
    _REGISTRY[target.id] = target
    return target


def builtin_targets() -> list:
    """The five standard test targets, ids ``u1`` .. ``u5``."""
    return [_REGISTRY[f"u{i}"] for i in range(1, 6)]


def get_target(target_id: str) -> TargetFunction:
    try:
        return _REGISTRY[target_id]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(f"unknown target {target_id!r}; known targets: {known}")


def target_ids() -> list:
    return sorted(_REGISTRY)


for _mk in (_u1, _u2, _u3, _u4, _u5):
    register_target(_mk())
