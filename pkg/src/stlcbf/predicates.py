"""Predicate functions: concave, continuously differentiable state constraints.

Every predicate is a pair (h, grad h) with h concave and C1 on the state
domain; the predicate holds where h(x) >= 0.  Shipped forms:

- ``ball2``:      h = r^2 - ||x[sel] - c||^2.  Encodes "within distance r of
                  c" with the same zero level set as r - ||.|| but C1 at the
                  center.
- ``ball2_diff``: h = r^2 - ||x[sel_a] - x[sel_b] - c||^2 for inter-agent
                  distance bounds.
- ``affine``:     h = a.x[sel] + d.
- ``box_inf``:    ||x[sel]||_inf <= r expanded into 2*len(sel) affine
                  predicates (the max-norm itself is not differentiable).
- ``constant``:   h = const, used for the boolean constant "true".

Gradients are full-width rows over the state vector so downstream code can
contract them with input maps directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Predicate",
    "ball2",
    "ball2_diff",
    "affine",
    "box_inf",
    "constant",
]


@dataclass(frozen=True)
class Predicate:
    """A named concave C1 constraint h with analytic gradient.

    ``max_value`` is the supremum of h over the state domain when finite
    (r^2 for balls); it is used when estimating barrier headroom.
    Identity, equality, and hashing are by name.
    """

    name: str
    eval: Callable[[np.ndarray], float] = field(compare=False, repr=False)
    grad: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    max_value: float | None = field(default=None, compare=False)
    form: dict | None = field(default=None, compare=False, repr=False)


def _selection(dim: int, select: Sequence[int] | None, width: int) -> np.ndarray:
    if select is None:
        if width != dim:
            raise ValueError(f"select is required when parameter width {width} != state dim {dim}")
        idx = np.arange(dim)
    else:
        idx = np.asarray(list(select), dtype=int)
        if idx.ndim != 1 or len(idx) != width:
            raise ValueError(f"select must list {width} state indices, got {list(select)!r}")
        if np.any(idx < 0) or np.any(idx >= dim):
            raise ValueError(f"select indices out of range for state dim {dim}: {list(select)!r}")
    return idx


def ball2(
    name: str,
    center: Sequence[float],
    radius: float,
    dim: int,
    select: Sequence[int] | None = None,
) -> Predicate:
    """h(x) = radius^2 - ||x[select] - center||^2."""
    c = np.asarray(center, dtype=float)
    idx = _selection(dim, select, len(c))
    r2 = float(radius) ** 2

    def h(x: np.ndarray) -> float:
        d = x[idx] - c
        return r2 - float(d @ d)

    def dh(x: np.ndarray) -> np.ndarray:
        g = np.zeros(dim)
        g[idx] = -2.0 * (x[idx] - c)
        return g

    form = {"form": "ball2", "center": [float(v) for v in c], "radius": float(radius),
            "select": [int(i) for i in idx]}
    return Predicate(name, h, dh, max_value=r2, form=form)


def ball2_diff(
    name: str,
    radius: float,
    dim: int,
    select_a: Sequence[int],
    select_b: Sequence[int],
    offset: Sequence[float] | None = None,
) -> Predicate:
    """h(x) = radius^2 - ||x[select_a] - x[select_b] - offset||^2."""
    ia = np.asarray(list(select_a), dtype=int)
    ib = np.asarray(list(select_b), dtype=int)
    if len(ia) != len(ib):
        raise ValueError("select_a and select_b must have equal length")
    off = np.zeros(len(ia)) if offset is None else np.asarray(offset, dtype=float)
    r2 = float(radius) ** 2

    def h(x: np.ndarray) -> float:
        d = x[ia] - x[ib] - off
        return r2 - float(d @ d)

    def dh(x: np.ndarray) -> np.ndarray:
        d = x[ia] - x[ib] - off
        g = np.zeros(dim)
        g[ia] = -2.0 * d
        g[ib] += 2.0 * d
        return g

    form = {"form": "ball2_diff", "radius": float(radius),
            "select_a": [int(i) for i in ia], "select_b": [int(i) for i in ib],
            "offset": [float(v) for v in off]}
    return Predicate(name, h, dh, max_value=r2, form=form)


def affine(
    name: str,
    coeffs: Sequence[float],
    offset: float,
    dim: int,
    select: Sequence[int] | None = None,
) -> Predicate:
    """h(x) = coeffs . x[select] + offset.  Affine, hence concave; unbounded above."""
    a = np.asarray(coeffs, dtype=float)
    idx = _selection(dim, select, len(a))
    d = float(offset)
    g_full = np.zeros(dim)
    g_full[idx] = a

    def h(x: np.ndarray) -> float:
        return float(a @ x[idx]) + d

    def dh(x: np.ndarray) -> np.ndarray:
        return g_full.copy()

    form = {"form": "affine", "coeffs": [float(v) for v in a], "offset": d,
            "select": [int(i) for i in idx]}
    return Predicate(name, h, dh, max_value=None, form=form)


def box_inf(
    name: str,
    radius: float,
    dim: int,
    select: Sequence[int],
) -> tuple[Predicate, ...]:
    """Expand ||x[select]||_inf <= radius into 2*len(select) affine predicates.

    Component i yields h = radius - x_i (named ``{name}:{i}+``) and
    h = radius + x_i (named ``{name}:{i}-``); their conjunction has the same
    zero superlevel set as the max-norm constraint but every piece is C1.
    """
    preds = []
    for i in select:
        preds.append(affine(f"{name}:{i}+", [-1.0], float(radius), dim, select=[i]))
        preds.append(affine(f"{name}:{i}-", [1.0], float(radius), dim, select=[i]))
    return tuple(preds)


def constant(name: str, value: float) -> Predicate:
    """h(x) = value with zero gradient; used for the boolean constant."""
    v = float(value)

    def h(x: np.ndarray) -> float:
        return v

    def dh(x: np.ndarray) -> np.ndarray:
        return np.zeros(len(x))

    return Predicate(name, h, dh, max_value=v, form={"form": "constant", "value": v})
