"""Regulated (làdlàg) paths on a time grid.

A path is stored as its value ``v[k]`` at each grid time ``t_k`` and its right
limit ``v_plus[k]``; between grid points it is constant and equal to
``v_plus[k]``.  So a path can jump on the right at a grid time (``v_plus[k] !=
v[k]``) and on the left (``v[k] != v_plus[k-1]``).

Entries of ``v`` / ``v_plus`` are numpy arrays broadcastable against whatever
indexes the randomness: scalars for deterministic paths, ``(n_nodes_k,)`` for a
barrier on a Lévy lattice, ``(P, n_nodes_k)`` for a solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "RegulatedPath",
    "JumpArray",
    "BarrierSpec",
    "left_envelope",
    "right_jump_times",
    "make_barrier",
    "BARRIER_FAMILIES",
]


@dataclass(frozen=True)
class RegulatedPath:
    times: np.ndarray
    v: tuple
    v_plus: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        v = tuple(np.asarray(a, dtype=float) for a in self.v)
        vp = tuple(np.asarray(a, dtype=float) for a in self.v_plus)
        if not (len(v) == len(vp) == times.size):
            raise InvalidInputError("v, v_plus and times must have equal length")
        if times.size and np.any(vp[-1] != v[-1]):
            raise InvalidInputError("v_plus at the terminal time must equal v")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "v_plus", vp)

    @classmethod
    def from_arrays(cls, times, v, v_plus=None) -> "RegulatedPath":
        """Deterministic path from 1-d arrays (``v_plus`` defaults to ``v``)."""
        v = np.asarray(v, dtype=float)
        v_plus = v.copy() if v_plus is None else np.asarray(v_plus, dtype=float)
        return cls(np.asarray(times), tuple(v), tuple(v_plus))

    @property
    def N(self) -> int:
        return self.times.size - 1

    def right_jump(self, k: int) -> np.ndarray:
        """``Delta_+ xi(t_k) = v_plus[k] - v[k]``."""
        return self.v_plus[k] - self.v[k]

    def left_jump(self, k: int) -> np.ndarray:
        """``Delta xi(t_k) = v[k] - v_plus[k-1]`` (zero at ``t_0``)."""
        if k == 0:
            return np.zeros_like(self.v[0])
        return self.v[k] - self.v_plus[k - 1]

    def right_continuous_part(self) -> "RegulatedPath":
        """``xi*`` with ``xi = xi* + sum_{s<t} Delta_+ xi_s``."""
        acc = np.zeros_like(self.v[0])
        v, vp = [], []
        for k in range(self.N + 1):
            v.append(self.v[k] - acc)
            if k < self.N:
                acc = acc + self.right_jump(k)
            vp.append(self.v_plus[k] - acc)
        return RegulatedPath(self.times, tuple(v), tuple(vp))

    def jumping_part(self) -> np.ndarray:
        """``sum_{s < t_k} Delta_+ xi_s`` at every grid time (deterministic paths)."""
        out = [np.zeros_like(self.v[0])]
        for k in range(self.N):
            out.append(out[-1] + self.right_jump(k))
        return np.array(out)

    def dominated_by(self, other: "RegulatedPath") -> bool:
        """Pointwise ``self <= other`` at grid times and right limits."""
        return all(np.all(a <= b) for a, b in zip(self.v, other.v)) and all(
            np.all(a <= b) for a, b in zip(self.v_plus, other.v_plus)
        )


@dataclass(frozen=True)
class JumpArray:
    """Grid indices ``sigma_{n,1} < sigma_{n,2} < ...`` where ``Delta_+ xi < -1/n``."""

    level: int
    times: tuple

    def __contains__(self, k) -> bool:
        return k in self.times

    def __len__(self) -> int:
        return len(self.times)


def left_envelope(path: RegulatedPath) -> RegulatedPath:
    """``xi_hat(t) = limsup_{s up t, s < t} xi_s``.

    On the grid convention the left limit at ``t_k`` is the constant carried on
    ``(t_{k-1}, t_k)``, i.e. ``v_plus[k-1]``; ``xi_hat(t_0) = v[0]``.  Between
    grid points the path is constant so the envelope equals it there.  Only
    defined for paths whose consecutive entries broadcast (not lattice-indexed).
    """
    v = [path.v[0]]
    for k in range(1, path.N + 1):
        prev = path.v_plus[k - 1]
        if prev.shape != path.v[k].shape and prev.ndim and path.v[k].ndim:
            raise InvalidInputError("left envelope of a lattice-indexed path is parent-dependent")
        v.append(prev + np.zeros_like(path.v[k]))
    vp = list(path.v_plus)
    vp[-1] = v[-1]
    return RegulatedPath(path.times, tuple(v), tuple(vp))


def right_jump_times(path: RegulatedPath, n: int) -> JumpArray:
    """All grid indices ``k < N`` with ``Delta_+ xi(t_k) < -1/n`` (at any node)."""
    if n < 1:
        raise InvalidInputError("level n must be >= 1")
    thresh = -1.0 / n
    idx = tuple(k for k in range(path.N) if np.any(path.right_jump(k) < thresh))
    return JumpArray(level=int(n), times=idx)


def _poly(coeffs: Sequence[float]) -> Callable:
    c = [float(a) for a in coeffs]

    def phi(L):
        out = np.zeros_like(np.asarray(L, dtype=float))
        for a in reversed(c):
            out = out * L + a
        return out

    return phi


BARRIER_FAMILIES = ("constant", "linear", "poly_L")


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier registry entry.

    ``family``:
      * ``constant``: ``{"c"}``;
      * ``linear``: ``xi_t = a + b t``, ``{"a", "b"}``;
      * ``poly_L``: ``xi_t = phi(L_t)`` with ``phi`` the polynomial ``coeffs``
        (lowest degree first), optionally floored: ``max(floor, phi)``; a
        ``slope`` adds ``slope * t``.

    ``right_jumps`` is a list of ``(t, delta_plus)``; each jump shifts the path by
    ``delta_plus`` from ``t+`` onward.  ``terminal`` overrides ``xi_T``.
    """

    family: str
    params: dict
    right_jumps: tuple = ()
    terminal: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "BarrierSpec":
        jumps = tuple(
            (float(j["t"]), float(j["delta_plus"])) if isinstance(j, dict) else (float(j[0]), float(j[1]))
            for j in d.get("right_jumps", [])
        )
        term = d.get("terminal", d.get("params", {}).get("terminal"))
        params = {k: v for k, v in d.get("params", {}).items() if k != "terminal"}
        return cls(d["family"], params, jumps, None if term is None else float(term))


def _grid_index(times: np.ndarray, t: float) -> int:
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidInputError(f"right jump at t={t} is not on the grid")
    return k


def make_barrier(spec: BarrierSpec | dict, times, node_L: Sequence | None = None) -> RegulatedPath:
    """Barrier path on the grid; lattice-indexed when ``node_L`` is given.

    ``node_L`` is ``tree.node_L``; pass it for ``poly_L`` barriers (required) or
    to get per-node arrays for any family.
    """
    if isinstance(spec, dict):
        spec = BarrierSpec.from_dict(spec)
    times = np.asarray(times, dtype=float)
    N = times.size - 1
    p = spec.params
    if spec.family == "constant":
        base = [np.asarray(float(p["c"])) for _ in times]
    elif spec.family == "linear":
        base = [np.asarray(float(p.get("a", 0.0)) + float(p.get("b", 0.0)) * t) for t in times]
    elif spec.family == "poly_L":
        if node_L is None:
            raise InvalidInputError("poly_L barrier needs the lattice node values of L")
        phi = _poly(p.get("coeffs", [0.0]))
        floor = p.get("floor")
        slope = float(p.get("slope", 0.0))
        base = []
        for k, t in enumerate(times):
            val = phi(node_L[k]) + slope * t
            if floor is not None:
                val = np.maximum(float(floor), val)
            base.append(val)
    else:
        raise InvalidInputError(f"unknown barrier family {spec.family!r}; expected one of {BARRIER_FAMILIES}")
    if node_L is not None:
        base = [b + np.zeros(len(node_L[k])) for k, b in enumerate(base)]

    jump_at = np.zeros(N + 1)
    for t, d in spec.right_jumps:
        k = _grid_index(times, t)
        if k >= N:
            raise InvalidInputError("right jump at the terminal time is not allowed")
        jump_at[k] += d
    acc = 0.0
    v, vp = [], []
    for k in range(N + 1):
        v.append(base[k] + acc)
        acc += jump_at[k]
        vp.append(base[k] + acc)
    if spec.terminal is not None:
        v[-1] = np.full_like(v[-1], spec.terminal)
    vp[-1] = v[-1]
    return RegulatedPath(times, tuple(v), tuple(vp))
