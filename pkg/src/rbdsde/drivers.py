"""Parametric driver families ``f(t, y, z)`` and ``g(t, y, z)``.

All drivers are vectorised: ``y`` has shape ``(...,)`` and ``z`` shape
``(..., m)``; the result has the shape of ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = ["Driver", "DriverPair", "make_driver", "DRIVER_FAMILIES"]

DRIVER_FAMILIES = ("zero", "affine", "sine", "znorm")


def _pad(c, m):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size >= m:
        return c[:m]
    return np.concatenate([c, np.zeros(m - c.size)])


@dataclass(frozen=True)
class Driver:
    """One driver from the registry.

    * ``zero``
    * ``affine``: ``a + d t + b y + c . z``
    * ``sine``: ``a sin(b y) + d t``
    * ``znorm``: ``c min(||z||, clip) + a``

    ``L`` is the declared Lipschitz constant, ``alpha`` the declared ``z``
    constant in the ``g``-type condition ``|g - g'|^2 <= L |y-y'|^2 + alpha ||z-z'||^2``.
    """

    family: str = "zero"
    params: dict = field(default_factory=dict)
    L: float = 0.0
    alpha: float | None = None

    def __post_init__(self):
        if self.family not in DRIVER_FAMILIES:
            raise InvalidInputError(f"unknown driver family {self.family!r}")
        if self.L < 0:
            raise InvalidInputError("Lipschitz constant must be nonnegative")

    def __call__(self, t, y, z):
        p = self.params
        y = np.asarray(y, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(y)
        if fam == "affine":
            z = np.asarray(z, dtype=float)
            c = _pad(p.get("c", 0.0), z.shape[-1])
            return p.get("a", 0.0) + p.get("d", 0.0) * t + p.get("b", 0.0) * y + z @ c
        if fam == "sine":
            return p.get("a", 0.0) * np.sin(p.get("b", 1.0) * y) + p.get("d", 0.0) * t + 0.0 * y
        # znorm
        z = np.asarray(z, dtype=float)
        nz = np.minimum(np.linalg.norm(z, axis=-1), p.get("clip", np.inf))
        return p.get("c", 0.0) * nz + p.get("a", 0.0) + 0.0 * y

    @property
    def depends_on_y(self) -> bool:
        p = self.params
        if self.family == "affine":
            return p.get("b", 0.0) != 0.0
        if self.family == "sine":
            return p.get("a", 0.0) != 0.0 and p.get("b", 1.0) != 0.0
        return False

    @property
    def depends_on_z(self) -> bool:
        p = self.params
        if self.family == "affine":
            return bool(np.any(np.asarray(p.get("c", 0.0)) != 0.0))
        if self.family == "znorm":
            return p.get("c", 0.0) != 0.0
        return False

    def natural_constants(self):
        """Smallest constants ``(L_f, L_g, alpha_g)`` implied by the parameters."""
        p = self.params
        if self.family == "zero":
            return 0.0, 0.0, 0.0
        if self.family == "affine":
            b = abs(p.get("b", 0.0))
            c = float(np.linalg.norm(np.atleast_1d(p.get("c", 0.0))))
            # (b dy + c dz)^2 <= 2 b^2 dy^2 + 2 c^2 dz^2
            return max(b, c), 2 * b * b, 2 * c * c
        if self.family == "sine":
            ab = abs(p.get("a", 0.0) * p.get("b", 1.0))
            return ab, ab * ab, 0.0
        c = abs(p.get("c", 0.0))
        return c, 0.0, c * c

    def check_lipschitz(self, m: int, kind: str = "f", n_probes: int = 2000, seed: int = 0, scale: float = 5.0):
        """Sample random probe pairs; return the worst ratio against the declared bound.

        For ``kind="f"``: ``|f - f'| / (L (|dy| + ||dz||))``; for ``kind="g"``:
        ``|g - g'|^2 / (L |dy|^2 + alpha ||dz||^2)``.  A value ``<= 1`` passes.
        """
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 1, n_probes)
        y1, y2 = rng.normal(0, scale, (2, n_probes))
        z1, z2 = rng.normal(0, scale, (2, n_probes, m))
        # half the probes perturb only y or only z
        z2[: n_probes // 4] = z1[: n_probes // 4]
        y2[n_probes // 4 : n_probes // 2] = y1[n_probes // 4 : n_probes // 2]
        diff = np.abs(self(t, y1, z1) - self(t, y2, z2))
        dy = np.abs(y1 - y2)
        dz = np.linalg.norm(z1 - z2, axis=-1)
        if kind == "f":
            bound = self.L * (dy + dz)
            num = diff
        else:
            alpha = 0.0 if self.alpha is None else self.alpha
            bound = self.L * dy**2 + alpha * dz**2
            num = diff**2
        tiny = 1e-300
        ratio = np.where(num <= 1e-13 * (1 + bound), 0.0, num / np.maximum(bound, tiny))
        return float(ratio.max())


@dataclass(frozen=True)
class DriverPair:
    """``(f, g)`` with ``g`` subject to ``0 < alpha < 1/2``."""

    f: Driver = field(default_factory=Driver)
    g: Driver = field(default_factory=lambda: Driver(alpha=0.25))

    def __post_init__(self):
        a = self.g.alpha
        if a is None or not (0.0 < a < 0.5):
            raise InvalidInputError(f"g.alpha must satisfy 0 < alpha < 1/2, got {a}")

    def verify(self, m: int, seed: int = 0) -> dict:
        """Sampled check of the declared constants; raises on violation."""
        rf = self.f.check_lipschitz(m, "f", seed=seed)
        rg = self.g.check_lipschitz(m, "g", seed=seed + 1)
        if rf > 1 + 1e-9:
            raise InvalidInputError(f"f violates its declared Lipschitz constant (ratio {rf:.3g})")
        if rg > 1 + 1e-9:
            raise InvalidInputError(f"g violates its declared constants (ratio {rg:.3g})")
        return {"f_ratio": rf, "g_ratio": rg}

    @property
    def g_exogenous(self) -> bool:
        return not (self.g.depends_on_y or self.g.depends_on_z)


def make_driver(d: dict | None, kind: str = "f") -> Driver:
    """Driver from a config record ``{family, params, L[, alpha]}``.

    Missing constants default to the family's natural ones.
    """
    if d is None:
        d = {"family": "zero"}
    drv = Driver(d.get("family", "zero"), dict(d.get("params", {})))
    lf, lg, ag = drv.natural_constants()
    L = d.get("L", lf if kind == "f" else lg)
    alpha = d.get("alpha", (ag if ag > 0 else 0.25) if kind == "g" else None)
    return Driver(drv.family, drv.params, float(L), None if alpha is None else float(alpha))
