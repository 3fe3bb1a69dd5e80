"""Experiment configuration: a single JSON document, validated with field paths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .drivers import DRIVER_FAMILIES, DriverPair, make_driver
from .errors import ConfigError, InvalidInputError, StepSizeError
from .levy import LevyMeasure, ScenarioTree, build_tree
from .reflection import geometric_schedule
from .regulated import BARRIER_FAMILIES, BarrierSpec, RegulatedPath, make_barrier

__all__ = ["ExperimentConfig", "load_config"]


def _num(d: dict, key: str, path: str, default=None, positive=False, integer=False):
    name = f"{path}.{key}" if path else key
    if key not in d:
        if default is None:
            raise ConfigError(name, "missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(name, f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(name, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _record(d, path: str) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    return d


@dataclass(frozen=True)
class ExperimentConfig:
    atoms: tuple  # ((x, lambda), ...)
    T: float
    N: int
    P: int
    seed: int
    f: dict
    g: dict
    barrier: dict
    schedule: tuple
    beta: float = 1.0
    recombining: bool = True
    output_dir: str = "out"
    formats: tuple = ("json", "csv")
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = _record(d, "config")
        levy = _record(d.get("levy"), "levy")
        atoms_raw = levy.get("atoms")
        if not isinstance(atoms_raw, list) or not atoms_raw:
            raise ConfigError("levy.atoms", "expected a nonempty list")
        atoms = []
        for i, a in enumerate(atoms_raw):
            p = f"levy.atoms[{i}]"
            a = _record(a, p)
            atoms.append((_num(a, "x", p), _num(a, "lambda", p, positive=True)))
        try:
            LevyMeasure.from_atoms(atoms)
        except InvalidInputError as e:
            raise ConfigError("levy.atoms", str(e)) from None

        grid = _record(d.get("grid"), "grid")
        T = _num(grid, "T", "grid", positive=True)
        N = _num(grid, "N", "grid", positive=True, integer=True)
        P = _num(grid, "P", "grid", default=1, positive=True, integer=True)
        seed = _num(grid, "seed", "grid", default=0, integer=True)
        lam = sum(a[1] for a in atoms)
        if lam * T / N >= 1:
            raise ConfigError("grid.N", f"lambda*T/N = {lam * T / N:.4g} must be < 1")
        recombining = grid.get("recombining", True)
        if not isinstance(recombining, bool):
            raise ConfigError("grid.recombining", "expected a boolean")

        drv = _record(d.get("drivers"), "drivers")
        f = cls._driver(drv.get("f"), "drivers.f", "f")
        g = cls._driver(drv.get("g"), "drivers.g", "g")

        barrier = _record(d.get("barrier"), "barrier")
        fam = barrier.get("family")
        if fam not in BARRIER_FAMILIES:
            raise ConfigError("barrier.family", f"expected one of {BARRIER_FAMILIES}, got {fam!r}")
        times = np.linspace(0.0, T, N + 1)
        for i, j in enumerate(barrier.get("right_jumps", [])):
            p = f"barrier.right_jumps[{i}]"
            j = _record(j, p)
            t = _num(j, "t", p)
            _num(j, "delta_plus", p)
            if abs(times - t).min() > 1e-9 * max(1.0, abs(t)):
                raise ConfigError(f"{p}.t", f"{t} is not a grid time")
            if abs(t - T) <= 1e-9 * max(1.0, T) or t < 0:
                raise ConfigError(f"{p}.t", "right jumps must lie in [0, T)")

        pen = _record(d.get("penalty"), "penalty")
        sched = pen.get("schedule", [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024])
        if isinstance(sched, dict):
            g_ = sched
            sched = geometric_schedule(
                _num(g_, "start", "penalty.schedule", positive=True, integer=True),
                _num(g_, "factor", "penalty.schedule", positive=True, integer=True),
                _num(g_, "count", "penalty.schedule", positive=True, integer=True),
            )
        if not isinstance(sched, list) or not sched:
            raise ConfigError("penalty.schedule", "expected a nonempty list or a geometric record")
        for v in sched:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise ConfigError("penalty.schedule", f"invalid level {v!r}")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("penalty.schedule", "must be strictly increasing")

        beta = _num(d, "beta", "", default=1.0, positive=True)
        out = _record(d.get("output"), "output")
        formats = tuple(out.get("formats", ["json", "csv"]))
        for fm in formats:
            if fm not in ("json", "csv"):
                raise ConfigError("output.formats", f"unknown format {fm!r}")
        return cls(
            atoms=tuple(atoms),
            T=T,
            N=N,
            P=P,
            seed=seed,
            f=f,
            g=g,
            barrier=barrier,
            schedule=tuple(sched),
            beta=beta,
            recombining=recombining,
            output_dir=str(out.get("dir", "out")),
            formats=formats,
            raw=d,
        )

    @staticmethod
    def _driver(d, path: str, kind: str) -> dict:
        d = _record(d, path) or {"family": "zero"}
        fam = d.get("family", "zero")
        if fam not in DRIVER_FAMILIES:
            raise ConfigError(f"{path}.family", f"expected one of {DRIVER_FAMILIES}, got {fam!r}")
        if not isinstance(d.get("params", {}), dict):
            raise ConfigError(f"{path}.params", "expected an object")
        if "L" in d:
            _num(d, "L", path)
            if d["L"] < 0:
                raise ConfigError(f"{path}.L", "must be nonnegative")
        if kind == "g":
            drv = make_driver(d, "g")
            if not (0.0 < drv.alpha < 0.5):
                raise ConfigError(f"{path}.alpha", f"must satisfy 0 < alpha < 1/2, got {drv.alpha}")
        return dict(d)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, seed=int(seed))

    def measure(self) -> LevyMeasure:
        return LevyMeasure.from_atoms(self.atoms)

    def drivers(self) -> DriverPair:
        return DriverPair(make_driver(self.f, "f"), make_driver(self.g, "g"))

    def tree(self) -> ScenarioTree:
        try:
            return build_tree(self.measure(), T=self.T, N=self.N, P=self.P, seed=self.seed, recombining=self.recombining)
        except StepSizeError as e:
            raise ConfigError("grid.N", str(e)) from None

    def barrier_path(self, tree: ScenarioTree) -> RegulatedPath:
        try:
            return make_barrier(BarrierSpec.from_dict(self.barrier), tree.times, tree.node_L)
        except (InvalidInputError, KeyError) as e:
            raise ConfigError("barrier", str(e)) from None


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON: {e}") from None
    return ExperimentConfig.from_dict(d)
