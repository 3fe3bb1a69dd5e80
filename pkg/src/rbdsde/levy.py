"""Finite-atom Lévy measures, Teugels martingales and scenario lattices.

A pure-jump Lévy process with finitely many jump sizes is a compound Poisson
process.  Its compensated power-jump processes, orthonormalised under
``x**2 nu(dx)``, give the martingales ``H^(1..m)`` that drive the backward
equations solved in :mod:`rbdsde.solver`.

The scenario lattice discretises ``[0, T]`` into ``N`` steps.  Each step either
has no jump (probability ``1 - lam*dt``) or exactly one jump of size ``x_j``
(probability ``lam_j*dt``).  The Brownian path ``B`` is sampled per scenario and
is known in full at time zero, so every scenario is solved on the same Lévy
lattice with its own ``dB``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, StepSizeError

__all__ = [
    "LevyMeasure",
    "TeugelsBasis",
    "ScenarioTree",
    "LevyPath",
    "moment",
    "teugels_basis",
    "teugels_increment",
    "build_tree",
    "scenario_rng",
    "simulate_levy_path",
    "simulate_levy_paths",
    "empirical_bracket",
]


@dataclass(frozen=True)
class LevyMeasure:
    """Lévy measure with finitely many atoms ``(x_j, lam_j)``."""

    sizes: tuple
    intensities: tuple

    def __post_init__(self):
        sizes = tuple(float(x) for x in self.sizes)
        lams = tuple(float(v) for v in self.intensities)
        if len(sizes) != len(lams):
            raise InvalidInputError("sizes and intensities differ in length")
        if any(x == 0.0 or not math.isfinite(x) for x in sizes):
            raise InvalidInputError("jump sizes must be finite and nonzero")
        if any(not (v > 0.0) or not math.isfinite(v) for v in lams):
            raise InvalidInputError("intensities must be finite and positive")
        if len(set(sizes)) != len(sizes):
            raise InvalidInputError("jump sizes must be pairwise distinct")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "intensities", lams)

    @classmethod
    def from_atoms(cls, atoms: Sequence) -> "LevyMeasure":
        """Build from ``[(x, lam), ...]`` or ``[{"x": .., "lambda": ..}, ...]``."""
        xs, ls = [], []
        for atom in atoms:
            if isinstance(atom, dict):
                xs.append(atom["x"])
                ls.append(atom["lambda"])
            else:
                x, lam = atom
                xs.append(x)
                ls.append(lam)
        return cls(tuple(xs), tuple(ls))

    @property
    def n_atoms(self) -> int:
        return len(self.sizes)

    @property
    def total_intensity(self) -> float:
        return float(sum(self.intensities))

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.sizes)

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.intensities)

    def small_jump_integral(self) -> float:
        """``int (1 ^ x^2) nu(dx)``, finite for any finite-atom measure."""
        return float(np.sum(self.lam * np.minimum(1.0, self.x**2)))


def moment(measure: LevyMeasure, i: int) -> float:
    """Return ``m_i = sum_j lam_j * x_j**i``, the mean of ``L_1^(i)``."""
    if i < 1:
        raise InvalidInputError("moment order must be >= 1")
    return math.fsum(lam * x**i for x, lam in zip(measure.sizes, measure.intensities))


@dataclass(frozen=True)
class TeugelsBasis:
    """Orthonormalised power-jump martingales ``H^(i) = sum_j alpha_ij Y^(j)``.

    ``alpha[i, j]`` is the coefficient of ``x**j`` in ``q_{i+1}``; the jump of
    ``H^(i+1)`` at a jump of size ``x`` is ``x * q_{i+1}(x)``.
    """

    measure: LevyMeasure
    alpha: np.ndarray
    moments: np.ndarray  # moments[i - 1] == m_i, i = 1 .. 2m+1

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]

    def q(self, x) -> np.ndarray:
        """Evaluate ``q_1..q_m`` at ``x``; trailing axis indexes the polynomial."""
        x = np.asarray(x, dtype=float)
        powers = x[..., None] ** np.arange(self.dim)
        return powers @ self.alpha.T

    def jump(self, x) -> np.ndarray:
        """Jump ``Delta H^(k)`` caused by a Lévy jump of size ``x``."""
        x = np.asarray(x, dtype=float)
        return x[..., None] * self.q(x)

    def gram(self) -> np.ndarray:
        """Gram matrix of ``q_i`` under ``x^2 nu(dx)``, integrating over the atoms."""
        qv = self.q(self.measure.x)  # (n_atoms, m)
        w = self.measure.lam * self.measure.x**2
        return (qv * w[:, None]).T @ qv


def teugels_basis(measure: LevyMeasure, rank_tol: float = 1e-10) -> TeugelsBasis:
    """Gram-Schmidt on ``1, x, x^2, ...`` under ``<p, q> = int p q x^2 nu(dx)``.

    The procedure runs on the vectors of monomial values at the atoms, with one
    reorthogonalisation pass.  It stops when the residual of the next monomial,
    relative to that monomial's norm, drops below ``rank_tol``.
    """
    if measure.n_atoms == 0:
        raise InvalidInputError("empty Lévy measure")
    if not rank_tol > 0:
        raise InvalidInputError("rank_tol must be positive")
    x = measure.x
    w = measure.lam * x**2
    n_atoms = measure.n_atoms

    def inner(u, v):
        return float(np.sum(w * u * v))

    q_vals = []  # values of q_i at the atoms
    coefs = []  # coefficient rows, length n_atoms
    for a in range(n_atoms):
        u = x**a
        unorm = math.sqrt(inner(u, u))
        r = u.copy()
        c = np.zeros(n_atoms)
        c[a] = 1.0
        for _ in range(2):
            for qv, qc in zip(q_vals, coefs):
                h = inner(r, qv)
                r = r - h * qv
                c = c - h * qc
        rnorm = math.sqrt(inner(r, r))
        if rnorm < rank_tol * unorm:
            break
        q_vals.append(r / rnorm)
        coefs.append(c / rnorm)
    m = len(coefs)
    alpha = np.array([c[:m] for c in coefs])
    moments = np.array([moment(measure, i) for i in range(1, 2 * m + 2)])
    return TeugelsBasis(measure=measure, alpha=alpha, moments=moments)


def teugels_increment(basis: TeugelsBasis, jump_size, dt: float) -> np.ndarray:
    """One-step increment of ``H^(1..m)``.

    ``jump_size`` is ``None`` (or 0) for "no jump", otherwise the jump size.
    ``Delta Y^(j) = x^j - m_j dt`` on a jump and ``-m_j dt`` otherwise.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    m = basis.dim
    j = np.arange(1, m + 1)
    if jump_size is None or jump_size == 0:
        dy = -basis.moments[:m] * dt
    else:
        dy = float(jump_size) ** j - basis.moments[:m] * dt
    return basis.alpha @ dy


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for scenario ``index``; adding scenarios never reshuffles earlier ones."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


@dataclass(frozen=True)
class ScenarioTree:
    """Lévy lattice shared by ``P`` Brownian scenarios.

    Outcome 0 is "no jump"; outcome ``j >= 1`` is a jump of size ``x_j``.
    ``children[k][i, o]`` is the index at step ``k+1`` of the child of node ``i``
    at step ``k`` under outcome ``o``.  With ``recombining=True`` nodes are jump
    count vectors, otherwise full outcome histories.
    """

    measure: LevyMeasure
    basis: TeugelsBasis
    T: float
    N: int
    dB: np.ndarray  # (P, N)
    probs: np.ndarray  # (n_out,)
    dH: np.ndarray  # (n_out, m)
    children: list
    node_L: list  # Lévy value L_{t_k} per node
    node_prob: list  # unconditional probability per node
    recombining: bool
    seed: int
    gram: np.ndarray = field(repr=False)
    _proj: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def n_scenarios(self) -> int:
        return self.dB.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.probs.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.dim

    def n_nodes(self, k: int) -> int:
        return self.node_L[k].shape[0]

    @property
    def brownian_paths(self) -> np.ndarray:
        B = np.zeros((self.n_scenarios, self.N + 1))
        B[:, 1:] = np.cumsum(self.dB, axis=1)
        return B

    def gather(self, values: np.ndarray, k: int) -> np.ndarray:
        """Child values of every node at step ``k``: ``(..., n_k, n_out)``."""
        return values[..., self.children[k]]

    def expect_next(self, values: np.ndarray, k: int) -> np.ndarray:
        """Conditional expectation at step ``k`` of a step-``k+1`` node array."""
        return self.gather(values, k) @ self.probs

    def expectation(self, values: np.ndarray, k: int) -> np.ndarray:
        """Average of a step-``k`` node array over the Lévy law (per scenario)."""
        return values @ self.node_prob[k]

    def with_scenarios(self, dB: np.ndarray) -> "ScenarioTree":
        """Same lattice, different Brownian increments."""
        from dataclasses import replace

        dB = np.asarray(dB, dtype=float)
        if dB.ndim != 2 or dB.shape[1] != self.N:
            raise InvalidInputError("dB must have shape (P, N)")
        return replace(self, dB=dB)


def _count_lattice(n_atoms: int, N: int, sizes: np.ndarray):
    children, node_L = [], []
    level = [tuple([0] * n_atoms)]
    node_L.append(np.zeros(1))
    for _ in range(N):
        nxt, index = [], {}

        def slot(c):
            if c not in index:
                index[c] = len(nxt)
                nxt.append(c)
            return index[c]

        ch = np.empty((len(level), n_atoms + 1), dtype=np.intp)
        for i, c in enumerate(level):
            ch[i, 0] = slot(c)
            for j in range(n_atoms):
                cj = list(c)
                cj[j] += 1
                ch[i, j + 1] = slot(tuple(cj))
        children.append(ch)
        level = nxt
        node_L.append(np.array([np.dot(c, sizes) for c in level]))
    return children, node_L


def _history_tree(n_atoms: int, N: int, sizes: np.ndarray):
    n_out = n_atoms + 1
    jump = np.concatenate([[0.0], sizes])
    children, node_L = [], [np.zeros(1)]
    for k in range(N):
        n_k = n_out**k
        children.append(np.arange(n_k * n_out, dtype=np.intp).reshape(n_k, n_out))
        node_L.append((node_L[-1][:, None] + jump[None, :]).ravel())
    return children, node_L


def build_tree(
    measure: LevyMeasure,
    basis: TeugelsBasis | None = None,
    T: float = 1.0,
    N: int = 10,
    P: int = 1,
    seed: int = 0,
    recombining: bool = True,
    dB: np.ndarray | None = None,
) -> ScenarioTree:
    """Build the scenario lattice; deterministic in ``seed``.

    ``dB`` overrides the sampled Brownian increments (shape ``(P, N)``).
    """
    if basis is None:
        basis = teugels_basis(measure)
    if not T > 0:
        raise InvalidInputError("T must be positive")
    if N < 1 or P < 1:
        raise InvalidInputError("N and P must be >= 1")
    dt = T / N
    lam_dt = measure.total_intensity * dt
    if lam_dt >= 1.0:
        need = math.floor(measure.total_intensity * T) + 1
        raise StepSizeError(
            f"lambda*dt = {lam_dt:.4g} >= 1; increase N (need N > {need - 1})"
        )
    probs = np.concatenate([[1.0 - lam_dt], measure.lam * dt])
    dH = np.stack([teugels_increment(basis, None, dt)] + [teugels_increment(basis, x, dt) for x in measure.sizes])
    if dB is None:
        sd = math.sqrt(dt)
        dB = np.stack([scenario_rng(seed, p).normal(0.0, sd, size=N) for p in range(P)])
    else:
        dB = np.asarray(dB, dtype=float)
        if dB.shape != (P, N):
            raise InvalidInputError(f"dB must have shape {(P, N)}")
    if recombining:
        children, node_L = _count_lattice(measure.n_atoms, N, measure.x)
    else:
        children, node_L = _history_tree(measure.n_atoms, N, measure.x)
    node_prob = [np.ones(1)]
    for k in range(N):
        nxt = np.zeros(node_L[k + 1].shape[0])
        np.add.at(nxt, children[k], node_prob[k][:, None] * probs[None, :])
        node_prob.append(nxt)
    gram = (dH * probs[:, None]).T @ dH
    if np.linalg.cond(gram) > 1e14:
        from .errors import NumericalError

        raise NumericalError("one-step Gram matrix of the Teugels increments is singular")
    proj = np.linalg.solve(gram, (dH * probs[:, None]).T)  # (m, n_out)
    return ScenarioTree(
        measure=measure,
        basis=basis,
        T=float(T),
        N=int(N),
        dB=dB,
        probs=probs,
        dH=dH,
        children=children,
        node_L=node_L,
        node_prob=node_prob,
        recombining=recombining,
        seed=int(seed),
        gram=gram,
        _proj=proj,
    )


@dataclass(frozen=True)
class LevyPath:
    """Jump times and sizes of one compound-Poisson path on ``[0, T]``."""

    times: np.ndarray
    sizes: np.ndarray
    T: float

    def value(self, t: float) -> float:
        """``L_t`` (right-continuous)."""
        return float(self.sizes[self.times <= t].sum())


def simulate_levy_path(measure: LevyMeasure, T: float, seed: int, index: int = 0) -> LevyPath:
    """Exact simulation: Poisson(lam T) jumps, uniform times, sizes by ``lam_j / lam``."""
    if T < 0:
        raise InvalidInputError("T must be nonnegative")
    rng = scenario_rng(seed, index)
    lam = measure.total_intensity
    count = rng.poisson(lam * T) if T > 0 else 0
    times = np.sort(rng.uniform(0.0, T, size=count))
    sizes = measure.x[rng.choice(measure.n_atoms, size=count, p=measure.lam / lam)]
    return LevyPath(times=times, sizes=sizes, T=float(T))


def simulate_levy_paths(measure: LevyMeasure, T: float, n_paths: int, seed: int) -> list:
    """``n_paths`` independent paths; path ``i`` equals ``simulate_levy_path(.., seed, i)``."""
    return [simulate_levy_path(measure, T, seed, i) for i in range(n_paths)]


def empirical_bracket(paths: Sequence[LevyPath], basis: TeugelsBasis, i: int, j: int, T: float | None = None):
    """Monte Carlo estimate of ``E[H^(i), H^(j)]_T`` with its standard error.

    ``i`` and ``j`` are 1-based.  The bracket of a path is the sum over its
    jumps of ``Delta H^(i) * Delta H^(j)``; its expectation is ``delta_ij T``.
    """
    if len(paths) == 0:
        raise InvalidInputError("no paths")
    if not (1 <= i <= basis.dim and 1 <= j <= basis.dim):
        raise InvalidInputError(f"indices must lie in 1..{basis.dim}")
    counts = np.array([p.sizes.size for p in paths])
    sizes = np.concatenate([p.sizes for p in paths]) if counts.sum() else np.zeros(0)
    owner = np.repeat(np.arange(len(paths)), counts)
    jumps = basis.jump(sizes)
    per_jump = jumps[:, i - 1] * jumps[:, j - 1]
    per_path = np.bincount(owner, weights=per_jump, minlength=len(paths))
    est = float(per_path.mean())
    se = float(per_path.std(ddof=1) / math.sqrt(len(paths))) if len(paths) > 1 else 0.0
    return est, se
