"""Backward induction for the penalised reflected BDSDE on a scenario lattice.

One step ``t_k -> t_{k+1}`` of the scheme, per Brownian scenario and Lévy node:

1. project the step-``k+1`` values onto ``span{1, dH^(1..m)}``: ``y_hat``, ``z``;
2. ``a = y_hat + f(t_k, y_hat, z) dt + g(t_k, y_hat, z) dB_k``;
3. ``Y(t_k+)`` solves ``y = a + n dt (y - xi(t_k+))^-`` (closed form);
4. at the right-jump times of level ``n``: ``Y(t_k) = max(xi(t_k), Y(t_k+))``,
   otherwise ``Y(t_k) = Y(t_k+)``.

The penalty increment ``n dt (Y(t_k+) - xi(t_k+))^-`` is the right-continuous
part of ``K`` over ``(t_k, t_{k+1}]``; the correction at a jump time is
``Delta_+ K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .drivers import DriverPair
from .errors import ConsistencyError, InvalidInputError, NumericalError
from .levy import ScenarioTree
from .regulated import JumpArray, RegulatedPath, right_jump_times

__all__ = [
    "SolutionTriple",
    "KReport",
    "project_Z",
    "implicit_penalty_step",
    "solve_penalized",
    "extract_K",
    "expected_path",
]

log = logging.getLogger(__name__)


def project_Z(next_values, tree: ScenarioTree):
    """Conditional mean and martingale coefficients of per-outcome values.

    ``next_values`` has shape ``(..., n_out)``.  Returns ``(y_hat, z, residual)``
    where ``y_hat = sum_o p_o v_o``, ``z`` is the probability-weighted
    least-squares coefficient of ``v - y_hat`` on ``dH`` (shape ``(..., m)``) and
    ``residual = v - y_hat - z . dH``.
    """
    v = np.asarray(next_values, dtype=float)
    if v.shape[-1] != tree.n_outcomes:
        raise InvalidInputError(f"expected {tree.n_outcomes} outcome values, got {v.shape[-1]}")
    y_hat = v @ tree.probs
    z = (v - y_hat[..., None]) @ tree._proj.T
    residual = v - y_hat[..., None] - z @ tree.dH.T
    return y_hat, z, residual


def implicit_penalty_step(a, xi, n_dt):
    """Unique ``y`` with ``y = a + n_dt * (y - xi)^-``."""
    if np.any(np.asarray(n_dt) < 0):
        raise InvalidInputError("n*dt must be nonnegative")
    a = np.asarray(a, dtype=float)
    return np.where(a >= xi, a, (a + n_dt * xi) / (1.0 + n_dt))


@dataclass(frozen=True)
class SolutionTriple:
    """``(Y, Z, K)`` on a lattice, with everything needed to re-check the scheme.

    Step-indexed lists have entries of shape ``(P, n_k)`` (``Z``: ``(P, n_k, m)``);
    ``Z``, ``dK_star``, ``y_eval``, ``f_vals``, ``g_vals`` cover ``k < N`` and
    refer to the interval ``(t_k, t_{k+1}]``; ``dK_plus`` covers ``k < N``.
    """

    Y: RegulatedPath
    Z: list
    dK_star: list
    dK_plus: list
    y_eval: list  # argument y at which the drivers were evaluated
    f_vals: list
    g_vals: list
    n: float
    jumps: JumpArray
    g_exogenous: bool
    proj_residual: float

    @property
    def N(self) -> int:
        return len(self.Z)

    def Y0(self) -> np.ndarray:
        """``Y(t_0)`` per scenario."""
        return self.Y.v[0][:, 0]

    def K_increment(self, k: int) -> np.ndarray:
        return self.dK_star[k] + self.dK_plus[k]


def solve_penalized(
    tree: ScenarioTree,
    drivers: DriverPair,
    barrier: RegulatedPath,
    n: float,
    g_values: list | None = None,
    jump_level: int | None = None,
) -> SolutionTriple:
    """Solve the penalised equation at level ``n`` on every scenario.

    ``g_values`` (list of ``(P, n_k)`` arrays) replaces ``g`` by an exogenous
    process, as in the outer fixed-point iteration.  ``jump_level`` overrides
    the level used to pick right-jump times (defaults to ``n``; ``n = 0``
    disables both the penalty and the corrections).
    """
    N = tree.N
    dt = tree.dt
    if barrier.N != N:
        raise InvalidInputError("barrier grid does not match the tree")
    if n < 0:
        raise InvalidInputError("penalty level must be nonnegative")
    if n * dt > 1e4:
        log.warning("n*dt = %.3g is very stiff", n * dt)
    level = jump_level if jump_level is not None else (int(np.floor(n)) if n >= 1 else 0)
    jumps = right_jump_times(barrier, level) if level >= 1 else JumpArray(0, ())
    P = tree.n_scenarios
    t = tree.times
    n_dt = n * dt

    v = [None] * (N + 1)
    vp = [None] * (N + 1)
    Z, dKs, dKp, y_eval, f_vals, g_vals = ([None] * N for _ in range(6))
    v[N] = np.broadcast_to(barrier.v[N], (P, tree.n_nodes(N))).astype(float)
    vp[N] = v[N]
    worst_res = 0.0
    for k in range(N - 1, -1, -1):
        y_hat, z, res = project_Z(tree.gather(v[k + 1], k), tree)
        worst_res = max(worst_res, float(np.abs(res).max()))
        fv = np.broadcast_to(drivers.f(t[k], y_hat, z), y_hat.shape)
        if g_values is not None:
            gv = np.broadcast_to(g_values[k], y_hat.shape)
        else:
            gv = np.broadcast_to(drivers.g(t[k], y_hat, z), y_hat.shape)
        a = y_hat + fv * dt + gv * tree.dB[:, k, None]
        if not np.all(np.isfinite(a)):
            bad = np.argwhere(~np.isfinite(a))[0]
            raise NumericalError(f"non-finite driver value at step k={k}, scenario={bad[0]}, node={bad[1]}")
        xi_p = barrier.v_plus[k]
        y_plus = implicit_penalty_step(a, xi_p, n_dt)
        dks = n_dt * np.maximum(xi_p - y_plus, 0.0)
        if k in jumps:
            xi_k = barrier.v[k]
            y_k = np.maximum(xi_k, y_plus)
            dkp = np.maximum(xi_k - y_plus, 0.0)
        else:
            y_k = y_plus
            dkp = np.zeros_like(y_plus)
        v[k], vp[k] = y_k, y_plus
        Z[k], dKs[k], dKp[k] = z, dks, dkp
        y_eval[k], f_vals[k], g_vals[k] = y_hat, np.array(fv), np.array(gv)
    return SolutionTriple(
        Y=RegulatedPath(t, tuple(v), tuple(vp)),
        Z=Z,
        dK_star=dKs,
        dK_plus=dKp,
        y_eval=y_eval,
        f_vals=f_vals,
        g_vals=g_vals,
        n=n,
        jumps=jumps,
        g_exogenous=g_values is not None,
        proj_residual=worst_res,
    )


def expected_path(tree: ScenarioTree, increments: list) -> np.ndarray:
    """``E[sum_{j<k} inc_j]`` per scenario for node-indexed increments; shape ``(P, N+1)``."""
    P = tree.n_scenarios
    out = np.zeros((P, tree.N + 1))
    for k, inc in enumerate(increments):
        out[:, k + 1] = out[:, k] + tree.expectation(np.broadcast_to(inc, (P, tree.n_nodes(k))), k)
    return out


@dataclass(frozen=True)
class KReport:
    dK_star: list
    dK_plus: list
    K_mean: np.ndarray  # (P, N+1), expected K(t_k)
    max_mismatch: float
    min_increment: float
    outcome_spread: float  # disagreement of the residual across outcomes

    @property
    def nondecreasing(self) -> bool:
        return self.min_increment >= -1e-10


def extract_K(solution: SolutionTriple, drivers: DriverPair, tree: ScenarioTree, barrier: RegulatedPath | None = None) -> KReport:
    """Recover ``K`` as the residual of the discrete equation and compare with the record.

    For every node and outcome:
    ``dK = Y(t_k) - Y(t_{k+1}) - f dt - g dB_k + z . dH``; its right-jump part is
    ``Y(t_k) - Y(t_k+)``.  Raises :class:`ConsistencyError` if the recomputation
    differs from the recorded increments by more than ``1e-8``.
    """
    t = tree.times
    dt = tree.dt
    Y = solution.Y
    dks, dkp = [], []
    worst, spread, min_inc = 0.0, 0.0, np.inf
    for k in range(tree.N):
        z = solution.Z[k]
        ye = solution.y_eval[k]
        fv = drivers.f(t[k], ye, z)
        gv = solution.g_vals[k] if solution.g_exogenous else drivers.g(t[k], ye, z)
        nxt = tree.gather(Y.v[k + 1], k)  # (P, n_k, n_out)
        mart = z @ tree.dH.T
        total = Y.v[k][..., None] - nxt - (fv * dt + gv * tree.dB[:, k, None])[..., None] + mart
        plus = Y.v[k] - Y.v_plus[k]
        star = total - plus[..., None]
        star_mean = star @ tree.probs
        spread = max(spread, float(np.abs(star - star_mean[..., None]).max()))
        worst = max(
            worst,
            float(np.abs(star_mean - solution.dK_star[k]).max()),
            float(np.abs(plus - solution.dK_plus[k]).max()),
        )
        min_inc = min(min_inc, float(star.min()), float(plus.min()))
        dks.append(star_mean)
        dkp.append(plus)
    if worst > 1e-8 or spread > 1e-8:
        raise ConsistencyError(f"recomputed K differs from the record by {max(worst, spread):.3g}")
    K_mean = expected_path(tree, [a + b for a, b in zip(dks, dkp)])
    return KReport(dks, dkp, K_mean, worst, min_inc, spread)
