"""Checks that mirror the structural results behind the reflected equation.

* the Doléans-Dade exponential of ``int p dt + sum_k int zeta^k dH^(k)`` and the
  comparison of two solutions;
* the energy identity (Itô's formula for ``y**2`` on regulated paths);
* exactness of the martingale representation on the lattice;
* exponentially weighted (``beta``) norms used in the a priori bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drivers import DriverPair
from .errors import AssumptionViolation, InvalidInputError
from .levy import ScenarioTree
from .regulated import RegulatedPath
from .solver import SolutionTriple, project_Z

__all__ = [
    "GammaResult",
    "doleans_gamma",
    "ComparisonInstance",
    "ComparisonReport",
    "comparison_instance",
    "comparison_check",
    "path_energy_residual",
    "energy_identity_residual",
    "martingale_representation",
    "representation_residual",
    "BetaNorms",
    "beta_norms",
]


@dataclass(frozen=True)
class GammaResult:
    value: float  # step recursion, taken as ground truth on the lattice
    closed_form: float
    factors: np.ndarray


def doleans_gamma(p, zeta, dH, s_index: int, t_index: int, dt: float) -> GammaResult:
    """``Gamma_{s,t}`` for ``X = int p dt + sum_k int zeta^k dH^(k)`` along one path.

    ``p`` has shape ``(N,)``, ``zeta`` and ``dH`` shape ``(N, m)`` (row ``j`` is the
    step ``(t_j, t_{j+1}]``).  The recursion is
    ``Gamma_{j+1} = Gamma_j (1 + p_j dt + zeta_j . dH_j)``; the closed form is
    ``exp(X_t - X_s) prod (1 + zeta . dH) exp(-zeta . dH)``.

    Raises :class:`AssumptionViolation` when ``1 + zeta . dH <= 0`` at some step.
    """
    p = np.asarray(p, dtype=float)
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    dH = np.atleast_2d(np.asarray(dH, dtype=float))
    if not 0 <= s_index <= t_index <= p.shape[0]:
        raise InvalidInputError("need 0 <= s <= t <= N")
    sl = slice(s_index, t_index)
    jump = np.sum(zeta[sl] * dH[sl], axis=-1)
    bad = np.flatnonzero(1.0 + jump <= 0.0)
    if bad.size:
        j = s_index + int(bad[0])
        raise AssumptionViolation(f"1 + sum_k zeta^k dH^(k) = {1 + jump[bad[0]]:.4g} <= 0 at step {j}")
    factors = 1.0 + p[sl] * dt + jump
    if np.any(factors <= 0.0):
        j = s_index + int(np.flatnonzero(factors <= 0.0)[0])
        raise AssumptionViolation(f"recursion factor nonpositive at step {j}")
    value = float(np.prod(factors))
    X = float(np.sum(p[sl]) * dt + np.sum(jump))
    closed = math.exp(X) * float(np.prod((1.0 + jump) * np.exp(-jump)))
    return GammaResult(value, closed, factors)


@dataclass(frozen=True)
class ComparisonInstance:
    """Two solutions with ordered data and the linearisation of their difference.

    Per step ``k`` (entries ``(P, n_k)``; ``zeta``: ``(P, n_k, m)``):
    ``f1(y1, z1) - f2(y2, z2) = p (y1 - y2) + zeta . (z1 - z2) + u``,
    evaluated where the scheme evaluates the drivers; ``p_g``, ``zeta_g``,
    ``u_g`` are the same quantities for ``g1, g2``.
    """

    tree: ScenarioTree
    sol1: SolutionTriple
    sol2: SolutionTriple
    p: list
    zeta: list
    u: list
    p_g: list
    zeta_g: list
    u_g: list
    L_f: float


def _linearise(fn, t, y1, z1, y2, z2):
    """Finite differences of ``fn`` along ``(y1, z1) -> (y2, z1) -> ... -> (y2, z2)``.

    Coordinates of ``z`` are switched one at a time; a zero denominator gives a
    zero coefficient.
    """
    dy = y1 - y2
    num = fn(t, y1, z1) - fn(t, y2, z1)
    p = np.where(dy != 0.0, num / np.where(dy != 0.0, dy, 1.0), 0.0)
    zeta = np.zeros_like(z1)
    prev = z1.copy()
    for j in range(z1.shape[-1]):
        cur = prev.copy()
        cur[..., j] = z2[..., j]
        dz = z1[..., j] - z2[..., j]
        num = fn(t, y2, prev) - fn(t, y2, cur)
        zeta[..., j] = np.where(dz != 0.0, num / np.where(dz != 0.0, dz, 1.0), 0.0)
        prev = cur
    return p, zeta


def comparison_instance(tree: ScenarioTree, sol1: SolutionTriple, sol2: SolutionTriple, drivers1: DriverPair, drivers2: DriverPair) -> ComparisonInstance:
    """Finite-difference coefficients along the chain ``z~^(0) = z1 -> ... -> z~^(m) = z2``."""
    t = tree.times
    out = {key: [] for key in ("p", "zeta", "u", "p_g", "zeta_g", "u_g")}
    for k in range(tree.N):
        y1, y2 = sol1.y_eval[k], sol2.y_eval[k]
        z1, z2 = sol1.Z[k], sol2.Z[k]
        p, zeta = _linearise(drivers1.f, t[k], y1, z1, y2, z2)
        p_g, zeta_g = _linearise(drivers1.g, t[k], y1, z1, y2, z2)
        out["p"].append(p)
        out["zeta"].append(zeta)
        out["u"].append(drivers1.f(t[k], y2, z2) - drivers2.f(t[k], y2, z2))
        out["p_g"].append(np.broadcast_to(p_g, y1.shape))
        out["zeta_g"].append(zeta_g)
        out["u_g"].append(np.broadcast_to(drivers1.g(t[k], y2, z2) - drivers2.g(t[k], y2, z2), y1.shape))
    return ComparisonInstance(tree, sol1, sol2, L_f=drivers1.f.L, **out)


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    max_violation: float
    worst_node: tuple | None  # (k, "t" or "t+", scenario, node)
    gamma_positive: bool  # 1 + sum zeta dH > 0 at every node and outcome
    lattice_positive: bool  # exact one-step weights of the scheme are positive
    min_gamma_factor: float
    min_lattice_weight: float
    source_nonpositive: bool
    classification: str = field(default="ok")


def comparison_check(instance: ComparisonInstance, tol: float = 1e-12) -> ComparisonReport:
    """Check ``Y1 <= Y2`` node-wise and classify any failure.

    Two positivity conditions are reported: the continuous-time one,
    ``1 + sum_k zeta^k dH^(k) > 0`` per outcome, and the lattice one,
    ``1 + p dt + p_g dB + (zeta dt + zeta_g dB)^T G^{-1} dH_o >= 0``
    (``G`` the one-step Gram matrix), which makes the scheme's one-step map
    monotone.  The source ``u dt + u_g dB`` must be nonpositive.
    """
    tree = instance.tree
    dt = tree.dt
    ginv_dH = np.linalg.solve(tree.gram, tree.dH.T)  # (m, n_out)
    min_g, min_w = np.inf, np.inf
    u_ok = True
    for k in range(tree.N):
        zeta = instance.zeta[k]
        jump = zeta @ tree.dH.T  # (P, n, n_out)
        min_g = min(min_g, float((1.0 + jump).min()))
        dB = tree.dB[:, k, None]
        lin = instance.p[k] * dt + instance.p_g[k] * dB
        coef = zeta * dt + instance.zeta_g[k] * dB[..., None]
        w = 1.0 + lin[..., None] + coef @ ginv_dH
        min_w = min(min_w, float(w.min()))
        src = instance.u[k] * dt + instance.u_g[k] * dB
        u_ok = u_ok and bool(np.all(src <= tol))
    worst, where = -np.inf, None
    Y1, Y2 = instance.sol1.Y, instance.sol2.Y
    for k in range(tree.N + 1):
        for tag, a, b in (("t", Y1.v[k], Y2.v[k]), ("t+", Y1.v_plus[k], Y2.v_plus[k])):
            d = a - b
            i = np.unravel_index(int(np.argmax(d)), d.shape)
            if d[i] > worst:
                worst, where = float(d[i]), (k, tag) + tuple(int(x) for x in i)
    holds = worst <= tol
    g_pos, l_pos = min_g > 0.0, min_w >= 0.0
    if holds:
        cls = "ok"
    elif not l_pos or not g_pos:
        cls = "positivity-violated"
    elif not u_ok:
        cls = "driver-order-violated"
    else:
        cls = "counterexample"
    return ComparisonReport(holds, max(worst, 0.0), where if not holds else None, g_pos, l_pos, min_g, min_w, u_ok, cls)


def path_energy_residual(path: RegulatedPath) -> float:
    """``|v_N|^2 - |v_0|^2`` against the sum of left- and right-jump terms on one path.

    Each right jump contributes ``2 v_k d + d^2`` (``d = Delta_+ v``) and each
    step ``2 v_{k+} e + e^2`` (``e = v_{k+1} - v_{k+}``).
    """
    v = np.array([np.asarray(a, dtype=float) for a in path.v])
    vp = np.array([np.asarray(a, dtype=float) for a in path.v_plus])
    d = vp[:-1] - v[:-1]
    e = v[1:] - vp[:-1]
    rhs = np.sum(2 * v[:-1] * d + d * d, axis=0) + np.sum(2 * vp[:-1] * e + e * e, axis=0)
    lhs = v[-1] ** 2 - v[0] ** 2
    return float(np.max(np.abs(lhs - rhs)))


def energy_identity_residual(sol: SolutionTriple, drivers: DriverPair, tree: ScenarioTree) -> float:
    """Worst path mismatch of the discrete Itô identity for ``Y**2``.

    Increments are rebuilt from the recorded scheme quantities:
    ``Delta_+ Y = -Delta_+ K`` at ``t_k`` and
    ``Y(t_{k+1}) - Y(t_k+) = -f dt - g dB - dK* + z . dH_o`` over the step.
    Local mismatches are summed along every lattice path (forward max/min
    recursion) and the largest absolute total is returned.
    """
    t = tree.times
    dt = tree.dt
    Y = sol.Y
    P = tree.n_scenarios
    hi = np.zeros((P, 1))
    lo = np.zeros((P, 1))
    for k in range(tree.N):
        z = sol.Z[k]
        fv = drivers.f(t[k], sol.y_eval[k], z)
        gv = sol.g_vals[k] if sol.g_exogenous else drivers.g(t[k], sol.y_eval[k], z)
        d = -sol.dK_plus[k]
        jump_mis = (Y.v_plus[k] ** 2 - Y.v[k] ** 2) - (2 * Y.v[k] * d + d * d)
        e = (-(fv * dt + gv * tree.dB[:, k, None]) - sol.dK_star[k])[..., None] + z @ tree.dH.T
        nxt = tree.gather(Y.v[k + 1], k)
        yp = Y.v_plus[k][..., None]
        step_mis = (nxt**2 - yp**2) - (2 * yp * e + e * e)
        local = jump_mis[..., None] + step_mis  # (P, n_k, n_out)
        n_next = tree.n_nodes(k + 1)
        new_hi = np.full((P, n_next), -np.inf)
        new_lo = np.full((P, n_next), np.inf)
        ch = tree.children[k]
        cand_hi = hi[..., None] + local
        cand_lo = lo[..., None] + local
        for o in range(tree.n_outcomes):
            idx = ch[:, o]  # injective for a fixed outcome
            new_hi[:, idx] = np.maximum(new_hi[:, idx], cand_hi[..., o])
            new_lo[:, idx] = np.minimum(new_lo[:, idx], cand_lo[..., o])
        hi, lo = new_hi, new_lo
    return float(max(np.abs(hi).max(), np.abs(lo).max()))


def martingale_representation(terminal, tree: ScenarioTree):
    """Backward projection of a terminal variable: ``(mean, Z, max residual)``.

    ``terminal`` is indexed by the leaves at step ``N`` (optionally with a
    leading scenario axis).  ``Z[k]`` has shape ``(..., n_k, m)``.
    """
    vals = np.asarray(terminal, dtype=float)
    if vals.shape[-1] != tree.n_nodes(tree.N):
        raise InvalidInputError("terminal must have one value per leaf")
    Z = [None] * tree.N
    worst = 0.0
    for k in range(tree.N - 1, -1, -1):
        vals, z, res = project_Z(tree.gather(vals, k), tree)
        Z[k] = z
        worst = max(worst, float(np.abs(res).max()))
    return vals[..., 0], Z, worst


def representation_residual(terminal, tree: ScenarioTree) -> float:
    """Largest node residual of the projection onto ``{1, dH^(1..m)}``."""
    return martingale_representation(terminal, tree)[2]


@dataclass(frozen=True)
class BetaNorms:
    beta: float
    sup_Y: float  # max_k E e^{beta t_k} |Y|^2 over t_k and t_k+
    int_Y: float  # E sum e^{beta t_k} |Y(t_k+)|^2 dt
    int_Z: float  # E sum e^{beta t_k} ||Z_k||^2 dt
    K_T2: float  # E |K_T|^2
    data_sup_xi: float  # max_k E e^{2 beta t_k} |xi|^2
    data_f0: float  # E sum e^{beta t_k} |f(t_k, 0, 0)|^2 dt
    data_g0: float  # E sum e^{beta t_k} |g(t_k, 0, 0)|^2 dt

    @property
    def solution(self) -> float:
        return self.sup_Y + self.int_Y + self.int_Z + self.K_T2

    @property
    def data(self) -> float:
        return self.data_sup_xi + self.data_f0 + self.data_g0

    @property
    def ratio(self) -> float:
        return self.solution / self.data if self.data > 0 else (0.0 if self.solution == 0 else math.inf)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(solution=self.solution, data=self.data)
        return d


def _mean(tree, arr, k):
    P = tree.n_scenarios
    return float(np.mean(tree.expectation(np.broadcast_to(arr, (P, tree.n_nodes(k))), k)))


def second_moment_of_sum(tree: ScenarioTree, increments: list) -> float:
    """``E |sum_k inc_k|^2`` along lattice paths, averaged over scenarios."""
    P = tree.n_scenarios
    mass = np.broadcast_to(tree.node_prob[0], (P, 1)).copy()
    s1 = np.zeros((P, 1))
    s2 = np.zeros((P, 1))
    for k, inc in enumerate(increments):
        inc = np.broadcast_to(inc, mass.shape)
        n_next = tree.n_nodes(k + 1)
        m_new, s1_new, s2_new = (np.zeros((P, n_next)) for _ in range(3))
        a1 = s1 + mass * inc
        a2 = s2 + 2 * s1 * inc + mass * inc * inc
        for o, po in enumerate(tree.probs):
            # the child map of a single outcome is injective
            idx = tree.children[k][:, o]
            m_new[:, idx] += po * mass
            s1_new[:, idx] += po * a1
            s2_new[:, idx] += po * a2
        mass, s1, s2 = m_new, s1_new, s2_new
    return float(np.mean(s2.sum(axis=1)))


def beta_norms(sol: SolutionTriple, barrier: RegulatedPath, drivers: DriverPair, tree: ScenarioTree, beta: float = 1.0) -> BetaNorms:
    """All components of the weighted norms of ``(Y, Z, K)`` and of the data.

    The ``ess sup`` over stopping times is replaced by the largest, over grid
    instants ``t_k`` and ``t_k+``, of the expected weighted square.
    """
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    t = tree.times
    dt = tree.dt
    N = tree.N
    w = np.exp(beta * t)
    Y = sol.Y
    sup_Y = max(_mean(tree, w[k] * np.maximum(Y.v[k] ** 2, Y.v_plus[k] ** 2), k) for k in range(N + 1))
    int_Y = sum(_mean(tree, w[k] * Y.v_plus[k] ** 2, k) for k in range(N)) * dt
    int_Z = sum(_mean(tree, w[k] * np.sum(sol.Z[k] ** 2, axis=-1), k) for k in range(N)) * dt
    K_T2 = second_moment_of_sum(tree, [sol.dK_star[k] + sol.dK_plus[k] for k in range(N)])
    w2 = np.exp(2 * beta * t)
    xi_sup = max(
        _mean(tree, w2[k] * np.maximum(np.asarray(barrier.v[k]) ** 2, np.asarray(barrier.v_plus[k]) ** 2), k)
        for k in range(N + 1)
    )
    m = tree.dim
    f0 = g0 = 0.0
    for k in range(N):
        shape = (tree.n_scenarios, tree.n_nodes(k))
        zero_y, zero_z = np.zeros(shape), np.zeros(shape + (m,))
        f0 += _mean(tree, w[k] * drivers.f(t[k], zero_y, zero_z) ** 2, k)
        gk = sol.g_vals[k] if sol.g_exogenous else drivers.g(t[k], zero_y, zero_z)
        g0 += _mean(tree, w[k] * np.asarray(gk) ** 2, k)
    return BetaNorms(beta, sup_Y, int_Y, int_Z, K_T2, xi_sup, f0 * dt, g0 * dt)
