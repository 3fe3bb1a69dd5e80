"""Penalisation sweep, Snell-envelope oracle and the outer fixed-point loop."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .drivers import DriverPair
from .errors import DivergenceError, InvalidInputError, StepSizeError
from .levy import ScenarioTree
from .regulated import JumpArray, RegulatedPath
from .solver import SolutionTriple, project_Z, solve_penalized
from .verify import beta_norms

__all__ = [
    "MertensDecomposition",
    "mertens_decompose",
    "snell_oracle",
    "skorokhod_residual",
    "barrier_violation",
    "sup_node_diff",
    "ConvergenceRow",
    "ConvergenceReport",
    "penalization_sweep",
    "geometric_schedule",
    "PicardResult",
    "picard_outer_loop",
]


@dataclass(frozen=True)
class MertensDecomposition:
    """``V = M - K`` on the lattice.

    ``M0`` is ``M(t_0)`` per scenario; ``dM[k]`` (``(P, n_k, n_out)``) is the
    martingale increment over ``(t_k, t_{k+1}]`` for each outcome.
    """

    M0: np.ndarray
    dM: list
    dK_star: list
    dK_plus: list
    max_martingale_defect: float


def mertens_decompose(V: RegulatedPath, tree: ScenarioTree, drift: list | None = None, tol: float = 1e-10) -> MertensDecomposition:
    """Doob-Meyer-Mertens split of a discrete strong supermartingale.

    ``drift[k]`` (optional, ``(P, n_k)``) is the finite-variation increment
    ``f dt + g dB_k`` over ``(t_k, t_{k+1}]``; then ``V + int f + int g dB`` is
    the supermartingale being decomposed.
    """
    P = tree.n_scenarios
    dKs, dKp, dM = [], [], []
    defect = 0.0
    for k in range(tree.N):
        vk = np.broadcast_to(V.v[k], (P, tree.n_nodes(k)))
        vkp = np.broadcast_to(V.v_plus[k], (P, tree.n_nodes(k)))
        nxt = tree.gather(np.broadcast_to(V.v[k + 1], (P, tree.n_nodes(k + 1))), k)
        cond = nxt @ tree.probs
        d = 0.0 if drift is None else drift[k]
        jump = vk - vkp
        star = vkp - cond - d
        if jump.min() < -tol or star.min() < -tol:
            raise InvalidInputError(
                f"not a supermartingale at step {k}: min right drop {jump.min():.3g}, min drift gap {star.min():.3g}"
            )
        # M_{k+1} - M_k = V_{k+1} - V_k + dK_k + drift_k
        inc = nxt - (vk - jump - star - d)[..., None]
        defect = max(defect, float(np.abs(inc @ tree.probs).max()))
        dKs.append(star)
        dKp.append(jump)
        dM.append(inc)
    if defect > tol:
        raise InvalidInputError(f"martingale part has conditional mean {defect:.3g}")
    M0 = np.broadcast_to(V.v[0], (P, 1))[:, 0].copy()
    return MertensDecomposition(M0, dM, dKs, dKp, defect)


def snell_oracle(tree: ScenarioTree, drivers: DriverPair, barrier: RegulatedPath, scheme: str = "explicit") -> SolutionTriple:
    """Exact reflected solution on the lattice via the Snell envelope.

    Requires ``f = f(t, y)`` and ``g = g(t)``.  Per scenario:
    ``V_N = xi_N``; ``a_k = E[V_{k+1}] + f(t_k, E[V_{k+1}]) dt + g(t_k) dB_k``
    (``scheme="explicit"``, the penalised scheme's convention and hence its
    limit) or ``a_k`` solves ``a = E[V_{k+1}] + f(t_k, a) dt + g(t_k) dB_k``
    (``"implicit"``, scalar fixed point, needs ``L_f dt < 1``);
    ``V(t_k+) = max(xi(t_k+), a_k)``; ``V(t_k) = max(xi(t_k), V(t_k+))``.
    """
    if drivers.f.depends_on_z:
        raise InvalidInputError("oracle needs f independent of z")
    if not drivers.g_exogenous:
        raise InvalidInputError("oracle needs g independent of (y, z)")
    if scheme not in ("implicit", "explicit"):
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    dt = tree.dt
    if scheme == "implicit" and drivers.f.depends_on_y and drivers.f.L * dt >= 1.0:
        raise StepSizeError(f"L_f*dt = {drivers.f.L * dt:.3g} >= 1; increase N")
    P, N, t = tree.n_scenarios, tree.N, tree.times
    m = tree.dim
    v = [None] * (N + 1)
    vp = [None] * (N + 1)
    Z, y_eval, f_vals, g_vals, drift = ([None] * N for _ in range(5))
    v[N] = np.broadcast_to(barrier.v[N], (P, tree.n_nodes(N))).astype(float)
    vp[N] = v[N]
    worst = 0.0
    for k in range(N - 1, -1, -1):
        y_hat, z, res = project_Z(tree.gather(v[k + 1], k), tree)
        worst = max(worst, float(np.abs(res).max()))
        zero_z = np.zeros(y_hat.shape + (m,))
        gv = np.broadcast_to(drivers.g(t[k], y_hat, zero_z), y_hat.shape)
        base = y_hat + gv * tree.dB[:, k, None]
        if scheme == "explicit":
            arg = y_hat
        else:
            # contraction with factor L_f dt < 1
            arg = base.copy()
            for _ in range(1000):
                new = base + drivers.f(t[k], arg, zero_z) * dt
                done = np.max(np.abs(new - arg)) <= 1e-15 * (1.0 + np.max(np.abs(new)))
                arg = new
                if done or not drivers.f.depends_on_y:
                    break
        fv = np.broadcast_to(drivers.f(t[k], arg, zero_z), y_hat.shape)
        a = base + fv * dt
        vp[k] = np.maximum(barrier.v_plus[k], a)
        v[k] = np.maximum(barrier.v[k], vp[k])
        Z[k] = z
        y_eval[k], f_vals[k], g_vals[k] = arg, np.array(fv), np.array(gv)
        drift[k] = fv * dt + gv * tree.dB[:, k, None]
    V = RegulatedPath(t, tuple(v), tuple(vp))
    dec = mertens_decompose(V, tree, drift)
    jumps = tuple(k for k in range(N) if np.any(barrier.right_jump(k) < 0))
    return SolutionTriple(
        Y=V,
        Z=Z,
        dK_star=dec.dK_star,
        dK_plus=dec.dK_plus,
        y_eval=y_eval,
        f_vals=f_vals,
        g_vals=g_vals,
        n=math.inf,
        jumps=JumpArray(0, jumps),
        g_exogenous=True,
        proj_residual=worst,
    )


def skorokhod_residual(sol: SolutionTriple, barrier: RegulatedPath, tree: ScenarioTree) -> float:
    """Discrete minimality defect of ``K``, averaged over scenarios.

    ``sum_k |Y(t_k+) - xi_hat| dK*_k + sum_k |Y(t_k) - xi(t_k)| Delta_+K_k``.
    On ``(t_k, t_{k+1}]`` the left limit of ``Y`` is ``Y(t_k+)`` and the left
    envelope of the barrier is ``xi(t_k+)``.
    """
    P = tree.n_scenarios
    total = np.zeros(P)
    for k in range(tree.N):
        a = np.abs(sol.Y.v_plus[k] - barrier.v_plus[k]) * sol.dK_star[k]
        b = np.abs(sol.Y.v[k] - barrier.v[k]) * sol.dK_plus[k]
        total += tree.expectation(np.broadcast_to(a + b, (P, tree.n_nodes(k))), k)
    return float(total.mean())


def barrier_violation(sol: SolutionTriple, barrier: RegulatedPath) -> float:
    """``max (Y - xi)^-`` over all nodes, grid times and right limits."""
    worst = 0.0
    for k in range(sol.Y.N + 1):
        worst = max(
            worst,
            float(np.max(np.maximum(barrier.v[k] - sol.Y.v[k], 0.0))),
            float(np.max(np.maximum(barrier.v_plus[k] - sol.Y.v_plus[k], 0.0))),
        )
    return worst


def sup_node_diff(a: RegulatedPath, b: RegulatedPath) -> float:
    return max(
        max(float(np.max(np.abs(x - y))) for x, y in zip(a.v, b.v)),
        max(float(np.max(np.abs(x - y))) for x, y in zip(a.v_plus, b.v_plus)),
    )


def min_node_diff(a: RegulatedPath, b: RegulatedPath) -> float:
    """``min (a - b)`` over nodes and both instants."""
    return min(
        min(float(np.min(x - y)) for x, y in zip(a.v, b.v)),
        min(float(np.min(x - y)) for x, y in zip(a.v_plus, b.v_plus)),
    )


def geometric_schedule(start: int, factor: int, count: int) -> list:
    return [int(start * factor**i) for i in range(count)]


@dataclass
class ConvergenceRow:
    n: float
    cauchy_diff: float  # sup-node |Y^n - Y^{next n}|; nan on the last row
    monotone_gap: float  # min (Y^{next n} - Y^n); >= -1e-12 when monotone
    violation: float
    skorokhod: float
    norm_Y: float
    norm_Z: float
    norm_K: float
    active_jumps: int
    dK_plus_mean: float
    oracle_err: float = math.nan


@dataclass
class ConvergenceReport:
    rows: list
    limit: SolutionTriple = field(repr=False)
    activation_level: int | None = None  # first n at which a right-jump correction is active

    COLUMNS = ("n", "cauchy_diff", "violation", "skorokhod", "norm_Y", "norm_Z", "norm_K", "oracle_err")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, c)) for c in self.COLUMNS])

    def as_dict(self) -> dict:
        return {
            "rows": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in self.rows],
            "activation_level": self.activation_level,
            "limit_n": _jsonable(self.limit.n),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def penalization_sweep(
    tree: ScenarioTree,
    drivers: DriverPair,
    barrier: RegulatedPath,
    n_schedule,
    oracle: SolutionTriple | None = None,
    beta: float = 1.0,
    jobs: int = 1,
) -> ConvergenceReport:
    """Solve at every ``n`` of an increasing schedule and tabulate convergence."""
    ns = list(n_schedule)
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidInputError("n_schedule must be nonempty and strictly increasing")

    def run(n):
        return solve_penalized(tree, drivers, barrier, n)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            sols = list(ex.map(run, ns))
    else:
        sols = [run(n) for n in ns]
    rows = []
    activation = None
    for i, (n, s) in enumerate(zip(ns, sols)):
        nxt = sols[i + 1] if i + 1 < len(sols) else None
        norms = beta_norms(s, barrier, drivers, tree, beta)
        if activation is None and len(s.jumps):
            activation = int(n)
        rows.append(
            ConvergenceRow(
                n=n,
                cauchy_diff=sup_node_diff(s.Y, nxt.Y) if nxt else math.nan,
                monotone_gap=min_node_diff(nxt.Y, s.Y) if nxt else math.nan,
                violation=barrier_violation(s, barrier),
                skorokhod=skorokhod_residual(s, barrier, tree),
                norm_Y=norms.sup_Y + norms.int_Y,
                norm_Z=norms.int_Z,
                norm_K=norms.K_T2,
                active_jumps=len(s.jumps),
                dK_plus_mean=float(sum(np.mean(tree.expectation(np.broadcast_to(d, (tree.n_scenarios, tree.n_nodes(k))), k)) for k, d in enumerate(s.dK_plus))),
                oracle_err=sup_node_diff(s.Y, oracle.Y) if oracle is not None else math.nan,
            )
        )
    return ConvergenceReport(rows, sols[-1], activation)


@dataclass(frozen=True)
class PicardResult:
    solution: SolutionTriple
    trace: list  # dicts: iteration, diff, ratio

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r["ratio"] for r in self.trace if r["ratio"] is not None])


def _pair_distance(a: SolutionTriple, b: SolutionTriple, tree: ScenarioTree, beta: float) -> float:
    t = tree.times
    P = tree.n_scenarios
    acc = 0.0
    for k in range(tree.N):
        d = (a.Y.v_plus[k] - b.Y.v_plus[k]) ** 2 + np.sum((a.Z[k] - b.Z[k]) ** 2, axis=-1)
        acc += math.exp(beta * t[k]) * float(np.mean(tree.expectation(np.broadcast_to(d, (P, tree.n_nodes(k))), k)))
    return math.sqrt(acc * tree.dt)


def picard_outer_loop(
    tree: ScenarioTree,
    drivers: DriverPair,
    barrier: RegulatedPath,
    n_fixed: float,
    max_iters: int = 20,
    tol: float = 1e-8,
    beta: float = 1.0,
) -> PicardResult:
    """Fixed point of ``(y, z) -> (Y, Z)`` where ``g`` is frozen at ``(y, z)``.

    Iteration 0 freezes ``g`` at ``(0, 0)``; iteration ``j >= 1`` freezes it at
    the previous solution's evaluation points and records the weighted
    ``L^2`` distance to the previous iterate.  Stops once that distance is
    below ``tol``.
    """
    if not (0 < drivers.g.alpha < 0.5):
        raise InvalidInputError("g.alpha must lie in (0, 1/2)")
    t = tree.times
    m = tree.dim
    P = tree.n_scenarios

    def frozen_g(prev):
        out = []
        for k in range(tree.N):
            if prev is None:
                shape = (P, tree.n_nodes(k))
                out.append(np.broadcast_to(drivers.g(t[k], np.zeros(shape), np.zeros(shape + (m,))), shape))
            else:
                out.append(drivers.g(t[k], prev.y_eval[k], prev.Z[k]))
        return out

    sol = solve_penalized(tree, drivers, barrier, n_fixed, g_values=frozen_g(None))
    trace = []
    prev_diff = None
    for it in range(1, max_iters + 1):
        new = solve_penalized(tree, drivers, barrier, n_fixed, g_values=frozen_g(sol))
        diff = _pair_distance(new, sol, tree, beta)
        ratio = diff / prev_diff if prev_diff not in (None, 0.0) else None
        trace.append({"iteration": it, "diff": diff, "ratio": ratio})
        sol, prev_diff = new, diff
        if diff < tol:
            return PicardResult(sol, trace)
    raise DivergenceError(f"no convergence after {max_iters} iterations (last diff {prev_diff:.3g})", trace)
