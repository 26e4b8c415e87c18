"""Fixed-point solution of the frictional contact problem.

The outer loop freezes the contact pressure and friction bounds at the
current iterate and calls an inner solver for the resulting convex
constrained problem (given friction thresholds, the inner problem is a
Tresca-type one). Convergence of the outer loop is a contraction
property; when friction coefficients are too large the map stops being
contractive, and the solver reports divergence instead of a solution.

Two inner methods:

* ``projected-sor``: cyclic exact minimization over single dofs and
  two-dof interface blocks. Handles the nonsmooth slip terms by exact
  soft-thresholding and the nonpenetration constraints by exact pair
  projection; no regularization anywhere.
* ``semismooth``: replaces |t| by its Huber smoothing (quadratic inside
  a band of width eps) and solves the smoothed constrained problem by a
  primal-dual active-set loop around Newton steps with exact piecewise
  line search. Much faster on fine meshes; accuracy limited by eps.

A nonlinear material is handled by a secant loop around either method:
because P1 strain is constant per triangle, the secant stiffness
reproduces the nonlinear stress exactly at the state it is built from.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .assembly import (
    DisplacementField,
    VIProblem,
    friction_bound_data,
    v_norm,
)

INNER_METHODS = ("projected-sor", "semismooth")

# block kinds for the cyclic inner sweep
_PLAIN = 0
_SHRINK = 1
_XPAIR = 2
_YPAIR = 3


class InnerSolveError(RuntimeError):
    """Inner solver failed to reach its tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    outer_tol: float = 1e-8
    outer_max_iters: int = 60
    inner_tol: float = 1e-10
    inner_max_iters: int = 20_000
    inner_method: str = "projected-sor"
    regularization_eps: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.outer_max_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.inner_method not in INNER_METHODS:
            raise ValueError(
                f"inner_method must be one of {INNER_METHODS}, got {self.inner_method!r}"
            )
        if self.regularization_eps < 0:
            raise ValueError("regularization_eps must be >= 0")


@dataclass
class SolverReport:
    converged: bool
    outer_iters: int
    diff_norms: list[float]
    contraction_ratios: list[float]
    inner_iters: list[int]
    kkt: object | None = None
    wall_time: float = 0.0
    diagnostic: str = ""

    def signature(self) -> tuple:
        """Deterministic content of the report; excludes wall time."""
        return (
            self.converged,
            self.outer_iters,
            tuple(self.diff_norms),
            tuple(self.contraction_ratios),
            tuple(self.inner_iters),
            self.diagnostic,
        )


class InnerProblem:
    """Convex problem with friction bounds frozen at a reference state.

    Minimize 0.5 u^T K u - f_eff^T u + sum(w_T |slip terms|) subject to
    the nonpenetration constraints, where f_eff folds the frozen contact
    pressure into the load and w_T are frozen tangential thresholds.
    """

    def __init__(self, problem: VIProblem, p: DisplacementField,
                 matrix: sp.csr_matrix | None = None):
        self.problem = problem
        self.matrix = matrix if matrix is not None else problem.a_matrix
        mesh = problem.mesh
        dirichlet = set(problem.dofmap.dirichlet_dofs.tolist())

        pressure, fnd_bound, iface_bounds = friction_bound_data(problem, p)
        f_eff = problem.load.copy()
        y_dofs = 2 * problem.foundation_nodes + 1
        f_eff[y_dofs] += problem.foundation_weights * pressure
        self.f_eff = f_eff
        self.pressure = pressure

        fnd_dofs, fnd_w = [], []
        for node, w, g in zip(
            problem.foundation_nodes, problem.foundation_weights, fnd_bound
        ):
            d = 2 * int(node)
            if d not in dirichlet:
                fnd_dofs.append(d)
                fnd_w.append(w * g)
        self.fnd_dofs = np.array(fnd_dofs, dtype=np.int64)
        self.fnd_weights = np.array(fnd_w)

        xp, xw, yp = [], [], []
        for i, pairs in enumerate(mesh.interface_pairs):
            weights = problem.interface_weights[i]
            bounds = iface_bounds[i]
            for (up, lo), w, g in zip(pairs, weights, bounds):
                ux, uy = 2 * int(up), 2 * int(up) + 1
                lx, ly = 2 * int(lo), 2 * int(lo) + 1
                fixed = {ux, uy, lx, ly} & dirichlet
                if fixed:
                    if len(fixed) != 4:
                        raise ValueError(
                            "interface pair mixes fixed and free dofs"
                        )
                    continue
                xp.append((ux, lx))
                xw.append(w * g)
                yp.append((uy, ly))
        self.xpair_dofs = np.array(xp, dtype=np.int64).reshape(-1, 2)
        self.xpair_weights = np.array(xw)
        self.ypair_dofs = np.array(yp, dtype=np.int64).reshape(-1, 2)

        self._blocks = self._build_blocks()

    def _build_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n = self.problem.dofmap.n_dofs
        kind = np.full(n, -1, dtype=np.int8)
        partner = np.full(n, -1, dtype=np.int64)
        weight = np.zeros(n)
        kind[self.problem.dofmap.free_dofs] = _PLAIN
        for d, w in zip(self.fnd_dofs, self.fnd_weights):
            kind[d] = _SHRINK
            weight[d] = w
        for (a, b), w in zip(self.xpair_dofs, self.xpair_weights):
            kind[a] = _XPAIR
            partner[a], partner[b] = b, a
            kind[b] = -2  # handled with its partner
            weight[a] = w
        for a, b in self.ypair_dofs:
            kind[a] = _YPAIR
            partner[a], partner[b] = b, a
            kind[b] = -2
        b_kind, b_d1, b_d2, b_w = [], [], [], []
        for d in range(n):
            if kind[d] < 0:
                continue
            b_kind.append(kind[d])
            b_d1.append(d)
            b_d2.append(partner[d])
            b_w.append(weight[d])
        return (
            np.array(b_kind, dtype=np.int8),
            np.array(b_d1, dtype=np.int64),
            np.array(b_d2, dtype=np.int64),
            np.array(b_w),
        )

    def nonsmooth(self, values: np.ndarray) -> float:
        """Frozen-bound slip terms of the objective (the |.| parts)."""
        total = float((self.fnd_weights * np.abs(values[self.fnd_dofs])).sum())
        if len(self.xpair_dofs):
            slip = values[self.xpair_dofs[:, 0]] - values[self.xpair_dofs[:, 1]]
            total += float((self.xpair_weights * np.abs(slip)).sum())
        return total

    def objective(self, values: np.ndarray) -> float:
        """Inner energy (exact for a linear material)."""
        quad = 0.5 * float(values @ (self.matrix @ values))
        return quad - float(self.f_eff @ values) + self.nonsmooth(values)

    def max_violation(self, values: np.ndarray) -> float:
        if not len(self.ypair_dofs):
            return 0.0
        gap = values[self.ypair_dofs[:, 1]] - values[self.ypair_dofs[:, 0]]
        return float(max(0.0, gap.max()))

    def sweep(self, values: np.ndarray, n_sweeps: int, tol: float) -> tuple[int, bool]:
        """Run cyclic block minimization in place; returns (sweeps, converged)."""
        mat = self.matrix
        diag = mat.diagonal()
        free = self.problem.dofmap.free_dofs
        if (diag[free] <= 0).any():
            raise InnerSolveError("stiffness not coercive: nonpositive diagonal")
        b_kind, b_d1, b_d2, b_w = self._blocks
        sweeps, converged = _sor_kernel(
            mat.indptr, mat.indices, mat.data, diag, self.f_eff, values,
            b_kind, b_d1, b_d2, b_w, tol, n_sweeps,
        )
        return int(sweeps), bool(converged)


@njit(cache=True)
def _sor_kernel(indptr, indices, data, diag, f_eff, u,
                b_kind, b_d1, b_d2, b_w, tol, max_sweeps):
    n_blocks = b_kind.size
    prev_res = -1.0
    res = 0.0
    for sweep in range(max_sweeps):
        res2 = 0.0
        unorm2 = 0.0
        for b in range(n_blocks):
            kind = b_kind[b]
            d1 = b_d1[b]
            z1 = f_eff[d1]
            for idx in range(indptr[d1], indptr[d1 + 1]):
                j = indices[idx]
                if j != d1:
                    z1 -= data[idx] * u[j]
            k1 = diag[d1]
            if kind == 0:
                new1 = z1 / k1
            elif kind == 1:
                s = b_w[b]
                mag = abs(z1) - s
                if mag <= 0.0:
                    new1 = 0.0
                elif z1 > 0.0:
                    new1 = mag / k1
                else:
                    new1 = -mag / k1
            else:
                d2 = b_d2[b]
                z2 = f_eff[d2]
                for idx in range(indptr[d2], indptr[d2 + 1]):
                    j = indices[idx]
                    if j != d2:
                        z2 -= data[idx] * u[j]
                k2 = diag[d2]
                if kind == 3:
                    # nonpenetration pair: d1 above, d2 below, u[d2] <= u[d1]
                    new1 = z1 / k1
                    new2 = z2 / k2
                    if new2 > new1:
                        new1 = (z1 + z2) / (k1 + k2)
                        new2 = new1
                else:
                    # slip pair with threshold s on |u[d1] - u[d2]|
                    s = b_w[b]
                    gap0 = z1 / k1 - z2 / k2
                    limit = s * (1.0 / k1 + 1.0 / k2)
                    if abs(gap0) <= limit:
                        new1 = (z1 + z2) / (k1 + k2)
                        new2 = new1
                    elif gap0 > 0.0:
                        new1 = (z1 - s) / k1
                        new2 = (z2 + s) / k2
                    else:
                        new1 = (z1 + s) / k1
                        new2 = (z2 - s) / k2
                du2 = new2 - u[d2]
                res2 += k2 * du2 * du2
                unorm2 += k2 * new2 * new2
                u[d2] = new2
            du1 = new1 - u[d1]
            res2 += k1 * du1 * du1
            unorm2 += k1 * new1 * new1
            u[d1] = new1
        res = np.sqrt(res2)
        if res == 0.0:
            return sweep + 1, True
        scale = np.sqrt(unorm2)
        if scale <= 0.0:
            scale = 1e-300
        if prev_res > 0.0:
            rho = res / prev_res
            if rho < 0.1:
                rho = 0.1
            elif rho > 0.9995:
                rho = 0.9995
            err_est = res * rho / (1.0 - rho)
        else:
            err_est = res * 1e3
        if err_est <= tol * scale:
            return sweep + 1, True
        prev_res = res
    return max_sweeps, False


def _phi(t: np.ndarray, eps: float) -> np.ndarray:
    # Huber smoothing of |t|: quadratic inside |t| <= eps, affine outside.
    # Piecewise-quadratic energies let Newton act as an exact active-set
    # method instead of crawling into a sqrt-smoothed kink.
    a = np.abs(t)
    return np.where(a <= eps, t * t / (2.0 * eps), a - 0.5 * eps)


def _phi_d1(t: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(t / eps, -1.0, 1.0)


def _phi_d2(t: np.ndarray, eps: float) -> np.ndarray:
    return np.where(np.abs(t) <= eps, 1.0 / eps, 0.0)


class _SemismoothSolver:
    """Primal-dual active set around damped Newton on the smoothed energy."""

    def __init__(self, inner: InnerProblem, cfg: SolverConfig):
        if cfg.regularization_eps <= 0:
            raise ValueError("semismooth method requires regularization_eps > 0")
        self.inner = inner
        self.eps = cfg.regularization_eps
        self.cfg = cfg
        self.n = inner.problem.dofmap.n_dofs
        diag = inner.matrix.diagonal()
        free = inner.problem.dofmap.free_dofs
        if (diag[free] <= 0).any():
            raise InnerSolveError("stiffness not coercive: nonpositive diagonal")
        self.penalty = float(diag[free].mean())
        self.grad_scale = max(float(np.linalg.norm(inner.f_eff)), 1e-300)
        # Newton matrices are fixed by the pair active set and the
        # friction curvature values, so factorizations are reusable;
        # the cache rides on the stiffness object and thereby survives
        # across outer iterations that share it
        cache = getattr(inner.matrix, "_lu_cache", None)
        if cache is None:
            cache = {}
            inner.matrix._lu_cache = cache
        self._lu_cache = cache

    def _factor(self, u: np.ndarray, eps: float, active: np.ndarray, z):
        inner = self.inner
        if len(inner.fnd_dofs):
            fnd_h = inner.fnd_weights * _phi_d2(u[inner.fnd_dofs], eps)
        else:
            fnd_h = np.zeros(0)
        if len(inner.xpair_dofs):
            slip = u[inner.xpair_dofs[:, 0]] - u[inner.xpair_dofs[:, 1]]
            xp_h = inner.xpair_weights * _phi_d2(slip, eps)
        else:
            xp_h = np.zeros(0)
        key = b"".join([active.tobytes(), fnd_h.tobytes(), xp_h.tobytes()])
        lu = self._lu_cache.get(key)
        if lu is None:
            rows, cols, vals = [], [], []
            if len(fnd_h):
                rows.append(inner.fnd_dofs)
                cols.append(inner.fnd_dofs)
                vals.append(fnd_h)
            if len(xp_h):
                a = inner.xpair_dofs[:, 0]
                b = inner.xpair_dofs[:, 1]
                rows += [a, b, a, b]
                cols += [a, b, b, a]
                vals += [xp_h, xp_h, -xp_h, -xp_h]
            h = inner.matrix
            if rows:
                h = h + sp.csr_matrix(
                    (np.concatenate(vals),
                     (np.concatenate(rows), np.concatenate(cols))),
                    shape=(self.n, self.n),
                )
            lu = spla.splu((z.T @ h @ z).tocsc())
            if len(self._lu_cache) >= 64:
                self._lu_cache.clear()
            self._lu_cache[key] = lu
        return lu

    def smooth_objective(self, u: np.ndarray, eps: float) -> float:
        inner = self.inner
        val = 0.5 * float(u @ (inner.matrix @ u)) - float(inner.f_eff @ u)
        val += float((inner.fnd_weights * _phi(u[inner.fnd_dofs], eps)).sum())
        if len(inner.xpair_dofs):
            slip = u[inner.xpair_dofs[:, 0]] - u[inner.xpair_dofs[:, 1]]
            val += float((inner.xpair_weights * _phi(slip, eps)).sum())
        return val

    def smooth_gradient(self, u: np.ndarray, eps: float) -> np.ndarray:
        inner = self.inner
        g = inner.matrix @ u - inner.f_eff
        np.add.at(g, inner.fnd_dofs, inner.fnd_weights * _phi_d1(u[inner.fnd_dofs], eps))
        if len(inner.xpair_dofs):
            a = inner.xpair_dofs[:, 0]
            b = inner.xpair_dofs[:, 1]
            gp = inner.xpair_weights * _phi_d1(u[a] - u[b], eps)
            np.add.at(g, a, gp)
            np.add.at(g, b, -gp)
        return g

    def _reduction(self, active: np.ndarray) -> sp.csr_matrix:
        """Columns = free dof groups; active pairs share one group."""
        inner = self.inner
        group = np.full(self.n, -1, dtype=np.int64)
        merged_to = np.arange(self.n)
        for (up, lo), on in zip(inner.ypair_dofs, active):
            if on:
                merged_to[lo] = up
        next_col = 0
        free = inner.problem.dofmap.free_dofs
        for d in free:
            root = merged_to[d]
            if group[root] < 0:
                group[root] = next_col
                next_col += 1
            group[d] = group[root]
        rows = free
        cols = group[free]
        vals = np.ones(len(free))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, next_col))

    def _line_minimize(self, u: np.ndarray, step: np.ndarray, eps: float) -> float:
        """Exact minimizer of t -> F(u + t step) for t >= 0.

        The restriction is convex piecewise quadratic: the derivative is
        piecewise linear with breakpoints where a kink dof crosses the
        +-eps band, so the root is found by scanning segments. Exact
        search is what keeps Newton from zigzagging across the band on
        dofs whose slip should vanish.
        """
        inner = self.inner
        a = float(step @ (inner.matrix @ step))
        if a <= 0.0:
            return 0.0
        b = float(step @ (inner.matrix @ u - inner.f_eff))
        s0_parts, ds_parts, w_parts = [], [], []
        if len(inner.fnd_dofs):
            s0_parts.append(u[inner.fnd_dofs])
            ds_parts.append(step[inner.fnd_dofs])
            w_parts.append(inner.fnd_weights)
        if len(inner.xpair_dofs):
            pa = inner.xpair_dofs[:, 0]
            pb = inner.xpair_dofs[:, 1]
            s0_parts.append(u[pa] - u[pb])
            ds_parts.append(step[pa] - step[pb])
            w_parts.append(inner.xpair_weights)
        if not s0_parts:
            return max(0.0, -b / a)
        s0 = np.concatenate(s0_parts)
        ds = np.concatenate(ds_parts)
        w = np.concatenate(w_parts)

        def slope(t: float) -> float:
            s = s0 + t * ds
            return a * t + b + float((w * np.clip(s / eps, -1.0, 1.0) * ds).sum())

        if slope(0.0) >= 0.0:
            return 0.0
        moving = ds != 0.0
        cuts = np.concatenate([
            (-eps - s0[moving]) / ds[moving],
            (eps - s0[moving]) / ds[moving],
        ])
        cuts = np.unique(cuts[cuts > 0.0])
        t_lo, d_lo = 0.0, slope(0.0)
        for t_hi in cuts:
            d_hi = slope(t_hi)
            if d_hi >= 0.0:
                if d_hi == d_lo:
                    return t_hi
                return t_lo + (t_lo - t_hi) * d_lo / (d_hi - d_lo)
            t_lo, d_lo = t_hi, d_hi
        # beyond the last breakpoint the derivative is a*t + const
        return t_lo - d_lo / a

    def _regularization_ladder(self) -> list[float]:
        """Continuation schedule: Newton escapes a zero-slip start at rate
        ~(stiffness * eps / bound) per step, so the target eps is reached
        through geometrically shrinking stages, each warm-started."""
        target = self.cfg.regularization_eps
        u_scale = self.grad_scale / self.penalty
        ladder = []
        e = 1e-2 * u_scale
        while e > 10.0 * target:
            ladder.append(e)
            e *= 0.1
        ladder.append(target)
        return ladder

    def solve(self, u0: np.ndarray) -> tuple[np.ndarray, int]:
        inner, cfg = self.inner, self.cfg
        u = u0.copy()
        u[inner.problem.dofmap.dirichlet_dofs] = 0.0
        ypairs = inner.ypair_dofs
        if len(ypairs):
            gap = u[ypairs[:, 1]] - u[ypairs[:, 0]]
            active = gap >= 0.0
        else:
            active = np.zeros(0, dtype=bool)
        total_newton = 0
        ladder = self._regularization_ladder()
        if len(ladder) > 1:
            # a warm start that is already nearly stationary at the
            # target regularization needs no continuation
            z0 = self._reduction(active)
            g0 = self.smooth_gradient(u, ladder[-1])
            if float(np.linalg.norm(z0.T @ g0)) <= 1e-4 * self.grad_scale:
                ladder = ladder[-1:]
        coarse_tol = max(cfg.inner_tol, 1e-6) * self.grad_scale
        final_tol = cfg.inner_tol * self.grad_scale
        for eps in ladder:
            final = eps == ladder[-1]
            tol = final_tol if final else coarse_tol
            settled = False
            for _ in range(40 if final else 8):
                if len(ypairs) and active.any():
                    up = ypairs[active, 0]
                    lo = ypairs[active, 1]
                    avg = 0.5 * (u[up] + u[lo])
                    u[up] = avg
                    u[lo] = avg
                z = self._reduction(active)
                newton_ok = False
                while total_newton < cfg.inner_max_iters:
                    g = self.smooth_gradient(u, eps)
                    g_red = z.T @ g
                    if np.linalg.norm(g_red) <= tol:
                        newton_ok = True
                        break
                    lu = self._factor(u, eps, active, z)
                    step_red = lu.solve(-g_red)
                    step = z @ step_red
                    descent = float(g_red @ step_red)
                    base = self.smooth_objective(u, eps)
                    noise = 1e-13 * (1.0 + abs(base))
                    # a correction below the resolution of u cannot move
                    # the iterate: that is the stationarity floor of the
                    # arithmetic, not a solver failure
                    step_limit = 1e-15 * (1.0 + float(np.abs(u).max()))
                    if -descent <= noise and float(np.abs(step).max()) <= step_limit:
                        newton_ok = True
                        break
                    t = self._line_minimize(u, step, eps)
                    if t <= 0.0:
                        # not a descent direction within arithmetic
                        newton_ok = True
                        break
                    u = u + t * step
                    total_newton += 1
                if not newton_ok:
                    if final:
                        raise InnerSolveError(
                            "semismooth Newton did not reach tolerance within "
                            f"{cfg.inner_max_iters} iterations"
                        )
                    break
                if not len(ypairs):
                    settled = True
                    break
                g_full = self.smooth_gradient(u, eps)
                lam = np.where(active, -g_full[ypairs[:, 1]], 0.0)
                gap = u[ypairs[:, 1]] - u[ypairs[:, 0]]
                new_active = lam + self.penalty * gap > 0.0
                if (new_active == active).all():
                    settled = True
                    break
                active = new_active
            if final and not settled:
                raise InnerSolveError("active-set loop did not settle")
        return u, total_newton


def _solve_frozen(
    inner: InnerProblem, cfg: SolverConfig, u0: np.ndarray
) -> tuple[np.ndarray, int]:
    """Solve the frozen-bound convex problem from the given start."""
    if cfg.inner_method == "projected-sor":
        values = u0.copy()
        values[inner.problem.dofmap.dirichlet_dofs] = 0.0
        iters, ok = inner.sweep(values, cfg.inner_max_iters, cfg.inner_tol)
        if not ok:
            raise InnerSolveError(
                f"projected sweeps did not reach tolerance within "
                f"{cfg.inner_max_iters} sweeps"
            )
        return values, iters
    return _SemismoothSolver(inner, cfg).solve(u0)


def solve_inner_tresca(
    problem: VIProblem,
    p: DisplacementField,
    cfg: SolverConfig,
    u0: DisplacementField | None = None,
) -> DisplacementField:
    """Solve the contact problem with friction bounds frozen at p."""
    values, _ = _solve_inner(problem, p, cfg, None if u0 is None else u0.values)
    return DisplacementField(problem.mesh, values)


def _solve_inner(
    problem: VIProblem,
    p: DisplacementField,
    cfg: SolverConfig,
    u0: np.ndarray | None,
) -> tuple[np.ndarray, int]:
    start = p.values if u0 is None else u0
    if problem.is_linear:
        inner = InnerProblem(problem, p)
        return _solve_frozen(inner, cfg, start)
    # secant loop: rebuild the stiffness at each new state; the secant
    # matrix applied to its own state reproduces the nonlinear stress
    values = start.copy()
    total = 0
    for _ in range(50):
        inner = InnerProblem(problem, p, matrix=problem.matrix_at(values))
        new_values, iters = _solve_frozen(inner, cfg, values)
        total += iters
        step = v_norm(problem.mesh, new_values - values)
        scale = max(v_norm(problem.mesh, new_values), 1e-300)
        values = new_values
        if step <= 0.5 * cfg.inner_tol * scale or step == 0.0:
            return values, total
    raise InnerSolveError("secant loop for the nonlinear material did not settle")


def fixed_point_solve(
    problem: VIProblem,
    cfg: SolverConfig,
    p0: DisplacementField | None = None,
) -> tuple[DisplacementField, SolverReport]:
    """Iterate the frozen-bound map until the state stops moving.

    Returns the last iterate and a report. A non-contractive run is
    flagged in the report (converged False with a diagnostic) rather
    than returned as a solution.
    """
    t0 = time.perf_counter()
    mesh = problem.mesh
    p_values = (
        np.zeros(problem.dofmap.n_dofs) if p0 is None else p0.values.copy()
    )
    diffs: list[float] = []
    ratios: list[float] = []
    inner_iters: list[int] = []
    converged = False
    diagnostic = ""
    values = p_values
    for k in range(cfg.outer_max_iters):
        p_field = DisplacementField(mesh, p_values)
        values, iters = _solve_inner(problem, p_field, cfg, p_values)
        inner_iters.append(iters)
        d = v_norm(mesh, values - p_values)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        if not np.isfinite(d):
            diagnostic = "M > m condition likely violated"
            break
        denom = max(v_norm(mesh, p_values), 1e-300)
        if d == 0.0 or d / denom <= cfg.outer_tol:
            converged = True
            p_values = values
            break
        if len(ratios) >= 4 and all(r >= 1.0 for r in ratios[-4:]):
            diagnostic = "M > m condition likely violated"
            break
        p_values = values
    if not converged and not diagnostic:
        if ratios and sum(1 for r in ratios[-4:] if r >= 1.0) >= 2:
            diagnostic = "M > m condition likely violated"
        else:
            diagnostic = "outer iteration limit reached before convergence"
    u = DisplacementField(mesh, p_values if converged else values)
    from .verification import kkt_check

    kkt = kkt_check(problem, u, tol=cfg.inner_tol)
    report = SolverReport(
        converged=converged,
        outer_iters=len(diffs),
        diff_norms=diffs,
        contraction_ratios=ratios,
        inner_iters=inner_iters,
        kkt=kkt,
        wall_time=time.perf_counter() - t0,
        diagnostic=diagnostic,
    )
    return u, report


def estimate_contraction(report: SolverReport) -> float:
    """Geometric mean of the tail contraction ratios.

    An empirical witness for the contraction factor of the outer map;
    meaningful only after at least three outer iterations.
    """
    if report.outer_iters < 3 or len(report.contraction_ratios) < 2:
        raise ValueError("too few iterations to estimate a contraction ratio")
    tail = np.array(report.contraction_ratios[-5:])
    if (tail == 0).any():
        return 0.0
    return float(np.exp(np.log(tail).mean()))
