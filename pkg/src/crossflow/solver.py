"""Primal-dual interior-point solver for the assembled sparse NLP.

Inequality rows get one slack each, boxed by the row bounds; slack and
variable bound gaps carry log barriers.  Each iteration solves the condensed
symmetric KKT system (barrier curvature of the inequalities folded into the
Hessian block), clips steps by the fraction-to-boundary rule, and backtracks
on an l1 merit function.  The barrier parameter shrinks monotonically once
the inner problem is solved to the current barrier value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr, splu

from .autodiff import differentiate  # re-exported: first-order oracle of this module
from .nlp import NlpProblem

__all__ = [
    "SolverConfig",
    "SolveReport",
    "Multipliers",
    "KktResiduals",
    "solve",
    "kkt_residuals",
    "differentiate",
]

_EQ_TOL = 1e-12
_KAPPA_SIGMA = 1e10
_ARMIJO = 1e-4
_MIN_STEP = 1e-12
_GRAD_CAP = 100.0  # scaling target for objective/row gradients at x0
_THETA_RATCHET = 4.0  # infeasibility headroom over the best level achieved


@dataclass(frozen=True)
class SolverConfig:
    kkt_tol: float = 1e-6
    max_iters: int = 3000
    initial_barrier: float = 0.1
    barrier_shrink: float = 0.2
    fraction_to_boundary: float = 0.995
    regularization_floor: float = 1e-8
    scale: bool = True

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.max_iters > 0 and self.initial_barrier > 0):
            raise ValueError("tolerances, iteration cap, and barrier must be positive")
        if not 0 < self.barrier_shrink < 1:
            raise ValueError(f"barrier_shrink must be in (0,1), got {self.barrier_shrink}")
        if not 0 < self.fraction_to_boundary < 1:
            raise ValueError(
                f"fraction_to_boundary must be in (0,1), got {self.fraction_to_boundary}"
            )
        if not self.regularization_floor > 0:
            raise ValueError("regularization_floor must be positive")


@dataclass(frozen=True)
class Multipliers:
    """Signed row duals plus nonnegative bound duals (unscaled problem convention)."""

    rows: np.ndarray
    bound_lower: np.ndarray
    bound_upper: np.ndarray


class KktResiduals(NamedTuple):
    stationarity: float
    primal_feasibility: float
    complementarity: float

    def max(self) -> float:
        return max(self)


@dataclass
class SolveReport:
    status: str
    iterations: int
    stationarity: float
    primal_feasibility: float
    complementarity: float
    objective: float
    wall_time: float
    x: np.ndarray
    multipliers: Multipliers
    warnings: list[str] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def kkt_residuals(problem: NlpProblem, x: np.ndarray, mult: Multipliers) -> KktResiduals:
    """Infinity norms of stationarity, primal feasibility, and complementarity."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n_vars,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.n_vars},)")
    if mult.rows.shape != (problem.n_cons,):
        raise ValueError(
            f"row multipliers have shape {mult.rows.shape}, expected ({problem.n_cons},)"
        )
    if mult.bound_lower.shape != (problem.n_vars,) or mult.bound_upper.shape != (
        problem.n_vars,
    ):
        raise ValueError("bound multiplier shapes must match n_vars")
    grad = problem.objective_gradient(x)
    c, jac = problem.constraints_and_jacobian(x)
    stationarity = grad - mult.bound_lower + mult.bound_upper
    if problem.n_cons:
        stationarity = stationarity + jac.T @ mult.rows
    stat = float(np.abs(stationarity).max()) if problem.n_vars else 0.0

    feas = 0.0
    if problem.n_cons:
        feas = max(
            feas,
            float(np.maximum(problem.c_lower - c, 0).max(initial=0.0)),
            float(np.maximum(c - problem.c_upper, 0).max(initial=0.0)),
        )
    feas = max(
        feas,
        float(np.maximum(problem.x_lower - x, 0).max(initial=0.0)),
        float(np.maximum(x - problem.x_upper, 0).max(initial=0.0)),
    )

    comp = 0.0
    if problem.n_cons:
        eq = np.abs(problem.c_upper - problem.c_lower) <= _EQ_TOL
        lam_lo = np.maximum(-mult.rows, 0.0)
        lam_hi = np.maximum(mult.rows, 0.0)
        lo_fin = np.isfinite(problem.c_lower) & ~eq
        hi_fin = np.isfinite(problem.c_upper) & ~eq
        if lo_fin.any():
            comp = max(comp, float(np.abs(lam_lo[lo_fin] * (c - problem.c_lower)[lo_fin]).max()))
        if hi_fin.any():
            comp = max(comp, float(np.abs(lam_hi[hi_fin] * (problem.c_upper - c)[hi_fin]).max()))
    xlo_fin = np.isfinite(problem.x_lower)
    xhi_fin = np.isfinite(problem.x_upper)
    if xlo_fin.any():
        comp = max(comp, float(np.abs(mult.bound_lower[xlo_fin] * (x - problem.x_lower)[xlo_fin]).max()))
    if xhi_fin.any():
        comp = max(comp, float(np.abs(mult.bound_upper[xhi_fin] * (problem.x_upper - x)[xhi_fin]).max()))
    return KktResiduals(stat, feas, comp)


def _push_interior(v, lo, hi):
    """Move values strictly inside [lo, hi] (only finite sides push)."""
    width = hi - lo
    pad_lo = np.where(
        np.isfinite(lo),
        np.minimum(1e-2 * np.maximum(1.0, np.abs(lo)), np.where(np.isfinite(width), width / 4, np.inf)),
        0.0,
    )
    pad_hi = np.where(
        np.isfinite(hi),
        np.minimum(1e-2 * np.maximum(1.0, np.abs(hi)), np.where(np.isfinite(width), width / 4, np.inf)),
        0.0,
    )
    out = np.maximum(v, lo + pad_lo)
    return np.minimum(out, hi - pad_hi)


def _fraction_to_boundary(gap, dgap, tau):
    """Largest alpha in (0, 1] with gap + alpha * dgap >= (1 - tau) * gap."""
    shrink = dgap < 0
    if not shrink.any():
        return 1.0
    with np.errstate(over="ignore", divide="ignore"):
        ratios = -tau * gap[shrink] / dgap[shrink]
    return float(min(1.0, ratios.min()))


class _Workspace:
    """Fixed per-solve data: scaling, row classification, bound masks."""

    def __init__(self, problem, cfg, x0):
        self.p = problem
        self.cfg = cfg
        self.xl = problem.x_lower.copy()
        self.xu = problem.x_upper.copy()
        self.xl_fin = np.isfinite(self.xl)
        self.xu_fin = np.isfinite(self.xu)

        # scaling factors fixed at x0
        grad0 = problem.objective_gradient(x0)
        self.scale_f = 1.0
        gmax = float(np.abs(grad0).max(initial=0.0))
        if cfg.scale and gmax > _GRAD_CAP:
            self.scale_f = _GRAD_CAP / gmax
        self.row_scale = np.ones(problem.n_cons)
        if problem.n_cons:
            _, jac0 = problem.constraints_and_jacobian(x0)
            row_max = np.abs(jac0).max(axis=1).toarray().reshape(-1)
            if cfg.scale:
                big = row_max > _GRAD_CAP
                self.row_scale[big] = _GRAD_CAP / row_max[big]
        self.cl = problem.c_lower * self.row_scale
        self.cu = problem.c_upper * self.row_scale

        self.eq = np.abs(self.cu - self.cl) <= _EQ_TOL
        self.ineq = ~self.eq
        self.n_eq = int(self.eq.sum())
        self.n_in = int(self.ineq.sum())
        self.sl = self.cl[self.ineq]
        self.su = self.cu[self.ineq]
        self.sl_fin = np.isfinite(self.sl)
        self.su_fin = np.isfinite(self.su)

    # ---- scaled evaluation -------------------------------------------------

    def eval_f_grad(self, x):
        val, grad = self.p._objective_fn(x, True)
        return self.scale_f * val, self.scale_f * np.asarray(grad)

    def eval_f(self, x):
        return self.scale_f * self.p.objective(x)

    def eval_c(self, x):
        if self.p.n_cons == 0:
            return np.empty(0)
        return self.p.constraints(x) * self.row_scale

    def eval_c_jac(self, x):
        c, jac = self.p.constraints_and_jacobian(x)
        scale = sp.diags(self.row_scale)
        return c * self.row_scale, (scale @ jac).tocsr()

    def hessian(self, x, row_duals):
        """Curvature model: the problem's own Lagrangian model when provided,
        otherwise finite differences of the scaled Lagrangian gradient."""
        unscaled_duals = row_duals * self.row_scale / self.scale_f
        H = self.p.hessian_model(x, unscaled_duals)
        if H is not None:
            return (H * self.scale_f).tocsr()
        n = self.p.n_vars
        if n > 400:
            return sp.csr_matrix((n, n))
        lam = row_duals * self.row_scale

        def lagrangian_gradient(xv):
            g = self.scale_f * self.p.objective_gradient(xv)
            if self.p.n_cons:
                _, jac = self.p.constraints_and_jacobian(xv)
                g = g + jac.T @ lam
            return g

        dense = np.zeros((n, n))
        h = 1e-6
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            dense[:, i] = (lagrangian_gradient(x + e) - lagrangian_gradient(x - e)) / (2 * h)
        dense = 0.5 * (dense + dense.T)
        return sp.csr_matrix(dense)


def solve(
    problem: NlpProblem,
    x0: np.ndarray,
    cfg: SolverConfig | None = None,
    log_stream=None,
    debug_hook=None,
) -> SolveReport:
    """Minimize the problem from ``x0``; never raises on failure, reports status.

    ``log_stream`` receives one tab-separated line per iteration
    (iter, barrier, objective, stationarity, feasibility, complementarity, step).
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    warnings: list[str] = []
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.shape != (problem.n_vars,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.n_vars},)")

    x = _push_interior(x0, problem.x_lower, problem.x_upper)
    if np.max(np.abs(x - x0), initial=0.0) > 1e-10:
        warnings.append("x0 projected to the strict interior of the variable bounds")

    ws = _Workspace(problem, cfg, x)
    mu = cfg.initial_barrier
    mu_min = cfg.kkt_tol / 10.0
    tau = cfg.fraction_to_boundary
    delta_last = 0.0
    force_delta = 0.0

    if log_stream is not None:
        log_stream.write("iter\tbarrier\tobjective\tstat\tfeas\tcomp\tstep\n")

    # ---- initialize slacks and duals ---------------------------------------
    c = ws.eval_c(x)
    s = _push_interior(c[ws.ineq], ws.sl, ws.su) if ws.n_in else np.empty(0)
    y_e = np.zeros(ws.n_eq)
    if ws.n_eq and problem.n_vars <= 400:
        # least-squares equality multipliers sharpen the first curvature model
        _, jac00 = ws.eval_c_jac(x)
        g00 = ws.eval_f_grad(x)[1]
        y_ls, *_ = np.linalg.lstsq(jac00[ws.eq].toarray().T, -g00, rcond=None)
        if np.abs(y_ls).max(initial=0.0) <= 1e3:
            y_e = y_ls
    gap_slo = np.where(ws.sl_fin, s - ws.sl, np.inf)
    gap_shi = np.where(ws.su_fin, ws.su - s, np.inf)
    w_lo = np.where(ws.sl_fin, mu / np.maximum(gap_slo, 1e-12), 0.0)
    w_hi = np.where(ws.su_fin, mu / np.maximum(gap_shi, 1e-12), 0.0)
    gap_xlo = np.where(ws.xl_fin, x - ws.xl, np.inf)
    gap_xhi = np.where(ws.xu_fin, ws.xu - x, np.inf)
    z_lo = np.where(ws.xl_fin, mu / np.maximum(gap_xlo, 1e-12), 0.0)
    z_hi = np.where(ws.xu_fin, mu / np.maximum(gap_xhi, 1e-12), 0.0)

    status = "max_iters"
    iters_done = 0
    trace: list[dict] = []
    alpha = 0.0

    # (theta, phi) acceptance envelope per barrier stage; a trial is blocked
    # when no better than a remembered corner in both measures
    theta_init = 0.0
    if problem.n_cons:
        c_init = ws.eval_c(x)
        if ws.n_eq:
            theta_init += float(np.abs(c_init[ws.eq] - ws.cl[ws.eq]).sum())
        if ws.n_in:
            theta_init += float(np.abs(c_init[ws.ineq] - s).sum())
    # without a dedicated restoration phase, the envelope cap must ratchet:
    # infeasibility may never re-explode beyond a small multiple of the best
    # level already achieved
    theta_cap_global = 1e4 * max(1.0, theta_init)
    theta_cap = max(_THETA_RATCHET * theta_init, 10.0 * mu, 1e-6)
    theta_small = 1e-4 * max(1.0, theta_init)
    flt: list[tuple[float, float]] = []

    def filter_blocks(th, ph):
        if th >= theta_cap:
            return True
        return any(th >= tf_ and ph >= pf_ for tf_, pf_ in flt)

    def current_theta(cv):
        th = 0.0
        if ws.n_eq:
            th += float(np.abs(cv[ws.eq] - ws.cl[ws.eq]).sum())
        if ws.n_in:
            th += float(np.abs(cv[ws.ineq] - s).sum())
        return th

    def residuals(fgrad, c, jac, barrier):
        y_i = w_hi - w_lo
        stat_vec = fgrad - z_lo + z_hi
        if problem.n_cons:
            lam = np.zeros(problem.n_cons)
            lam[ws.eq] = y_e
            lam[ws.ineq] = y_i
            stat_vec = stat_vec + jac.T @ lam
        stat = float(np.abs(stat_vec).max(initial=0.0))
        feas = 0.0
        if ws.n_eq:
            feas = max(feas, float(np.abs(c[ws.eq] - ws.cl[ws.eq]).max()))
        if ws.n_in:
            feas = max(feas, float(np.abs(c[ws.ineq] - s).max()))
        comp = 0.0
        for gap, dual, fin in (
            (gap_slo, w_lo, ws.sl_fin),
            (gap_shi, w_hi, ws.su_fin),
            (gap_xlo, z_lo, ws.xl_fin),
            (gap_xhi, z_hi, ws.xu_fin),
        ):
            if fin.any():
                comp = max(comp, float(np.abs(gap[fin] * dual[fin] - barrier).max()))
        return KktResiduals(stat, feas, comp)

    def merit(x_trial, s_trial, fval):
        total = fval
        glo = np.where(ws.xl_fin, x_trial - ws.xl, 1.0)
        ghi = np.where(ws.xu_fin, ws.xu - x_trial, 1.0)
        if np.any(glo <= 0) or np.any(ghi <= 0):
            return np.inf, np.inf
        total -= mu * (np.log(glo[ws.xl_fin]).sum() + np.log(ghi[ws.xu_fin]).sum())
        if ws.n_in:
            slo = np.where(ws.sl_fin, s_trial - ws.sl, 1.0)
            shi = np.where(ws.su_fin, ws.su - s_trial, 1.0)
            if np.any(slo <= 0) or np.any(shi <= 0):
                return np.inf, np.inf
            total -= mu * (np.log(slo[ws.sl_fin]).sum() + np.log(shi[ws.su_fin]).sum())
        c_trial = ws.eval_c(x_trial)
        theta = 0.0
        if ws.n_eq:
            theta += float(np.abs(c_trial[ws.eq] - ws.cl[ws.eq]).sum())
        if ws.n_in:
            theta += float(np.abs(c_trial[ws.ineq] - s_trial).sum())
        return total, theta

    stat_best = np.inf
    stat_stall = 0

    for it in range(cfg.max_iters):
        iters_done = it + 1
        fval, fgrad = ws.eval_f_grad(x)
        c, jac = ws.eval_c_jac(x) if problem.n_cons else (np.empty(0), None)
        gap_xlo = np.where(ws.xl_fin, x - ws.xl, np.inf)
        gap_xhi = np.where(ws.xu_fin, ws.xu - x, np.inf)
        gap_slo = np.where(ws.sl_fin, s - ws.sl, np.inf)
        gap_shi = np.where(ws.su_fin, ws.su - s, np.inf)

        res0 = residuals(fgrad, c, jac, 0.0)
        # the primal can settle long before the equality multipliers do
        # (degenerate active sets); restart them by least squares on a stall
        if res0.stationarity < 0.7 * stat_best:
            stat_best = res0.stationarity
            stat_stall = 0
        else:
            stat_stall += 1
        if (
            ws.n_eq
            and stat_stall >= 60
            and res0.stationarity > cfg.kkt_tol
            and res0.primal_feasibility < 1e-2
        ):
            stat_stall = 0
            rhs_ls = -(fgrad - z_lo + z_hi)
            if ws.n_in:
                rhs_ls = rhs_ls - jac[ws.ineq].T @ (w_hi - w_lo)
            y_try = lsqr(jac[ws.eq].T, rhs_ls, atol=1e-12, btol=1e-12, iter_lim=400)[0]
            resid_try = float(
                np.abs(fgrad - z_lo + z_hi + jac[ws.eq].T @ y_try
                       + (jac[ws.ineq].T @ (w_hi - w_lo) if ws.n_in else 0.0)).max()
            )
            if resid_try < res0.stationarity:
                y_e = y_try
                res0 = residuals(fgrad, c, jac, 0.0)
                stat_best = min(stat_best, res0.stationarity)
        if log_stream is not None:
            log_stream.write(
                f"{it}\t{mu:.3e}\t{fval / ws.scale_f:.9e}\t{res0.stationarity:.3e}"
                f"\t{res0.primal_feasibility:.3e}\t{res0.complementarity:.3e}\t{alpha:.3e}\n"
            )
        trace.append(
            {
                "iter": it,
                "mu": mu,
                "objective": fval / ws.scale_f,
                "residuals": res0,
                "step": alpha,
            }
        )
        if res0.max() <= cfg.kkt_tol:
            status = "converged"
            break
        res_mu = residuals(fgrad, c, jac, mu)
        if res_mu.max() <= mu and mu > mu_min:
            while res_mu.max() <= mu and mu > mu_min:
                mu = max(cfg.barrier_shrink * mu, mu_min)
                res_mu = residuals(fgrad, c, jac, mu)
            # new barrier stage: fresh envelope, but do not let the recentering
            # steps wreck the feasibility already earned
            flt.clear()
            theta_cap = min(
                theta_cap_global, max(10.0 * current_theta(c), 10.0 * mu, 1e-6)
            )

        # ---- assemble the condensed KKT system --------------------------------
        y_i = w_hi - w_lo
        sigma_x = np.zeros(problem.n_vars)
        sigma_x[ws.xl_fin] += z_lo[ws.xl_fin] / gap_xlo[ws.xl_fin]
        sigma_x[ws.xu_fin] += z_hi[ws.xu_fin] / gap_xhi[ws.xu_fin]
        jac_eq = jac[ws.eq] if ws.n_eq else None
        jac_in = jac[ws.ineq] if ws.n_in else None
        if ws.n_in:
            sigma_w = np.zeros(ws.n_in)
            sigma_w[ws.sl_fin] += w_lo[ws.sl_fin] / gap_slo[ws.sl_fin]
            sigma_w[ws.su_fin] += w_hi[ws.su_fin] / gap_shi[ws.su_fin]
            sigma_w = np.maximum(sigma_w, 1e-12)
        else:
            sigma_w = np.empty(0)

        mu_x = np.zeros(problem.n_vars)
        mu_x[ws.xl_fin] += mu / gap_xlo[ws.xl_fin]
        mu_x[ws.xu_fin] -= mu / gap_xhi[ws.xu_fin]
        r1 = -fgrad + mu_x
        if ws.n_eq:
            r1 = r1 - jac_eq.T @ y_e
        if ws.n_in:
            r1 = r1 - jac_in.T @ y_i
            q = y_i.copy()
            q[ws.sl_fin] += mu / gap_slo[ws.sl_fin]
            q[ws.su_fin] -= mu / gap_shi[ws.su_fin]
            r3 = -(c[ws.ineq] - s) + q / sigma_w
            rhs_x = r1 + jac_in.T @ (sigma_w * r3)
        else:
            rhs_x = r1

        lam_rows = np.zeros(problem.n_cons)
        if ws.n_eq:
            lam_rows[ws.eq] = y_e
        if ws.n_in:
            lam_rows[ws.ineq] = y_i
        H = ws.hessian(x, lam_rows)
        B_base = H + sp.diags(sigma_x)
        if ws.n_in:
            B_base = B_base + jac_in.T @ sp.diags(sigma_w) @ jac_in

        # ---- direction with regularization escalation --------------------------
        delta = force_delta
        direction = None
        for attempt in range(12):
            B = B_base + sp.identity(problem.n_vars) * max(delta, cfg.regularization_floor)
            if ws.n_eq:
                delta_c = 1e-10
                K = sp.bmat(
                    [[B, jac_eq.T], [jac_eq, -delta_c * sp.identity(ws.n_eq)]], format="csc"
                )
                rhs = np.concatenate([rhs_x, -(c[ws.eq] - ws.cl[ws.eq])])
            else:
                K = B.tocsc()
                rhs = rhs_x
            try:
                lu = splu(K)
                sol = lu.solve(rhs)
                sol = sol + lu.solve(rhs - K @ sol)  # one refinement round
            except RuntimeError:
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                # backward error: residual relative to the system scale
                k_scale = min(float(np.abs(K.data).max(initial=1.0)), 1e120)
                sol_scale = min(float(np.abs(sol).max(initial=0.0)), 1e120)
                lin_res = float(
                    np.abs(K @ sol - rhs).max()
                    / (1.0 + np.abs(rhs).max(initial=0.0) + k_scale * sol_scale)
                )
                if lin_res < 1e-9:
                    dx = sol[: problem.n_vars]
                    dy_e = sol[problem.n_vars :] if ws.n_eq else np.empty(0)
                    # inertia proxy: the primal block must look positive along dx
                    dx_sq = float(dx @ dx)
                    if dx_sq > 1e-26 and float(dx @ (B @ dx)) <= 1e-12 * dx_sq:
                        delta = max(delta * 10.0, 1e-4) if delta else max(
                            10 * cfg.regularization_floor, delta_last / 3.0, 1e-4
                        )
                        if delta > 1e12:
                            break
                        continue
                    # directional derivative of the barrier-merit objective part
                    d_barrier = float(fgrad @ dx)
                    d_barrier -= float((mu_x * dx).sum())
                    if ws.n_in:
                        ds = jac_in @ dx + (c[ws.ineq] - s)
                        slack_term = np.zeros(ws.n_in)
                        slack_term[ws.sl_fin] += mu / gap_slo[ws.sl_fin]
                        slack_term[ws.su_fin] -= mu / gap_shi[ws.su_fin]
                        d_barrier -= float(slack_term @ ds)
                    else:
                        ds = np.empty(0)
                    theta0 = 0.0
                    if ws.n_eq:
                        theta0 += float(np.abs(c[ws.eq] - ws.cl[ws.eq]).sum())
                    if ws.n_in:
                        theta0 += float(np.abs(c[ws.ineq] - s).sum())
                    tiny = np.abs(dx).max(initial=0.0) <= 1e-11 * (
                        1.0 + np.abs(x).max()
                    ) and (
                        not ws.n_in
                        or np.abs(ds).max(initial=0.0) <= 1e-11 * (1.0 + np.abs(s).max())
                    )
                    # near-stationary refinement: the predicted decrease sits at
                    # roundoff, so the merit test cannot see it; take the step as is
                    flat = theta0 <= 1e-12 and abs(d_barrier) <= 1e-13 * max(1.0, abs(fval))
                    if theta0 > 1e-12 or tiny or flat or d_barrier < -1e-16 * max(
                        1.0, abs(fval)
                    ):
                        direction = (dx, ds, dy_e, d_barrier, theta0, tiny or flat)
                        soc_ctx = (lu, r1)
                        break
            # escalate and retry
            if delta == 0.0:
                delta = max(10 * cfg.regularization_floor, delta_last / 3.0, 1e-4)
            else:
                delta *= 10.0
            if delta > 1e12:
                break
        if direction is None:
            status = "singular_system"
            break
        force_delta = 0.0
        delta_last = delta if delta > 0 else delta_last / 3.0
        dx, ds, dy_e, d_barrier, theta0, tiny_step = direction

        def primal_alpha_max(dxv, dsv):
            a = 1.0
            a = min(a, _fraction_to_boundary(gap_xlo[ws.xl_fin], dxv[ws.xl_fin], tau))
            a = min(a, _fraction_to_boundary(gap_xhi[ws.xu_fin], -dxv[ws.xu_fin], tau))
            if ws.n_in:
                a = min(a, _fraction_to_boundary(gap_slo[ws.sl_fin], dsv[ws.sl_fin], tau))
                a = min(a, _fraction_to_boundary(gap_shi[ws.su_fin], -dsv[ws.su_fin], tau))
            return a

        # ---- filter line search with one second-order correction round ---------
        alpha_max = primal_alpha_max(dx, ds)
        phi0, _ = merit(x, s, fval)
        alpha = alpha_max
        accepted = False
        if tiny_step:
            # dual-recentering move: primal barely changes, acceptance tests
            # would only measure roundoff
            x_t = x + alpha * dx
            s_t = s + alpha * ds if ws.n_in else s
            theta_t = theta0
            accepted = True
        noise = 10 * np.finfo(float).eps * max(1.0, abs(phi0))
        f_type_step = False
        soc_tried = False

        def trial_ok(phi_t, theta_t, a):
            """Progress test: Armijo on the barrier objective near feasibility,
            otherwise sufficient decrease in either measure, filter permitting."""
            if filter_blocks(theta_t, phi_t):
                return False, False
            f_type = (
                theta0 <= theta_small
                and d_barrier < 0
                and a * (-d_barrier) ** 2.3 > theta0**1.1
            )
            if f_type:
                return phi_t <= phi0 + _ARMIJO * a * d_barrier + noise, True
            ok = theta_t <= (1.0 - 1e-5) * theta0 or phi_t <= phi0 - 1e-5 * theta0 + noise
            return ok, False

        while not accepted and alpha >= _MIN_STEP:
            x_t = x + alpha * dx
            s_t = s + alpha * ds if ws.n_in else s
            f_t = ws.eval_f(x_t)
            phi_t, theta_t = merit(x_t, s_t, f_t)
            ok, f_type_step = trial_ok(phi_t, theta_t, alpha)
            if ok:
                accepted = True
                break
            if not soc_tried and problem.n_cons and theta_t >= theta0:
                # second-order correction: full steps frequently fail only
                # through constraint curvature; re-solve against the corrected
                # residuals at the trial point (same factorization)
                soc_tried = True
                lu_dir, r1_dir = soc_ctx
                c_t = ws.eval_c(x_t)
                rhs_soc = r1_dir.copy()
                if ws.n_in:
                    v_corr = alpha * (c[ws.ineq] - s) + (c_t[ws.ineq] - s_t)
                    r3_soc = -v_corr + q / sigma_w
                    rhs_soc = rhs_soc + jac_in.T @ (sigma_w * r3_soc)
                if ws.n_eq:
                    c_corr = alpha * (c[ws.eq] - ws.cl[ws.eq]) + (c_t[ws.eq] - ws.cl[ws.eq])
                    full_rhs = np.concatenate([rhs_soc, -c_corr])
                else:
                    full_rhs = rhs_soc
                sol_soc = lu_dir.solve(full_rhs)
                if np.all(np.isfinite(sol_soc)):
                    dx_soc = sol_soc[: problem.n_vars]
                    dy_soc = sol_soc[problem.n_vars :] if ws.n_eq else np.empty(0)
                    ds_soc = (jac_in @ dx_soc + v_corr) if ws.n_in else np.empty(0)
                    a_soc = primal_alpha_max(dx_soc, ds_soc)
                    x_c = x + a_soc * dx_soc
                    s_c = s + a_soc * ds_soc if ws.n_in else s
                    f_c = ws.eval_f(x_c)
                    phi_c, theta_c = merit(x_c, s_c, f_c)
                    ok, f_type_step = trial_ok(phi_c, theta_c, a_soc)
                    if ok:
                        dx, ds, dy_e = dx_soc, ds_soc, dy_soc
                        alpha = a_soc
                        x_t, s_t = x_c, s_c
                        phi_t, theta_t = phi_c, theta_c
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            # restoration attempt: force a heavily regularized direction next round
            if force_delta < 1e8:
                force_delta = max(100.0 * max(delta, delta_last), 1e-2)
                alpha = 0.0
                continue
            status = "restoration_failed"
            break
        if not tiny_step and not f_type_step:
            # theta-type step: remember the envelope corner it improved upon
            flt.append(((1.0 - 1e-5) * theta0, phi0 - 1e-5 * theta0))
        theta_cap = min(theta_cap, max(_THETA_RATCHET * theta_t, 10.0 * mu, 1e-6))

        # ---- dual directions for the accepted primal step ----------------------
        dz_lo = np.zeros_like(z_lo)
        dz_hi = np.zeros_like(z_hi)
        dz_lo[ws.xl_fin] = (
            mu - gap_xlo[ws.xl_fin] * z_lo[ws.xl_fin]
        ) / gap_xlo[ws.xl_fin] - z_lo[ws.xl_fin] * dx[ws.xl_fin] / gap_xlo[ws.xl_fin]
        dz_hi[ws.xu_fin] = (
            mu - gap_xhi[ws.xu_fin] * z_hi[ws.xu_fin]
        ) / gap_xhi[ws.xu_fin] + z_hi[ws.xu_fin] * dx[ws.xu_fin] / gap_xhi[ws.xu_fin]
        dw_lo = np.zeros_like(w_lo)
        dw_hi = np.zeros_like(w_hi)
        if ws.n_in:
            dw_lo[ws.sl_fin] = (
                mu - gap_slo[ws.sl_fin] * w_lo[ws.sl_fin]
            ) / gap_slo[ws.sl_fin] - w_lo[ws.sl_fin] * ds[ws.sl_fin] / gap_slo[ws.sl_fin]
            dw_hi[ws.su_fin] = (
                mu - gap_shi[ws.su_fin] * w_hi[ws.su_fin]
            ) / gap_shi[ws.su_fin] + w_hi[ws.su_fin] * ds[ws.su_fin] / gap_shi[ws.su_fin]
        alpha_dual = 1.0
        for dual, ddual, fin in (
            (z_lo, dz_lo, ws.xl_fin),
            (z_hi, dz_hi, ws.xu_fin),
            (w_lo, dw_lo, ws.sl_fin),
            (w_hi, dw_hi, ws.su_fin),
        ):
            if fin.any():
                alpha_dual = min(alpha_dual, _fraction_to_boundary(dual[fin], ddual[fin], tau))

        if debug_hook is not None:
            debug_hook(
                {
                    "iter": it,
                    "mu": mu,
                        "alpha": alpha,
                    "alpha_max": alpha_max,
                    "delta": delta,
                    "x": x,
                    "s": s,
                    "dx": dx,
                    "ds": ds,
                    "d_barrier": d_barrier,
                    "theta0": theta0,
                    "ws": ws,
                    "soc_tried": soc_tried if not tiny_step else None,
                    "gaps": (gap_xlo, gap_xhi, gap_slo, gap_shi),
                    "duals": (z_lo, z_hi, w_lo, w_hi, y_e),
                }
            )

        x = x_t
        if ws.n_in:
            s = s_t
        if ws.n_eq:
            y_e = y_e + alpha * dy_e
        z_lo = z_lo + alpha_dual * dz_lo
        z_hi = z_hi + alpha_dual * dz_hi
        w_lo = w_lo + alpha_dual * dw_lo
        w_hi = w_hi + alpha_dual * dw_hi
        # keep duals within the kappa-sigma window of the barrier path
        gap_xlo = np.where(ws.xl_fin, x - ws.xl, np.inf)
        gap_xhi = np.where(ws.xu_fin, ws.xu - x, np.inf)
        gap_slo = np.where(ws.sl_fin, s - ws.sl, np.inf)
        gap_shi = np.where(ws.su_fin, ws.su - s, np.inf)
        for dual, gap, fin in (
            (z_lo, gap_xlo, ws.xl_fin),
            (z_hi, gap_xhi, ws.xu_fin),
            (w_lo, gap_slo, ws.sl_fin),
            (w_hi, gap_shi, ws.su_fin),
        ):
            if fin.any():
                g = np.maximum(gap[fin], 1e-40)
                dual[fin] = np.clip(
                    dual[fin],
                    np.minimum(mu / (_KAPPA_SIGMA * g), 1e12),
                    np.minimum(_KAPPA_SIGMA * mu / g, 1e12),
                )

    else:
        status = "max_iters"

    # ---- final report (unscaled multipliers) --------------------------------
    fval, fgrad = ws.eval_f_grad(x)
    c, jac = ws.eval_c_jac(x) if problem.n_cons else (np.empty(0), None)
    final = residuals(fgrad, c, jac, 0.0)
    if status == "converged" and final.max() > cfg.kkt_tol:
        status = "max_iters"  # should not happen; guards report invariant
    lam = np.zeros(problem.n_cons)
    if problem.n_cons:
        lam[ws.eq] = y_e
        lam[ws.ineq] = w_hi - w_lo
        lam = lam * ws.row_scale / ws.scale_f
    mult = Multipliers(lam, z_lo / ws.scale_f, z_hi / ws.scale_f)
    return SolveReport(
        status=status,
        iterations=iters_done,
        stationarity=final.stationarity,
        primal_feasibility=final.primal_feasibility,
        complementarity=final.complementarity,
        objective=fval / ws.scale_f,
        wall_time=time.perf_counter() - t_start,
        x=x,
        multipliers=mult,
        warnings=warnings,
        trace=trace,
    )
