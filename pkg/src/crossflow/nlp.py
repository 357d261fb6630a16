"""Standard-form NLP container: bounds, block-structured constraints, sparse Jacobian.

A problem is  min f(x)  s.t.  c_lower <= c(x) <= c_upper,  x_lower <= x <= x_upper.
Constraints are grouped into blocks that each evaluate a contiguous row range
and scatter their Jacobian entries into a precomputed COO pattern, so one
evaluation sweep fills the whole sparse matrix without per-row Python work.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .autodiff import differentiate


@dataclass
class ConstraintBlock:
    """One contiguous row range with its own evaluation function.

    ``fn(x, with_jac)`` returns (values, jac_data); ``jac_data`` is aligned
    with the (jac_rows, jac_cols) COO pattern and may be None when not asked.
    """

    name: str
    row_offset: int
    n_rows: int
    fn: Callable
    jac_rows: np.ndarray
    jac_cols: np.ndarray


class NlpProblem:
    """Differentiable objective and constraints with bounds and sparsity metadata."""

    def __init__(
        self,
        n_vars: int,
        objective_fn: Callable,
        blocks: list[ConstraintBlock],
        x_lower: np.ndarray,
        x_upper: np.ndarray,
        c_lower: np.ndarray,
        c_upper: np.ndarray,
        names: list[str] | None = None,
        hessian_fn: Callable | None = None,
    ):
        """``objective_fn(x, with_grad)`` -> (value, gradient|None);
        ``hessian_fn(x)`` -> sparse curvature model of the objective (optional).
        """
        self.n_vars = int(n_vars)
        self._objective_fn = objective_fn
        self._hessian_fn = hessian_fn
        self.blocks = blocks
        self.x_lower = np.asarray(x_lower, dtype=float)
        self.x_upper = np.asarray(x_upper, dtype=float)
        self.c_lower = np.asarray(c_lower, dtype=float)
        self.c_upper = np.asarray(c_upper, dtype=float)
        self.n_cons = len(self.c_lower)
        self.names = list(names) if names is not None else [f"x[{i}]" for i in range(n_vars)]
        if self.x_lower.shape != (self.n_vars,) or self.x_upper.shape != (self.n_vars,):
            raise ValueError("variable bound vectors must match n_vars")
        if self.c_upper.shape != (self.n_cons,):
            raise ValueError("constraint bound vectors must match in length")
        if np.any(self.x_lower > self.x_upper) or np.any(self.c_lower > self.c_upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        if len(self.names) != self.n_vars:
            raise ValueError("variable name metadata must match n_vars")
        rows_covered = sum(b.n_rows for b in blocks)
        if rows_covered != self.n_cons:
            raise ValueError(f"blocks cover {rows_covered} rows, expected {self.n_cons}")
        self._jac_rows = (
            np.concatenate([b.jac_rows + b.row_offset for b in blocks])
            if blocks
            else np.empty(0, dtype=int)
        )
        self._jac_cols = (
            np.concatenate([b.jac_cols for b in blocks]) if blocks else np.empty(0, dtype=int)
        )

    # ---- evaluation -------------------------------------------------------

    def objective(self, x: np.ndarray) -> float:
        return float(self._objective_fn(np.asarray(x, dtype=float), False)[0])

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        val, grad = self._objective_fn(np.asarray(x, dtype=float), True)
        return np.asarray(grad, dtype=float)

    def constraints(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(self.n_cons)
        for b in self.blocks:
            vals, _ = b.fn(x, False)
            out[b.row_offset : b.row_offset + b.n_rows] = vals
        return out

    def constraints_and_jacobian(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        out = np.empty(self.n_cons)
        data = []
        for b in self.blocks:
            vals, jd = b.fn(x, True)
            out[b.row_offset : b.row_offset + b.n_rows] = vals
            data.append(jd)
        flat = np.concatenate(data) if data else np.empty(0)
        jac = sp.coo_matrix(
            (flat, (self._jac_rows, self._jac_cols)), shape=(self.n_cons, self.n_vars)
        ).tocsr()
        return out, jac

    def jacobian_sparsity(self):
        """COO pattern (rows, cols); a superset of the true nonzeros."""
        return self._jac_rows.copy(), self._jac_cols.copy()

    def hessian_model(self, x: np.ndarray, row_duals: np.ndarray | None = None):
        """Curvature model of the Lagrangian at ``x`` (row duals optional), or None."""
        if self._hessian_fn is None:
            return None
        x = np.asarray(x, dtype=float)
        try:
            return self._hessian_fn(x, row_duals)
        except TypeError:
            return self._hessian_fn(x)

    # ---- convenience constructor for small dense problems ------------------

    @classmethod
    def from_functions(
        cls,
        n_vars: int,
        objective,
        constraints=None,
        n_cons: int = 0,
        x_lower=None,
        x_upper=None,
        c_lower=None,
        c_upper=None,
        names=None,
        hessian=None,
    ) -> "NlpProblem":
        """Wrap plain callables written against numpy primitives (dense derivatives).

        Suited to small problems; gradients and Jacobians come from forward-mode
        differentiation with identity seeds.
        """
        inf = np.inf

        def objective_fn(x, with_grad):
            if not with_grad:
                val = objective(x)
                return float(val.val if hasattr(val, "val") else val), None
            return differentiate(objective, x)

        blocks = []
        if constraints is not None and n_cons > 0:

            def block_fn(x, with_jac):
                if not with_jac:
                    vals = constraints(x)
                    vals = vals.val if hasattr(vals, "val") else np.asarray(vals, dtype=float)
                    return np.atleast_1d(vals), None
                vals, jac = differentiate(constraints, x)
                return np.atleast_1d(vals), np.atleast_2d(jac).reshape(-1)

            rows = np.repeat(np.arange(n_cons), n_vars)
            cols = np.tile(np.arange(n_vars), n_cons)
            blocks = [ConstraintBlock("dense", 0, n_cons, block_fn, rows, cols)]

        def pick(v, size, fill):
            return np.full(size, fill) if v is None else np.asarray(v, dtype=float)

        hessian_fn = None
        if hessian is not None:
            hessian_fn = lambda x: sp.csr_matrix(np.atleast_2d(np.asarray(hessian(x), dtype=float)))

        return cls(
            n_vars,
            objective_fn,
            blocks,
            pick(x_lower, n_vars, -inf),
            pick(x_upper, n_vars, inf),
            pick(c_lower, n_cons, -inf),
            pick(c_upper, n_cons, inf),
            names,
            hessian_fn,
        )
