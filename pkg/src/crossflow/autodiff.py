"""Forward-mode automatic differentiation over numpy arrays.

A `Dual` carries a value array of shape S and a tangent array of shape
S + (k,), one slot per seed direction, so a whole batch of expressions is
differentiated against k columns in one sweep.  The supported primitive set is
+, -, *, /, power, sin, cos, sqrt; numpy ufunc dispatch lets plain
numpy-flavoured code run unchanged on duals.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

_UNARY_RULES = {}
_BINARY_UFUNCS = {}


class Dual:
    """Value/tangent pair; tangents live on one trailing axis of length n_seeds."""

    __slots__ = ("val", "dot")
    __array_priority__ = 100.0  # win against ndarray operators

    def __init__(self, val, dot):
        val = np.asarray(val, dtype=float)
        dot = np.asarray(dot, dtype=float)
        if dot.shape[:-1] != val.shape:
            raise ValueError(
                f"tangent shape {dot.shape} does not extend value shape {val.shape}"
            )
        self.val = val
        self.dot = dot

    @property
    def n_seeds(self) -> int:
        return self.dot.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(shape={self.val.shape}, seeds={self.n_seeds})"

    # ---- structural ops -------------------------------------------------

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is None for k in key):
            raise TypeError("Dual indexing does not support np.newaxis")
        if Ellipsis in key:
            # expand against the value shape so the seed axis stays untouched
            i = key.index(Ellipsis)
            fill = self.val.ndim - (len(key) - 1)
            key = key[:i] + (slice(None),) * fill + key[i + 1 :]
        return Dual(self.val[key], self.dot[key])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Dual(self.val.reshape(shape), self.dot.reshape(shape + (self.n_seeds,)))

    def sum(self, axis=None):
        if axis is None:
            flat = self.reshape((self.val.size,))
            return Dual(flat.val.sum(), flat.dot.sum(axis=0))
        axis = axis % self.val.ndim
        return Dual(self.val.sum(axis=axis), self.dot.sum(axis=axis))

    # ---- arithmetic ------------------------------------------------------

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        other = np.asarray(other, dtype=float)
        val = self.val + other
        dot = self.dot
        if val.shape != self.val.shape:
            dot = np.broadcast_to(dot, val.shape + (self.n_seeds,))
        return Dual(val, dot)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.dot * other.val[..., None] + other.dot * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.dot * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            _check_nonzero(other.val, "divide")
            inv = 1.0 / other.val
            val = self.val * inv
            dot = (self.dot - other.dot * val[..., None]) * inv[..., None]
            return Dual(val, dot)
        other = np.asarray(other, dtype=float)
        _check_nonzero(other, "divide")
        return Dual(self.val / other, self.dot / other[..., None])

    def __rtruediv__(self, other):
        _check_nonzero(self.val, "divide")
        other = np.asarray(other, dtype=float)
        val = other / self.val
        dot = -self.dot * (val / self.val)[..., None]
        return Dual(val, dot)

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return NotImplemented
        exponent = float(exponent)
        if exponent == 2.0:
            return Dual(self.val**2, 2.0 * self.val[..., None] * self.dot)
        if exponent != int(exponent) and np.any(self.val < 0):
            raise DomainError(f"power: fractional exponent {exponent} of negative base")
        if exponent < 1.0 and np.any(self.val == 0):
            raise DomainError(f"power: derivative of x**{exponent} undefined at 0")
        val = self.val**exponent
        dot = exponent * (self.val ** (exponent - 1.0))[..., None] * self.dot
        return Dual(val, dot)

    # ---- numpy dispatch ---------------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        if ufunc in _UNARY_RULES and len(inputs) == 1:
            return _UNARY_RULES[ufunc](inputs[0])
        if ufunc in _BINARY_UFUNCS and len(inputs) == 2:
            return _BINARY_UFUNCS[ufunc](*inputs)
        return NotImplemented


def _check_nonzero(arr, op):
    if np.any(arr == 0.0):
        raise DomainError(f"{op}: zero denominator encountered")


def _as_dual(x, like: Dual) -> Dual:
    if isinstance(x, Dual):
        return x
    x = np.asarray(x, dtype=float)
    return Dual(x, np.zeros(x.shape + (like.n_seeds,)))


def _ad_sin(x):
    if not isinstance(x, Dual):
        return np.sin(x)
    return Dual(np.sin(x.val), np.cos(x.val)[..., None] * x.dot)


def _ad_cos(x):
    if not isinstance(x, Dual):
        return np.cos(x)
    return Dual(np.cos(x.val), -np.sin(x.val)[..., None] * x.dot)


def _ad_sqrt(x):
    if not isinstance(x, Dual):
        return np.sqrt(x)
    if np.any(x.val < 0):
        raise DomainError("sqrt: negative argument")
    root = np.sqrt(x.val)
    _check_nonzero(root, "sqrt derivative")
    return Dual(root, x.dot / (2.0 * root[..., None]))


def _ad_square(x):
    if not isinstance(x, Dual):
        return np.square(x)
    return x * x


_UNARY_RULES.update(
    {
        np.negative: lambda x: -x,
        np.positive: lambda x: x,
        np.sin: _ad_sin,
        np.cos: _ad_cos,
        np.sqrt: _ad_sqrt,
        np.square: _ad_square,
    }
)

def _ad_matmul(a, b):
    """Constant-matrix products with a dual operand (linear maps only)."""
    if isinstance(a, Dual) and isinstance(b, Dual):
        return NotImplemented
    if isinstance(b, Dual):
        a = np.asarray(a, dtype=float)
        return Dual(a @ b.val, np.tensordot(a, b.dot, axes=(a.ndim - 1, 0)))
    b = np.asarray(b, dtype=float)
    if a.val.ndim == 1:
        return Dual(a.val @ b, np.einsum("nk,n...->...k", a.dot, b))
    return Dual(a.val @ b, np.einsum("mnk,n...->m...k", a.dot, b))


_BINARY_UFUNCS.update(
    {
        np.add: lambda a, b: (a + b) if isinstance(a, Dual) else (b + a),
        np.subtract: lambda a, b: (a - b) if isinstance(a, Dual) else (-b + a),
        np.multiply: lambda a, b: (a * b) if isinstance(a, Dual) else (b * a),
        np.true_divide: lambda a, b: a / b if isinstance(a, Dual) else Dual.__rtruediv__(b, a),
        np.power: lambda a, b: a**b if isinstance(a, Dual) else NotImplemented,
        np.matmul: _ad_matmul,
    }
)


# ---- helpers used by the problem builders ---------------------------------


def seed_identity(x: np.ndarray) -> Dual:
    """Dual with one seed per entry of the (1-D or batched) value array.

    For a (n, k)-shaped batch the identity seeds are shared across the n rows.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return Dual(x, np.eye(len(x)))
    k = x.shape[-1]
    eye = np.broadcast_to(np.eye(k), x.shape + (k,))
    return Dual(x, eye.copy())


def value(x):
    """Value array of a Dual, or the input unchanged."""
    return x.val if isinstance(x, Dual) else x


def dstack(items, axis=0) -> Dual:
    """Stack duals (constants promoted) along an axis."""
    duals = [d for d in items if isinstance(d, Dual)]
    if not duals:
        raise ValueError("dstack needs at least one Dual")
    like = duals[0]
    items = [_as_dual(d, like) for d in items]
    val = np.stack([d.val for d in items], axis=axis)
    dot = np.stack([d.dot for d in items], axis=axis % (items[0].val.ndim + 1))
    return Dual(val, dot)


def ad_einsum(subscripts: str, const: np.ndarray, x):
    """einsum of a constant array with a dual/array; seed axis rides along via '...'."""
    if not isinstance(x, Dual):
        return np.einsum(subscripts, const, x)
    return Dual(
        np.einsum(subscripts, const, x.val),
        np.einsum(subscripts, const, x.dot),
    )


def differentiate(f, x: np.ndarray, seeds: np.ndarray | None = None):
    """Value and exact forward-mode derivative of ``f`` at ``x``.

    ``seeds`` is an optional (n, k) matrix restricting differentiation to k
    directions (sparse column seeding); the identity is used when omitted.
    Returns (value, gradient) for scalar ``f`` and (values, jacobian) for
    vector ``f``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("differentiate expects a 1-D decision vector")
    if seeds is None:
        seeds = np.eye(len(x))
    seeds = np.asarray(seeds, dtype=float)
    if seeds.shape[0] != len(x):
        raise ValueError(f"seed matrix rows {seeds.shape} must match len(x)={len(x)}")
    out = f(Dual(x, seeds))
    if isinstance(out, Dual):
        val, dot = out.val, out.dot
    else:
        val = np.asarray(out, dtype=float)
        dot = np.zeros(val.shape + (seeds.shape[1],))
    if val.ndim == 0:
        return float(val), dot
    return val, dot
