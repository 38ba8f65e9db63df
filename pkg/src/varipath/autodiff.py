"""Second-order forward-mode differentiation.

A :class:`Jet2` carries a value together with its gradient and Hessian with
respect to ``d`` independent variables.  All three fields may carry a leading
batch shape, so a single arithmetic expression evaluates derivatives at many
points at once::

    t, x, u = lift(np.array([[0.5, 1.0, 2.0], [0.0, 0.0, 0.0]]))
    f = 1 + 0.5 * u * u + 0.5 * x * x
    f.value  # shape (2,)
    f.hess   # shape (2, 3, 3)

The elementary functions :func:`exp`, :func:`log` and :func:`sqrt` accept
either jets or plain numpy arrays, so closed-form Lagrangians written with them
can be evaluated cheaply (values only) or with derivatives from the same code.
"""

from __future__ import annotations

from typing import Callable, List, Sequence, Tuple

import numpy as np

__all__ = ["Jet2", "lift", "exp", "log", "sqrt", "square", "fd_check", "jet_derivatives"]


class Jet2:
    """Value, gradient and Hessian of a scalar function of ``d`` variables."""

    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    def __repr__(self) -> str:
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    # -- helpers -----------------------------------------------------------
    def _const(self, c) -> "Jet2":
        c = np.asarray(c, dtype=float)
        d = self.dim
        return Jet2(c, np.zeros(c.shape + (d,)), np.zeros(c.shape + (d, d)))

    def _coerce(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return self._const(other)

    def _chain(self, f0, f1, f2) -> "Jet2":
        """Compose a scalar function with known f, f', f'' at ``self.value``."""
        g = self.grad
        f1 = np.asarray(f1, dtype=float)
        f2 = np.asarray(f2, dtype=float)
        grad = f1[..., None] * g
        hess = f1[..., None, None] * self.hess + f2[..., None, None] * (
            g[..., :, None] * g[..., None, :]
        )
        return Jet2(f0, grad, hess)

    # -- arithmetic --------------------------------------------------------
    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.grad, -self.hess)

    def __pos__(self) -> "Jet2":
        return self

    def __add__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = np.asarray(other, dtype=float)
            return Jet2(self.value + c, self.grad, self.hess)
        return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet2":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = np.asarray(other, dtype=float)
            return Jet2(self.value * c, self.grad * c[..., None], self.hess * c[..., None, None])
        a, b = self, other
        ga, gb = a.grad, b.grad
        cross = ga[..., :, None] * gb[..., None, :]
        hess = (
            a.hess * b.value[..., None, None]
            + b.hess * a.value[..., None, None]
            + cross
            + np.swapaxes(cross, -1, -2)
        )
        grad = ga * b.value[..., None] + gb * a.value[..., None]
        return Jet2(a.value * b.value, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        v = self.value
        if np.any(v == 0.0):
            raise ZeroDivisionError("Jet2 division by zero")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = np.asarray(other, dtype=float)
            if np.any(c == 0.0):
                raise ZeroDivisionError("Jet2 division by zero")
            return self * (1.0 / c)
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * other

    def __pow__(self, p) -> "Jet2":
        if isinstance(p, Jet2):
            return exp(p * log(self))
        p = float(p)
        if p == 0.0:
            return self._const(np.ones_like(self.value))
        if p == 1.0:
            return self
        if p.is_integer() and p > 0:
            k = int(p)
            result = None
            base = self
            # binary powering keeps integer powers exact at zero
            while k:
                if k & 1:
                    result = base if result is None else result * base
                k >>= 1
                if k:
                    base = base * base
            return result
        v = self.value
        if np.any(v <= 0.0):
            raise ValueError("non-integer power of a nonpositive Jet2 value")
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))


def _is_jet(a) -> bool:
    return isinstance(a, Jet2)


def exp(a):
    if not _is_jet(a):
        return np.exp(a)
    e = np.exp(a.value)
    return a._chain(e, e, e)


def log(a):
    if not _is_jet(a):
        a = np.asarray(a, dtype=float)
        if np.any(a <= 0.0):
            raise ValueError("log of nonpositive value")
        return np.log(a)
    v = a.value
    if np.any(v <= 0.0):
        raise ValueError("log of nonpositive Jet2 value")
    return a._chain(np.log(v), 1.0 / v, -1.0 / v**2)


def sqrt(a):
    if not _is_jet(a):
        a = np.asarray(a, dtype=float)
        if np.any(a < 0.0):
            raise ValueError("sqrt of negative value")
        return np.sqrt(a)
    v = a.value
    if np.any(v <= 0.0):
        raise ValueError("sqrt of nonpositive Jet2 value (not differentiable at 0)")
    s = np.sqrt(v)
    return a._chain(s, 0.5 / s, -0.25 / (s * v))


def square(a):
    return a * a


def lift(point) -> List[Jet2]:
    """Seed independent variables.

    ``point`` has shape ``(d,)`` or ``(batch, d)``; component ``i`` of the
    result has value ``point[..., i]``, unit gradient ``e_i`` and zero Hessian.
    """
    point = np.asarray(point, dtype=float)
    if point.ndim == 0 or point.shape[-1] < 1:
        raise ValueError("lift needs at least one variable")
    d = point.shape[-1]
    batch = point.shape[:-1]
    eye = np.eye(d)
    zeros = np.zeros(batch + (d, d))
    return [
        Jet2(point[..., i], np.broadcast_to(eye[i], batch + (d,)), zeros)
        for i in range(d)
    ]


def jet_derivatives(f: Callable[[Sequence[Jet2]], Jet2], point) -> Tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of ``f`` at a single point."""
    jet = f(lift(point))
    if not isinstance(jet, Jet2):
        d = np.asarray(point).shape[-1]
        return float(jet), np.zeros(d), np.zeros((d, d))
    return float(jet.value), np.array(jet.grad), np.array(jet.hess)


def _rel(err: float, scale: float) -> float:
    # relative above unit scale, absolute below it: a vanishing derivative
    # must not turn roundoff into a large relative error
    return err / max(scale, 1.0)


def fd_check(f: Callable[[Sequence[Jet2]], Jet2], point, h: float = 1e-5) -> Tuple[float, float]:
    """Compare jet derivatives of ``f`` with central differences of its values.

    ``f`` must work on both jets and plain floats.  Returns the max gradient and
    Hessian discrepancies, each divided by max(1, infinity norm of the jet
    result).  The gradient uses a five-point central difference with step
    ``h``.  The Hessian uses the four-point stencil at steps ``k = max(h, 1e-3)``
    and ``k/2`` combined by Richardson extrapolation, which keeps cancellation
    error small and the truncation error at O(k^4).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.size == 0:
        raise ValueError("fd_check needs a nonempty 1-D point")
    d = point.size
    _, g, H = jet_derivatives(f, point)

    def value(p):
        out = f(list(p))
        return float(out.value) if isinstance(out, Jet2) else float(out)

    eye = np.eye(d)
    # five-point central difference, truncation error O(h^4)
    g_fd = np.array(
        [
            (
                8.0 * (value(point + h * eye[i]) - value(point - h * eye[i]))
                - (value(point + 2 * h * eye[i]) - value(point - 2 * h * eye[i]))
            )
            / (12 * h)
            for i in range(d)
        ]
    )
    def stencil(k: float) -> np.ndarray:
        out = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                ei, ej = k * eye[i], k * eye[j]
                out[i, j] = out[j, i] = (
                    value(point + ei + ej)
                    - value(point + ei - ej)
                    - value(point - ei + ej)
                    + value(point - ei - ej)
                ) / (4 * k * k)
        return out

    k = max(h, 1e-3)
    # Richardson extrapolation cancels the O(k^2) truncation term
    H_fd = (4.0 * stencil(0.5 * k) - stencil(k)) / 3.0
    grad_err = _rel(np.max(np.abs(g - g_fd)), np.max(np.abs(g)))
    hess_err = _rel(np.max(np.abs(H - H_fd)), np.max(np.abs(H)))
    return float(grad_err), float(hess_err)
