"""Adaptive quadrature helpers shared by the integrators and criteria."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

__all__ = ["QuadratureError", "quad", "Antiderivative", "gauss_legendre"]

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy."""


def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def quad(f, lo: float, hi: float, epsabs: float = 1e-12, epsrel: float = 1e-12, limit: int = 1000, points=None) -> float:
    """scipy's QUADPACK wrapper, raising instead of warning on trouble.

    Roundoff-limited results that already meet 10 * epsabs are accepted.
    """
    if hi == lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        kwargs = {"limit": limit, "full_output": 1}
        if points is not None and len(points):
            kwargs["points"] = [p for p in points if lo < p < hi] or None
        value, abserr, info, *rest = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, **kwargs)
    if rest and abserr > 10 * max(epsabs, epsrel * abs(value)):
        raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge: {rest[0]}")
    return value


class Antiderivative:
    """Dense ``A(s) = integral_{lo}^{s} f`` on ``[lo, hi]``.

    The interval is split adaptively until a 7- and 14-point Gauss rule agree
    on every cell; point values then cost one 14-point rule on a partial cell.
    ``f`` must accept numpy arrays.
    """

    def __init__(self, f, lo: float, hi: float, tol: float = 1e-13, cells: int = 16, max_depth: int = 40):
        if hi < lo:
            raise ValueError("Antiderivative needs lo <= hi")
        self.f = f
        self.lo, self.hi = float(lo), float(hi)
        edges = np.linspace(self.lo, self.hi, max(cells, 1) + 1)
        if hi == lo:
            self.edges = np.array([self.lo, self.hi])
            self.cumulative = np.zeros(2)
            return
        done_lo, done_val = [], []
        todo = np.column_stack([edges[:-1], edges[1:]])
        scale = float(np.sum(np.abs(self._rule(todo[:, 0], todo[:, 1], 14))))
        for _ in range(max_depth):
            coarse = self._rule(todo[:, 0], todo[:, 1], 7)
            fine = self._rule(todo[:, 0], todo[:, 1], 14)
            width = todo[:, 1] - todo[:, 0]
            ok = np.abs(fine - coarse) <= tol * max(1.0, scale) * width / (self.hi - self.lo)
            ok |= width < 1e-12 * max(1.0, abs(self.hi))
            done_lo.extend(todo[ok, 0])
            done_val.extend(fine[ok])
            rest = todo[~ok]
            if not len(rest):
                break
            mid = 0.5 * (rest[:, 0] + rest[:, 1])
            todo = np.concatenate([np.column_stack([rest[:, 0], mid]), np.column_stack([mid, rest[:, 1]])])
        else:
            raise QuadratureError(f"antiderivative on [{lo}, {hi}] did not converge")
        order = np.argsort(done_lo)
        self.edges = np.append(np.asarray(done_lo)[order], self.hi)
        self.cumulative = np.concatenate([[0.0], np.cumsum(np.asarray(done_val)[order])])

    def _rule(self, a, b, n):
        x, w = gauss_legendre(n)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        nodes = a[:, None] + (b - a)[:, None] * x[None, :]
        vals = np.asarray(self.f(nodes.ravel()), dtype=float).reshape(nodes.shape)
        return (b - a) * (vals @ w)

    def __call__(self, s):
        scalar = np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < self.lo - 1e-12 * max(1.0, abs(self.lo))) or np.any(s > self.hi + 1e-12 * max(1.0, abs(self.hi))):
            raise ValueError(f"antiderivative queried outside [{self.lo}, {self.hi}]")
        s = np.clip(s, self.lo, self.hi)
        idx = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        left = self.edges[idx]
        out = self.cumulative[idx] + self._rule(left, s, 14)
        return float(out[0]) if scalar else out


class ConstantRateAntiderivative:
    """``A(s) = rate * (s - lo)``; used when the integrand has no t in it."""

    def __init__(self, rate: float, lo: float, hi: float):
        self.rate, self.lo, self.hi = float(rate), float(lo), float(hi)

    def __call__(self, s):
        out = self.rate * (np.asarray(s, dtype=float) - self.lo)
        return float(out) if np.ndim(out) == 0 else out
