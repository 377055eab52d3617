"""Coefficient matrices of the system

    Phi' = P(t) Phi + Q(t) Psi,    Psi' = R(t) Phi + S(t) Psi,

the scalar quantities derived from them, and a catalog of preset systems.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .expr import ExprNode, ExprError, compile_many, depends_on_t, evaluate, parse, to_source

__all__ = [
    "CoefficientSystem",
    "SystemError_",
    "PRESETS",
    "preset",
    "load_problem",
    "problem_from_dict",
    "eval_matrix",
    "a_jk",
    "q_k",
    "F_k",
    "eigenvalues_K",
    "example31_K",
    "DEFAULT_EPS_Q",
]

DEFAULT_EPS_Q = 1e-12
MATRIX_NAMES = ("P", "Q", "R", "S")

Matrix2 = np.ndarray  # shape (2, 2), float


class SystemError_(ValueError):
    """Invalid coefficient system or preset parameters."""


def _as_matrix(entries, params) -> tuple:
    if len(entries) != 2 or any(len(row) != 2 for row in entries):
        raise SystemError_("coefficient matrices must be 2x2")
    return tuple(
        tuple(parse(e, params) if isinstance(e, (str, int, float)) else e for e in row)
        for row in entries
    )


@dataclass(frozen=True)
class CoefficientSystem:
    """Four 2x2 matrices of expressions plus the left end of the domain."""

    P: tuple
    Q: tuple
    R: tuple
    S: tuple
    t0: float = 0.0
    q_diagonal: bool = True
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_text(cls, P, Q, R, S, t0=0.0, params=None, q_diagonal=True, name="custom"):
        params = dict(params or {})
        cs = cls(
            _as_matrix(P, params),
            _as_matrix(Q, params),
            _as_matrix(R, params),
            _as_matrix(S, params),
            float(t0),
            bool(q_diagonal),
            name,
            params,
        )
        cs.validate()
        return cs

    def matrix_exprs(self, which: str) -> tuple:
        if which not in MATRIX_NAMES:
            raise SystemError_(f"unknown matrix {which!r}")
        return getattr(self, which)

    def entry(self, which: str, i: int, k: int) -> ExprNode:
        """Entry (i, k) of a matrix, 1-based as in the usual notation."""
        return self.matrix_exprs(which)[i - 1][k - 1]

    @cached_property
    def _flat(self):
        return tuple(e for which in MATRIX_NAMES for row in getattr(self, which) for e in row)

    @cached_property
    def coefficients(self):
        """``f(t)`` returning the 16 entries of P, Q, R, S in row-major order."""
        return compile_many(self._flat)

    def validate(self, samples: int = 64, span: float = 20.0) -> None:
        ts = self.t0 + np.linspace(0.0, span, samples)
        for which in MATRIX_NAMES:
            for i in (1, 2):
                for k in (1, 2):
                    try:
                        vals = evaluate(self.entry(which, i, k), ts)
                    except ExprError as exc:
                        raise SystemError_(f"{which}[{i}{k}]: {exc}") from exc
                    if not np.all(np.isfinite(vals)):
                        raise SystemError_(f"{which}[{i}{k}] is not finite on sampled t")
        if self.q_diagonal:
            for i, k in ((1, 2), (2, 1)):
                vals = evaluate(self.entry("Q", i, k), ts)
                if np.any(vals != 0.0):
                    raise SystemError_(f"q_diagonal set but Q[{i}{k}] is not identically zero")

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "params": dict(self.params),
            **{w: [[to_source(e) for e in row] for row in getattr(self, w)] for w in MATRIX_NAMES},
            "q_diagonal": self.q_diagonal,
        }


def problem_from_dict(data: Mapping) -> CoefficientSystem:
    """Build a system from the problem-file mapping (already decoded JSON)."""
    missing = [k for k in MATRIX_NAMES if k not in data]
    if missing:
        raise SystemError_(f"problem is missing matrices {missing}")
    return CoefficientSystem.from_text(
        data["P"],
        data["Q"],
        data["R"],
        data["S"],
        t0=data.get("t0", 0.0),
        params=data.get("params", {}),
        q_diagonal=data.get("q_diagonal", True),
        name=data.get("name", "custom"),
    )


def load_problem(path) -> CoefficientSystem:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemError_(f"{path}: malformed JSON at offset {exc.pos}: {exc.msg}") from exc
    return problem_from_dict(data)


# --------------------------------------------------------------------------
# Derived quantities. Every function takes a float or an ndarray of times.


def eval_matrix(cs: CoefficientSystem, which: str, t) -> Matrix2:
    """Entrywise value of P, Q, R or S; array ``t`` gives shape (2, 2, n)."""
    return np.array([[evaluate(e, t) for e in row] for row in cs.matrix_exprs(which)])


def _entry(cs, which, i, k, t):
    return evaluate(cs.entry(which, i, k), t)


def a_jk(cs: CoefficientSystem, j: int, k: int, t):
    """p_jj(t) - s_kk(t)."""
    return _entry(cs, "P", j, j, t) - _entry(cs, "S", k, k, t)


def q_k(cs: CoefficientSystem, k: int, t):
    """k-th diagonal entry of Q."""
    return _entry(cs, "Q", k, k, t)


def F_k(cs: CoefficientSystem, k: int, t, eps_q: float = DEFAULT_EPS_Q):
    """Effective potential of the reduced scalar system for index ``k``.

    r_kk - (p_{3-k,k} - s_{k,3-k})^2 / (4 q_{3-k}) where |q_{3-k}| > eps_q,
    and r_kk elsewhere.
    """
    m = 3 - k
    r = _entry(cs, "R", k, k, t)
    q = _entry(cs, "Q", m, m, t)
    b = _entry(cs, "P", m, k, t) - _entry(cs, "S", k, m, t)
    if np.ndim(t) == 0:
        return r - b * b / (4.0 * q) if abs(q) > eps_q else r
    big = np.abs(q) > eps_q
    safe_q = np.where(big, q, 1.0)
    return np.where(big, r - b * b / (4.0 * safe_q), r)


def eigenvalues_K(K, tol: float = 1e-12) -> tuple[float, float]:
    """Eigenvalues of a symmetric 2x2 matrix, largest first."""
    K = np.asarray(K, dtype=float)
    a, b, c, d = K[0, 0], K[0, 1], K[1, 0], K[1, 1]
    if abs(b - c) > tol * max(1.0, abs(b), abs(c)):
        raise SystemError_("eigenvalues_K expects a symmetric matrix")
    off = 0.5 * (b + c)
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), off)
    return mean + rad, mean - rad


# --------------------------------------------------------------------------
# Presets


def _diag(x, y="0"):
    return [[x, "0"], ["0", y]]


ZERO = [["0", "0"], ["0", "0"]]
IDENTITY = [["1", "0"], ["0", "1"]]


def _example31(a1=1.0, a2=1.0, b=1.0, alpha=2.0, mu=1.0, mu1=1.0, mu2=math.sqrt(2.0)):
    if not alpha > 1:
        raise SystemError_("example31 needs alpha > 1")
    if mu1 == 0 or mu2 == 0:
        raise SystemError_("example31 needs nonzero mu1 and mu2")
    params = dict(a1=a1, a2=a2, b=b, alpha=alpha, mu=mu, mu1=mu1, mu2=mu2)
    # Phi'' + K Phi = 0 in first-order form: Phi' = Psi, Psi' = -K Phi.
    diag = "-(a1*sin(mu1*t) + a2*sin(mu2*t))"
    off = "-(b*cos(mu*t)/t^alpha)"
    R = [[diag, off], [off, diag]]
    return CoefficientSystem.from_text(ZERO, IDENTITY, R, ZERO, t0=1.0, params=params, name="example31")


def _example32():
    q = "max(sin(t), 0)"
    r = "min(sin(t), 0)"
    return CoefficientSystem.from_text(ZERO, _diag(q, q), _diag(r, r), ZERO, t0=0.0, name="example32")


def _example33(lam=math.pi / 2):
    params = {"lambda": lam}
    q = "lambda*sin(t)"
    r = "-(lambda*sin(t))"
    return CoefficientSystem.from_text(ZERO, _diag(q, q), _diag(r, r), ZERO, t0=0.0, params=params, name="example33")


def _remark34():
    return CoefficientSystem.from_text(ZERO, IDENTITY, _diag("-1", "-1"), ZERO, t0=0.0, name="remark34")


def _thm33_demo():
    R = [["1", "0.5"], ["-0.5", "1"]]
    return CoefficientSystem.from_text(ZERO, IDENTITY, R, ZERO, t0=0.0, name="thm33_demo")


def _thm34_demo():
    return CoefficientSystem.from_text(
        ZERO, _diag("1", "-1"), _diag("1", "-1"), ZERO, t0=0.0, name="thm34_demo"
    )


PRESETS = {
    "example31": _example31,
    "example32": _example32,
    "example33": _example33,
    "remark34": _remark34,
    "thm33_demo": _thm33_demo,
    "thm34_demo": _thm34_demo,
}

_PARAM_ALIASES = {"λ": "lam", "lambda": "lam", "α": "alpha", "μ": "mu", "μ1": "mu1", "μ2": "mu2"}


def preset(name: str, **params) -> CoefficientSystem:
    """Return a preset system; keyword parameters override its defaults."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise SystemError_(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    kwargs = {_PARAM_ALIASES.get(k, k): float(v) for k, v in params.items()}
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise SystemError_(f"bad parameters for {name}: {exc}") from None


def example31_K(cs: CoefficientSystem, t) -> Matrix2:
    """K(t) of the second-order form; the preset stores R = -K."""
    return -eval_matrix(cs, "R", t)


def is_constant(node: ExprNode) -> bool:
    return not depends_on_t(node)
