"""Adaptive integration of the matrix system, the matrix Riccati equation,
the reduced scalar system and the Prufer phase equation.

All four flows share one driver around scipy's Dormand-Prince ``RK45``
stepper. Each accepted step keeps its interpolation polynomial, so a
:class:`Trajectory` can be evaluated (and differentiated) anywhere in its span.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45

from .system import DEFAULT_EPS_Q, CoefficientSystem, eval_matrix
from .quadrature import gauss_legendre

__all__ = [
    "IntegratorConfig",
    "Termination",
    "Trajectory",
    "IntegrationError",
    "integrate_matrix_system",
    "integrate_riccati",
    "integrate_scalar_system",
    "integrate_phase",
    "prufer_reconstruct",
    "liouville_det",
    "riccati_residual",
    "MATRIX_COLUMNS",
    "RICCATI_COLUMNS",
]

MATRIX_COLUMNS = ("phi11", "phi12", "phi21", "phi22", "psi11", "psi12", "psi21", "psi22")
RICCATI_COLUMNS = ("y11", "y12", "y21", "y22")
SCALAR_COLUMNS = ("phi", "psi")
PHASE_COLUMNS = ("theta", "int_a", "log_rho", "int_p")


class IntegrationError(RuntimeError):
    """Raised when an integration cannot even start (bad span, bad data)."""


@dataclass
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float | None = None  # None means span / 100
    escape_norm: float = 1e8
    max_nodes: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.escape_norm > 0:
            raise ValueError("escape_norm must be positive")


@dataclass
class Termination:
    status: str = "reached_end"  # reached_end | blow_up | step_failure
    t: float | None = None
    bracket: tuple[float, float] | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        return {"status": self.status, "t": self.t, "bracket": list(self.bracket) if self.bracket else None, "reason": self.reason}


@dataclass
class Trajectory:
    kind: str
    columns: tuple
    times: np.ndarray
    states: np.ndarray
    termination: Termination
    rhs: Callable = field(repr=False)
    # per step: left time, width, left state, interpolation coefficients
    _t_old: np.ndarray = field(repr=False, default=None)
    _h: np.ndarray = field(repr=False, default=None)
    _y_old: np.ndarray = field(repr=False, default=None)
    _Q: np.ndarray = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    def _locate(self, t):
        t0, t1 = self.span
        if np.any(t < t0 - 1e-12 * max(1.0, abs(t0))) or np.any(t > t1 + 1e-12 * max(1.0, abs(t1))):
            raise ValueError(f"t outside trajectory span [{t0}, {t1}]")
        if len(self.times) == 1:
            raise ValueError("trajectory has a single node")
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(idx, 0, len(self.times) - 2)

    def __call__(self, t):
        """State at ``t``: shape (d,) for a scalar, (n, d) for an array."""
        if np.ndim(t) == 0:
            return self._at(float(t))
        scalar = False
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        x = (t - self._t_old[idx]) / self._h[idx]
        order = self._Q.shape[2]
        powers = np.cumprod(np.repeat(x[:, None], order, axis=1), axis=1)
        y = self._y_old[idx] + self._h[idx, None] * np.einsum("nde,ne->nd", self._Q[idx], powers)
        on_node = t == self.times[idx]
        y[on_node] = self.states[idx[on_node]]
        on_next = t == self.times[idx + 1]
        y[on_next] = self.states[idx[on_next] + 1]
        return y[0] if scalar else y

    def _at(self, t: float) -> np.ndarray:
        times = self.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        n = len(times)
        if i < 0 or i >= n - 1:
            if t == times[-1] or (i >= n - 1 and t <= times[-1] + 1e-12 * max(1.0, abs(times[-1]))):
                return self.states[-1].copy()
            if i < 0 and t >= times[0] - 1e-12 * max(1.0, abs(times[0])):
                return self.states[0].copy()
            raise ValueError(f"t={t} outside trajectory span [{times[0]}, {times[-1]}]")
        if t == times[i]:
            return self.states[i].copy()
        x = (t - self._t_old[i]) / self._h[i]
        order = self._Q.shape[2]
        powers = x ** np.arange(1, order + 1)
        return self._y_old[i] + self._h[i] * (self._Q[i] @ powers)

    def derivative(self, t):
        """Time derivative of the interpolating polynomial (not of the ODE)."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        x = (t - self._t_old[idx]) / self._h[idx]
        order = self._Q.shape[2]
        powers = np.concatenate([np.ones((len(t), 1)), np.cumprod(np.repeat(x[:, None], order - 1, axis=1), axis=1)], axis=1)
        powers *= np.arange(1, order + 1)[None, :]
        dy = np.einsum("nde,ne->nd", self._Q[idx], powers)
        return dy[0] if scalar else dy

    def field_at(self, t):
        """Right-hand side of the ODE evaluated on the dense state."""
        if np.ndim(t) == 0:
            return np.asarray(self.rhs(float(t), self(t)))
        ts = np.asarray(t, dtype=float)
        ys = self(ts)
        return np.array([self.rhs(float(ti), yi) for ti, yi in zip(ts, ys)])

    # matrix views --------------------------------------------------------

    def phi(self, t):
        y = self(t)
        if self.kind == "matrix_pair":
            return y[..., :4].reshape(y.shape[:-1] + (2, 2))
        if self.kind in ("scalar_pair",):
            return y[..., 0]
        raise ValueError(f"no phi in a {self.kind} trajectory")

    def psi(self, t):
        y = self(t)
        if self.kind == "matrix_pair":
            return y[..., 4:].reshape(y.shape[:-1] + (2, 2))
        if self.kind in ("scalar_pair",):
            return y[..., 1]
        raise ValueError(f"no psi in a {self.kind} trajectory")

    def Y(self, t):
        """Riccati matrix at ``t``; for a matrix pair, Psi Phi^-1."""
        if self.kind == "riccati":
            y = self(t)
            return y.reshape(y.shape[:-1] + (2, 2))
        if self.kind == "matrix_pair":
            return self.psi(t) @ np.linalg.inv(self.phi(t))
        raise ValueError(f"no Riccati matrix in a {self.kind} trajectory")

    def node_matrices(self):
        """(Phi, Psi) at the accepted nodes, shape (n, 2, 2) each."""
        if self.kind != "matrix_pair":
            raise ValueError("node_matrices needs a matrix_pair trajectory")
        return self.states[:, :4].reshape(-1, 2, 2), self.states[:, 4:].reshape(-1, 2, 2)

    def integrate_over_steps(self, f, t_a: float, t_b: float, n: int = 8) -> float:
        """Integral of ``f(ts, states)`` on [t_a, t_b] using Gauss nodes per step."""
        if t_b < t_a:
            return -self.integrate_over_steps(f, t_b, t_a, n)
        if t_b == t_a:
            return 0.0
        inner = self.times[(self.times > t_a) & (self.times < t_b)]
        edges = np.concatenate([[t_a], inner, [t_b]])
        x, w = gauss_legendre(n)
        width = np.diff(edges)
        nodes = (edges[:-1, None] + width[:, None] * x[None, :]).ravel()
        vals = np.asarray(f(nodes, self(nodes)), dtype=float).reshape(len(width), n)
        return float(np.sum(width * (vals @ w)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("t",) + tuple(self.columns))
            for t, row in zip(self.times, self.states):
                writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


# --------------------------------------------------------------------------
# Driver


def _drive(fun, t_a, y0, t_b, cfg: IntegratorConfig, kind, columns, detect_escape=False):
    if not t_b > t_a:
        raise IntegrationError(f"empty span [{t_a}, {t_b}]")
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise IntegrationError("initial state is not finite")
    max_step = cfg.max_step if cfg.max_step is not None else (t_b - t_a) / 100.0
    solver = RK45(fun, t_a, y0, t_b, rtol=cfg.rtol, atol=cfg.atol, max_step=max_step)
    times = [float(t_a)]
    states = [y0.copy()]
    t_old, hs, y_old, Qs = [], [], [], []
    norms = [float(np.max(np.abs(y0)))]
    termination = Termination("reached_end")

    def growing():
        return len(norms) >= 3 and norms[-3] < norms[-2] < norms[-1]

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            if detect_escape and growing():
                termination = _escape(fun, times[-1], states[-1], message)
            else:
                termination = Termination("step_failure", times[-1], None, str(message))
            break
        y = solver.y
        if not np.all(np.isfinite(y)):
            if detect_escape:
                termination = _escape(fun, times[-1], states[-1], "state became non-finite")
            else:
                termination = Termination("step_failure", times[-1], None, "state became non-finite")
            break
        dense = solver.dense_output()
        t_old.append(dense.t_old)
        hs.append(dense.h)
        y_old.append(dense.y_old)
        Qs.append(dense.Q)
        times.append(float(solver.t))
        states.append(y.copy())
        norms.append(float(np.max(np.abs(y))))
        if detect_escape and norms[-1] > cfg.escape_norm and growing():
            termination = _escape(fun, times[-1], states[-1], "escape norm exceeded")
            break
        if len(times) >= cfg.max_nodes:
            termination = Termination("step_failure", times[-1], None, "max_nodes reached")
            break

    d = len(y0)
    traj = Trajectory(
        kind=kind,
        columns=tuple(columns),
        times=np.array(times),
        states=np.array(states).reshape(-1, d),
        termination=termination,
        rhs=fun,
        _t_old=np.array(t_old),
        _h=np.array(hs),
        _y_old=np.array(y_old).reshape(-1, d),
        _Q=np.array(Qs).reshape(len(Qs), d, -1) if Qs else np.zeros((0, d, 4)),
    )
    return traj


def _escape(fun, t_last, y_last, reason):
    """Blow-up report; the escape time is bracketed, never claimed exact.

    Near a Riccati singularity |y| ~ 1/(T - t), so |y| / |y'| estimates T - t.
    """
    slope = np.asarray(fun(t_last, y_last))
    k = int(np.argmax(np.abs(y_last)))
    size = abs(float(y_last[k]))
    rate = abs(float(slope[k]))
    gap = size / rate if rate > 0 else 0.0
    if not math.isfinite(gap):
        gap = 0.0
    return Termination("blow_up", t_last + gap, (t_last, t_last + 2.0 * gap), reason)


# --------------------------------------------------------------------------
# The four flows


def _matrix_field(cs: CoefficientSystem):
    coef = cs.coefficients

    def fun(t, y):
        (p11, p12, p21, p22, q11, q12, q21, q22, r11, r12, r21, r22, s11, s12, s21, s22) = coef(t)
        f11, f12, f21, f22, g11, g12, g21, g22 = y.tolist()
        return np.array(
            [
                p11 * f11 + p12 * f21 + q11 * g11 + q12 * g21,
                p11 * f12 + p12 * f22 + q11 * g12 + q12 * g22,
                p21 * f11 + p22 * f21 + q21 * g11 + q22 * g21,
                p21 * f12 + p22 * f22 + q21 * g12 + q22 * g22,
                r11 * f11 + r12 * f21 + s11 * g11 + s12 * g21,
                r11 * f12 + r12 * f22 + s11 * g12 + s12 * g22,
                r21 * f11 + r22 * f21 + s21 * g11 + s22 * g21,
                r21 * f12 + r22 * f22 + s21 * g12 + s22 * g22,
            ]
        )

    return fun


def _mm(a, b):
    return (
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    )


def _riccati_field(cs: CoefficientSystem):
    coef = cs.coefficients

    def fun(t, y):
        c = coef(t)
        P, Q, R, S = c[0:4], c[4:8], c[8:12], c[12:16]
        Y = tuple(y.tolist())
        YQY = _mm(_mm(Y, Q), Y)
        YP = _mm(Y, P)
        SY = _mm(S, Y)
        return np.array([-YQY[i] - YP[i] + SY[i] + R[i] for i in range(4)])

    return fun


def _flat2(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise IntegrationError("expected a 2x2 matrix")
    return m.ravel()


def _span(span):
    t_a, t_b = (float(x) for x in span)
    return t_a, t_b


def _check_start(cs, t_a):
    if t_a < cs.t0 - 1e-12:
        raise IntegrationError(f"span starts at {t_a} before t0 = {cs.t0}")


def integrate_matrix_system(cs: CoefficientSystem, Phi0, Psi0, span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Solve Phi' = P Phi + Q Psi, Psi' = R Phi + S Psi on ``span``."""
    cfg = cfg or IntegratorConfig()
    t_a, t_b = _span(span)
    _check_start(cs, t_a)
    y0 = np.concatenate([_flat2(Phi0), _flat2(Psi0)])
    traj = _drive(_matrix_field(cs), t_a, y0, t_b, cfg, "matrix_pair", MATRIX_COLUMNS)
    traj.meta["system"] = cs
    return traj


def integrate_riccati(cs: CoefficientSystem, Y0, span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Solve Y' = -Y Q Y - Y P + S Y + R, stopping at a detected blow-up."""
    cfg = cfg or IntegratorConfig()
    t_a, t_b = _span(span)
    _check_start(cs, t_a)
    traj = _drive(_riccati_field(cs), t_a, _flat2(Y0), t_b, cfg, "riccati", RICCATI_COLUMNS, detect_escape=True)
    traj.meta["system"] = cs
    return traj


def _scalar_coeffs(cs, j, eps_q):
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    coef = cs.coefficients
    m = 3 - j
    # indices into the flat (P, Q, R, S) tuple, 0-based row-major
    i_pjj = 0 + (j - 1) * 3
    i_qj = 4 + (j - 1) * 3
    i_qm = 4 + (m - 1) * 3
    i_rjj = 8 + (j - 1) * 3
    i_sjj = 12 + (j - 1) * 3
    i_p_mj = 0 + (m - 1) * 2 + (j - 1)
    i_s_jm = 12 + (j - 1) * 2 + (m - 1)

    def parts(t):
        c = coef(t)
        qm = c[i_qm]
        F = c[i_rjj]
        if abs(qm) > eps_q:
            b = c[i_p_mj] - c[i_s_jm]
            F = F - b * b / (4.0 * qm)
        return c[i_pjj], c[i_qj], F, c[i_sjj]

    return parts


def integrate_scalar_system(cs, j: int, phi0: float, psi0: float, span, cfg: IntegratorConfig | None = None, eps_q: float = DEFAULT_EPS_Q) -> Trajectory:
    """Solve phi' = p_jj phi + q_j psi, psi' = F_j phi + s_jj psi."""
    cfg = cfg or IntegratorConfig()
    t_a, t_b = _span(span)
    _check_start(cs, t_a)
    parts = _scalar_coeffs(cs, j, eps_q)

    def fun(t, y):
        p, q, F, s = parts(t)
        phi, psi = y.tolist()
        return np.array([p * phi + q * psi, F * phi + s * psi])

    traj = _drive(fun, t_a, [phi0, psi0], t_b, cfg, "scalar_pair", SCALAR_COLUMNS)
    traj.meta["j"] = j
    return traj


def integrate_phase(cs, j: int, theta0: float, t1: float, span=None, cfg: IntegratorConfig | None = None, eps_q: float = DEFAULT_EPS_Q, log_rho0: float = 0.0) -> Trajectory:
    """Solve theta' = Q_j cos^2 theta - R_j sin^2 theta from ``t1``.

    Q_j = exp(-int_{t1}^t a_jj) q_j and R_j = exp(int_{t1}^t a_jj) F_j. The
    weight integral, the log-radius and int p_jj ride along as extra state.
    """
    cfg = cfg or IntegratorConfig()
    span = span if span is not None else (t1, t1 + 10.0)
    t_a, t_b = _span(span)
    if t_a != float(t1):
        raise IntegrationError("phase span must start at the anchor t1")
    _check_start(cs, t_a)
    parts = _scalar_coeffs(cs, j, eps_q)

    def fun(t, y):
        p, q, F, s = parts(t)
        theta, A, _, _ = y.tolist()
        Qw = math.exp(-A) * q
        Rw = math.exp(A) * F
        c, sn = math.cos(theta), math.sin(theta)
        return np.array([Qw * c * c - Rw * sn * sn, p - s, (Qw + Rw) * sn * c, p])

    traj = _drive(fun, t_a, [theta0, 0.0, log_rho0, 0.0], t_b, cfg, "phase", PHASE_COLUMNS)
    traj.meta.update(j=j, t1=float(t1))
    return traj


def prufer_reconstruct(traj: Trajectory, t):
    """(phi, psi) rebuilt from a phase trajectory via the polar substitution.

    phi = exp(int p_jj) rho sin theta, psi = exp(int s_jj) rho cos theta,
    with int s_jj = int p_jj - int a_jj.
    """
    if traj.kind != "phase":
        raise ValueError("prufer_reconstruct needs a phase trajectory")
    y = traj(t)
    theta, A, log_rho, int_p = (y[..., i] for i in range(4))
    phi = np.exp(int_p + log_rho) * np.sin(theta)
    psi = np.exp(int_p - A + log_rho) * np.cos(theta)
    return phi, psi


def prufer_initial(phi0: float, psi0: float) -> tuple[float, float]:
    """(theta0, log rho0) with phi0 = rho sin theta, psi0 = rho cos theta."""
    rho = math.hypot(phi0, psi0)
    if rho == 0:
        raise ValueError("the trivial solution has no phase")
    return math.atan2(phi0, psi0), math.log(rho)


# --------------------------------------------------------------------------
# Liouville formula and the Riccati residual


def liouville_det(cs: CoefficientSystem, traj: Trajectory, t, det_phi_start: float | None = None) -> float:
    """det Phi(t) = det Phi(t_a) exp(int_{t_a}^t tr[P + Q Y]).

    ``traj`` is a Riccati trajectory (give ``det_phi_start``, default 1) or a
    matrix pair, in which case Y = Psi Phi^-1 and det Phi(t_a) come from it.
    """
    t_a = traj.span[0]
    if traj.kind == "matrix_pair":
        start = float(np.linalg.det(traj.phi(t_a))) if det_phi_start is None else det_phi_start

        def Ymats(ts, ys):
            Phi = ys[:, :4].reshape(-1, 2, 2)
            Psi = ys[:, 4:].reshape(-1, 2, 2)
            return Psi @ np.linalg.inv(Phi)

    elif traj.kind == "riccati":
        start = 1.0 if det_phi_start is None else det_phi_start

        def Ymats(ts, ys):
            return ys.reshape(-1, 2, 2)

    else:
        raise ValueError("liouville_det needs a riccati or matrix_pair trajectory")

    def trace(ts, ys):
        P = eval_matrix(cs, "P", ts)
        Q = eval_matrix(cs, "Q", ts)
        Y = Ymats(ts, ys)
        QY = np.einsum("ijn,njk->nik", Q, Y)
        return P[0, 0] + P[1, 1] + QY[:, 0, 0] + QY[:, 1, 1]

    return start * math.exp(traj.integrate_over_steps(trace, t_a, float(t)))


def riccati_residual(cs: CoefficientSystem, traj: Trajectory, t) -> np.ndarray:
    """||Y' + YQY + YP - SY - R|| / (1 + ||Y||^2) at ``t`` for Y = Psi Phi^-1.

    Y' comes from differentiating the dense interpolant of (Phi, Psi), so the
    check does not reuse the vector field that produced the trajectory.
    """
    if traj.kind != "matrix_pair":
        raise ValueError("riccati_residual needs a matrix_pair trajectory")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    ys = traj(ts)
    dys = traj.derivative(ts)
    Phi = ys[:, :4].reshape(-1, 2, 2)
    Psi = ys[:, 4:].reshape(-1, 2, 2)
    dPhi = dys[:, :4].reshape(-1, 2, 2)
    dPsi = dys[:, 4:].reshape(-1, 2, 2)
    inv = np.linalg.inv(Phi)
    Y = Psi @ inv
    dY = dPsi @ inv - Y @ dPhi @ inv
    P, Q, R, S = (np.moveaxis(eval_matrix(cs, w, ts), -1, 0) for w in "PQRS")
    res = dY + Y @ Q @ Y + Y @ P - S @ Y - R
    norm_res = np.linalg.norm(res, ord=2, axis=(1, 2))
    norm_Y = np.linalg.norm(Y, ord=2, axis=(1, 2))
    out = norm_res / (1.0 + norm_Y**2)
    return out[0] if np.ndim(t) == 0 else out
