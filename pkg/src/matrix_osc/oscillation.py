"""Zeros of det Phi on numerical solutions, prepared-ness, and sign identities.

Everything here is a statement about a finite, integrated horizon. Prepared
2x2 solutions routinely give det Phi double zeros (det = sin^2 t is the
model case), so extrema of det Phi that touch zero count as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .integrate import Trajectory
from .system import eval_matrix

__all__ = [
    "Zero",
    "ZeroList",
    "PreparedCheck",
    "Classification",
    "SignIdentityReport",
    "detect_zeros",
    "detect_scalar_zeros",
    "check_prepared",
    "classify_solution",
    "verify_sign_identity",
    "zero_report",
]

DEFAULT_TOL_T = 1e-10
# Near a double zero both factors of det Phi vanish, so its numerical error is
# of order (rtol |Phi|)^2; genuine excursions of split double zeros can be as
# small as 1e-12 relative to the solution size.
DEFAULT_TOUCH_TOL = 1e-12


@dataclass(frozen=True)
class Zero:
    t: float
    kind: str  # transversal | tangential
    bracket: tuple[float, float]

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "bracket": list(self.bracket)}


@dataclass
class ZeroList:
    zeros: list = field(default_factory=list)
    interval: tuple[float, float] | None = None

    def __len__(self):
        return len(self.zeros)

    def __iter__(self):
        return iter(self.zeros)

    @property
    def times(self) -> list[float]:
        return [z.t for z in self.zeros]

    def in_window(self, lo: float, hi: float) -> list[Zero]:
        return [z for z in self.zeros if lo <= z.t <= hi]

    def to_dict(self) -> dict:
        return {"zeros": [z.to_dict() for z in self.zeros]}


@dataclass(frozen=True)
class PreparedCheck:
    is_prepared: bool
    max_asymmetry: float
    initial_asymmetry: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "is_prepared": self.is_prepared,
            "max_asymmetry": self.max_asymmetry,
            "initial_asymmetry": self.initial_asymmetry,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class Classification:
    kind: str  # oscillatory_on | nonoscillatory_up_to
    interval: tuple[float, float]
    zeros: ZeroList

    @property
    def oscillatory(self) -> bool:
        return self.kind == "oscillatory_on"

    @property
    def n_zeros(self) -> int:
        return len(self.zeros)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "interval": list(self.interval), "n_zeros": self.n_zeros}


@dataclass(frozen=True)
class SignIdentityReport:
    mode: str
    holds: bool
    checked: int
    first_violation: float | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "holds": self.holds,
            "checked": self.checked,
            "first_violation": self.first_violation,
            "detail": self.detail,
        }


# --------------------------------------------------------------------------


def _det2(M):
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _interval(traj: Trajectory, interval):
    lo, hi = traj.span if interval is None else (float(interval[0]), float(interval[1]))
    t_a, t_b = traj.span
    if lo < t_a - 1e-12 * max(1.0, abs(t_a)) or hi > t_b + 1e-12 * max(1.0, abs(t_b)) or hi < lo:
        raise ValueError(f"interval [{lo}, {hi}] is not covered by the trajectory span [{t_a}, {t_b}]")
    return max(lo, t_a), min(hi, t_b)


def _sample_grid(traj: Trajectory, lo: float, hi: float, per_step: int) -> np.ndarray:
    nodes = traj.times[(traj.times >= lo) & (traj.times <= hi)]
    edges = np.unique(np.concatenate([[lo], nodes, [hi]]))
    frac = np.arange(per_step) / per_step
    grid = (edges[:-1, None] + np.diff(edges)[:, None] * frac[None, :]).ravel()
    return np.append(grid, hi)


def _det_functions(traj: Trajectory):
    """det Phi, its derivative tr(adj(Phi) Phi'), and the solution size
    (|Phi|_F^2 + |Psi|_F^2) / 2 used to judge whether an extremum touches 0."""
    cs = traj.meta.get("system")

    def split(t):
        ys = traj(t)
        return ys[..., :4].reshape(ys.shape[:-1] + (2, 2)), ys[..., 4:].reshape(ys.shape[:-1] + (2, 2))

    def D(t):
        return _det2(traj.phi(t))

    def Dprime(t):
        Phi, Psi = split(t)
        if cs is None:
            dPhi = traj.derivative(t)[..., :4].reshape(Phi.shape)
        elif np.ndim(t) == 0:
            c = cs.coefficients(float(t))
            P = np.array(c[0:4]).reshape(2, 2)
            Q = np.array(c[4:8]).reshape(2, 2)
            dPhi = P @ Phi + Q @ Psi
        else:
            P = np.moveaxis(eval_matrix(cs, "P", t), -1, 0)
            Q = np.moveaxis(eval_matrix(cs, "Q", t), -1, 0)
            dPhi = P @ Phi + Q @ Psi
        a, b, c_, d = Phi[..., 0, 0], Phi[..., 0, 1], Phi[..., 1, 0], Phi[..., 1, 1]
        return d * dPhi[..., 0, 0] - b * dPhi[..., 1, 0] - c_ * dPhi[..., 0, 1] + a * dPhi[..., 1, 1]

    def size(t):
        y = traj(t)
        return 0.5 * np.sum(y * y, axis=-1)

    return D, Dprime, size


def _refine(f, lo, hi, tol):
    """Root of ``f`` in a sign-change bracket, plus a bracket of width ~tol."""
    root = brentq(f, lo, hi, xtol=tol / 4, rtol=4 * np.finfo(float).eps)
    a, b = max(lo, root - tol / 2), min(hi, root + tol / 2)
    fa, fb = f(a), f(b)
    while fa * fb > 0 and (a > lo or b < hi):
        w = 2 * (b - a)
        a, b = max(lo, root - w), min(hi, root + w)
        fa, fb = f(a), f(b)
    return float(root), (float(min(a, root)), float(max(b, root)))


def _scan_zeros(f, fprime, size, grid, vals, dvals, tol_t, touch_tol):
    zeros: list[Zero] = []
    n = len(grid)
    if n < 2 or not np.any(vals):
        return zeros
    for i in np.flatnonzero(vals == 0.0):
        left = vals[i - 1] if i > 0 else vals[min(i + 1, n - 1)]
        right = vals[i + 1] if i < n - 1 else vals[max(i - 1, 0)]
        kind = "transversal" if left * right < 0 else "tangential"
        zeros.append(Zero(float(grid[i]), kind, (float(grid[i]), float(grid[i]))))
    va, vb = vals[:-1], vals[1:]
    for i in np.flatnonzero(va * vb < 0):
        t, br = _refine(f, grid[i], grid[i + 1], tol_t)
        zeros.append(Zero(t, "transversal", br))
    if dvals is not None:
        pos = dvals >= 0
        turn = (pos[:-1] != pos[1:]) & (va * vb > 0)
        for i in np.flatnonzero(turn):
            a, b = grid[i], grid[i + 1]
            t_ext, br = _refine(fprime, a, b, tol_t)
            v_ext = f(t_ext)
            if abs(v_ext) <= touch_tol * size(t_ext):
                zeros.append(Zero(t_ext, "tangential", br))
            elif (v_ext > 0) != (va[i] > 0):
                for lo, hi in ((a, t_ext), (t_ext, b)):
                    t, br2 = _refine(f, lo, hi, tol_t)
                    zeros.append(Zero(t, "transversal", br2))
    zeros.sort(key=lambda z: z.t)
    if dvals is not None:
        zeros = _merge_touching(zeros, f, fprime, size, touch_tol, tol_t)
    return zeros


def _merge_touching(zeros, f, fprime, size, touch_tol, tol_t):
    """A double zero perturbed by roundoff shows up as two sign changes
    enclosing a tiny excursion. Two neighbouring transversal zeros whose
    excursion stays within the touch tolerance are one tangential zero."""
    out: list[Zero] = []
    for z in zeros:
        prev = out[-1] if out else None
        if prev is not None and prev.kind == "transversal" and z.kind == "transversal" and z.t > prev.t:
            lo, hi = prev.t, z.t
            d_lo, d_hi = fprime(lo), fprime(hi)
            t_ext = brentq(fprime, lo, hi, xtol=tol_t / 4) if d_lo * d_hi < 0 else 0.5 * (lo + hi)
            if abs(f(t_ext)) <= touch_tol * size(t_ext):
                out[-1] = Zero(float(t_ext), "tangential", (prev.bracket[0], z.bracket[1]))
                continue
        out.append(z)
    return out


def detect_zeros(traj: Trajectory, interval=None, tol_t: float = DEFAULT_TOL_T, touch_tol: float = DEFAULT_TOUCH_TOL, per_step: int = 8) -> ZeroList:
    """Zeros of det Phi on ``interval`` (defaults to the whole span).

    Sign changes are refined by root bracketing on det Phi. A local extremum
    of det Phi is a tangential zero when |det Phi| there is at most
    touch_tol * (|Phi|_F^2 + |Psi|_F^2) / 2; it is located as a root of
    d/dt det Phi = tr(adj(Phi) Phi'). The size factor keeps the test
    meaningful for growing solutions and equals max|det Phi| = 1 for the
    model case Phi = sin t I, Psi = cos t I.
    """
    if traj.kind != "matrix_pair":
        raise ValueError("detect_zeros needs a matrix_pair trajectory")
    lo, hi = _interval(traj, interval)
    D, Dprime, size = _det_functions(traj)
    grid = _sample_grid(traj, lo, hi, per_step)
    zeros = _scan_zeros(D, Dprime, size, grid, D(grid), Dprime(grid), tol_t, touch_tol)
    return ZeroList(zeros, (lo, hi))


def detect_scalar_zeros(traj: Trajectory, interval=None, tol_t: float = DEFAULT_TOL_T, per_step: int = 8) -> ZeroList:
    """Zeros of phi for a scalar_pair trajectory (sign changes only)."""
    if traj.kind != "scalar_pair":
        raise ValueError("detect_scalar_zeros needs a scalar_pair trajectory")
    lo, hi = _interval(traj, interval)
    grid = _sample_grid(traj, lo, hi, per_step)

    def phi(t):
        return traj(t)[..., 0]

    zeros = _scan_zeros(phi, None, None, grid, phi(grid), None, tol_t, 0.0)
    return ZeroList(zeros, (lo, hi))


def _asymmetry(Phi, Psi):
    A = np.swapaxes(Phi, -1, -2) @ Psi - np.swapaxes(Psi, -1, -2) @ Phi
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def check_prepared(traj: Trajectory, probes: int = 100, tol: float = 1e-6) -> PreparedCheck:
    """Is Phi^T Psi symmetric along the trajectory?

    The asymmetry at a probe is ||Phi^T Psi - Psi^T Phi|| / (1 + ||Phi|| ||Psi||)
    in the spectral norm; the initial value is also reported unscaled.
    """
    if probes < 2:
        raise ValueError("need at least two probes")
    if traj.kind != "matrix_pair":
        raise ValueError("check_prepared needs a matrix_pair trajectory")
    lo, hi = traj.span
    ts = np.linspace(lo, hi, probes)
    ys = traj(ts)
    Phi = ys[:, :4].reshape(-1, 2, 2)
    Psi = ys[:, 4:].reshape(-1, 2, 2)
    scale = 1.0 + np.linalg.norm(Phi, ord=2, axis=(1, 2)) * np.linalg.norm(Psi, ord=2, axis=(1, 2))
    asym = _asymmetry(Phi, Psi) / scale
    Phi0 = traj.states[0, :4].reshape(2, 2)
    Psi0 = traj.states[0, 4:].reshape(2, 2)
    initial = float(_asymmetry(Phi0, Psi0))
    worst = float(np.max(asym))
    return PreparedCheck(worst <= tol, worst, initial, tol)


def classify_solution(traj: Trajectory, horizon: float | None = None, **zero_kwargs) -> Classification:
    """Oscillatory on [t_a, horizon] if det Phi vanishes there, else
    non-oscillatory up to ``horizon``. Nothing is said beyond the horizon."""
    t_a, t_b = traj.span
    horizon = t_b if horizon is None else float(horizon)
    if horizon > t_b + 1e-12 * max(1.0, abs(t_b)):
        raise ValueError(f"trajectory ends at {t_b} ({traj.termination.status}), before horizon {horizon}")
    zeros = detect_zeros(traj, (t_a, horizon), **zero_kwargs)
    kind = "oscillatory_on" if len(zeros) else "nonoscillatory_up_to"
    return Classification(kind, (t_a, horizon), zeros)


def verify_sign_identity(traj: Trajectory, mode: str) -> SignIdentityReport:
    """Check sign det Phi = +/- sign det Psi != 0 at every accepted node.

    ``thm33`` demands equal signs, ``thm34`` opposite signs.
    """
    if mode not in ("thm33", "thm34"):
        raise ValueError("mode must be 'thm33' or 'thm34'")
    Phi, Psi = traj.node_matrices()
    sp = np.sign(_det2(Phi))
    ss = np.sign(_det2(Psi))
    want = 1.0 if mode == "thm33" else -1.0
    ok = (sp != 0) & (ss != 0) & (sp == want * ss)
    bad = np.flatnonzero(~ok)
    if len(bad):
        i = int(bad[0])
        detail = f"sign det Phi = {sp[i]:+.0f}, sign det Psi = {ss[i]:+.0f}"
        return SignIdentityReport(mode, False, len(ok), float(traj.times[i]), detail)
    return SignIdentityReport(mode, True, len(ok), None)


def zero_report(traj: Trajectory, horizon: float | None = None, probes: int = 100) -> dict:
    """JSON-ready record: zeros, prepared flag and classification."""
    cls = classify_solution(traj, horizon)
    prep = check_prepared(traj, probes)
    return {
        "zeros": [z.to_dict() for z in cls.zeros],
        "prepared": prep.is_prepared,
        "classification": cls.to_dict(),
    }
