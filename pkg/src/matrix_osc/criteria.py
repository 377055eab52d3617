"""Checkers for the sufficient conditions of oscillation and non-oscillation.

Every checker returns a :class:`CriterionReport`. Conditions that quantify
over infinite sequences or improper integrals are checked on finite
partitions and horizons; reports say so in their notes.

Iterated integrals of the form

    G(t) = int_xi^t exp{ +/- int_xi^tau [a + q I(xi; .)] } f(tau) dtau,
    I(xi; s) = int_xi^s exp{-int_u^s a} g(u) du,

are evaluated as one small ODE per cell, using I' = g - a I, I(xi) = 0,
instead of nesting quadratures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .integrate import IntegratorConfig, Trajectory, integrate_matrix_system, integrate_scalar_system
from .oscillation import detect_scalar_zeros, detect_zeros
from .expr import depends_on_t
from .quadrature import Antiderivative, ConstantRateAntiderivative, quad
from .system import DEFAULT_EPS_Q, CoefficientSystem, F_k, a_jk, eval_matrix, q_k

__all__ = [
    "CRITERIA",
    "VERDICTS",
    "CriterionReport",
    "Partition",
    "SIGN_TOL",
    "quad_I_k",
    "quad_Itilde",
    "lagrangian_L_k",
    "check_condition_I",
    "check_condition_II",
    "check_condition_III",
    "check_condition_IV",
    "find_oscillation_windows",
    "check_lemma22",
    "check_thm34",
    "offdiag_closed_form",
    "theorem_verdict",
    "sign_grid",
]

CRITERIA = (
    "cond_I",
    "cond_II",
    "cond_III",
    "cond_IV",
    "lemma22_A",
    "lemma22_B",
    "thm34_C",
    "thm34_D1",
    "thm34_D2",
    "windows_IVm",
    "thm31",
    "cor31",
    "cor32",
    "thm33",
    "thm34",
)
VERDICTS = ("holds", "fails", "undecided_at_horizon")

SIGN_TOL = 1e-9
POINTS_PER_UNIT = 400
MAX_GRID = 1_000_000
MIN_GRID = 100
IV_TOL = 1e-9
CELL_SUBGRID = 50


@dataclass
class CriterionReport:
    criterion: str
    verdict: str
    margin: float
    witnesses: list = field(default_factory=list)
    notes: str = ""
    components: list = field(default_factory=list)

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    @property
    def supported(self) -> bool:
        """Holds, or holds as far as a finite horizon can tell."""
        return self.verdict != "fails"

    def to_dict(self) -> dict:
        margin = self.margin
        if margin is not None and not math.isfinite(margin):
            margin = None
        return {
            "criterion": self.criterion,
            "verdict": self.verdict,
            "margin": margin,
            "witnesses": _jsonable(self.witnesses),
            "notes": self.notes,
            "components": [c.to_dict() for c in self.components],
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


@dataclass(frozen=True)
class Partition:
    """Finite increasing sequence t0 = xi_0 < xi_1 < ... < xi_n."""

    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if len(pts) < 2:
            raise ValueError("a partition needs at least two points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("partition points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def trivial(cls, t0: float, horizon: float) -> "Partition":
        return cls((t0, horizon))

    @classmethod
    def uniform(cls, t0: float, horizon: float, step: float) -> "Partition":
        n = max(1, int(math.ceil((horizon - t0) / step - 1e-12)))
        return cls(tuple(np.minimum(t0 + step * np.arange(n + 1), horizon)))

    @property
    def cells(self):
        return list(zip(self.points[:-1], self.points[1:]))

    def to_list(self) -> list:
        return list(self.points)


# --------------------------------------------------------------------------
# Scalar coefficient access. Flat (P, Q, R, S) indices, 0-based row-major.


def _ix(which: str, i: int, k: int) -> int:
    return "PQRS".index(which) * 4 + 2 * (i - 1) + (k - 1)


def _F_scalar(c, k: int, eps_q: float) -> float:
    m = 3 - k
    r = c[_ix("R", k, k)]
    q = c[_ix("Q", m, m)]
    if abs(q) > eps_q:
        b = c[_ix("P", m, k)] - c[_ix("S", k, m)]
        return r - b * b / (4.0 * q)
    return r


def _a_scalar(c, j: int, k: int) -> float:
    return c[_ix("P", j, j)] - c[_ix("S", k, k)]


def sign_grid(lo: float, hi: float, per_unit: int = POINTS_PER_UNIT) -> np.ndarray:
    n = int(min(MAX_GRID, max(MIN_GRID, math.ceil((hi - lo) * per_unit) + 1)))
    return np.linspace(lo, hi, n)


def _span_of(cs, interval):
    lo, hi = float(interval[0]), float(interval[1])
    if lo < cs.t0 - 1e-12 * max(1.0, abs(cs.t0)):
        raise ValueError(f"interval starts at {lo}, before t0 = {cs.t0}")
    if hi <= lo:
        raise ValueError("interval must have positive length")
    return lo, hi


# --------------------------------------------------------------------------
# Iterated integrals


def _weighted_integral(cs, rate, f, tau, t, tol=1e-12):
    """int_tau^t exp{-int_s^t rate} f(s) ds."""
    tau, t = float(tau), float(t)
    if t < tau:
        raise ValueError("need tau <= t")
    if t == tau:
        return 0.0
    A = Antiderivative(rate, tau, t, tol=tol)
    At = A(t)
    return quad(lambda s: math.exp(A(s) - At) * f(s), tau, t, epsabs=tol, epsrel=tol)


def quad_I_k(cs: CoefficientSystem, k: int, tau: float, t: float) -> float:
    """I_k(tau; t) = int_tau^t exp{-int_s^t a_kk} r_kk(s) ds."""
    _check_index(k)
    return _weighted_integral(
        cs,
        lambda s: a_jk(cs, k, k, s),
        lambda s: float(eval_matrix(cs, "R", s)[k - 1, k - 1]),
        tau,
        t,
    )


def quad_Itilde(cs: CoefficientSystem, j: int, which: int, tau: float, t: float, eps_q: float = DEFAULT_EPS_Q) -> float:
    """Itilde_1 weights F_j with a_jj; Itilde_2 is minus the same integral
    for index 3 - j."""
    _check_index(j)
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    k = j if which == 1 else 3 - j
    value = _weighted_integral(
        cs,
        lambda s: a_jk(cs, k, k, s),
        lambda s: float(F_k(cs, k, s, eps_q)),
        tau,
        t,
    )
    return value if which == 1 else -value


def lagrangian_L_k(cs: CoefficientSystem, k: int, u: float, v: float, t):
    """q_{3-k} u v + p_{3-k,k} u - s_{k,3-k} v - r_kk."""
    _check_index(k)
    m = 3 - k
    P, Q, R, S = (eval_matrix(cs, w, t) for w in "PQRS")
    return Q[m - 1, m - 1] * u * v + P[m - 1, k - 1] * u - S[k - 1, m - 1] * v - R[k - 1, k - 1]


def _check_index(k):
    if k not in (1, 2):
        raise ValueError("index must be 1 or 2")


# --------------------------------------------------------------------------
# Condition I and its sign checks


def _first_violation(ts, bad):
    idx = np.flatnonzero(bad)
    return None if not len(idx) else float(ts[idx[0]])


def _cond_I_mask(cs, j, ts, tol, eps_q):
    """Pointwise truth of condition I on ``ts`` plus the worst q value."""
    m = 3 - j
    q1 = q_k(cs, 1, ts) * np.ones_like(ts)
    q2 = q_k(cs, 2, ts) * np.ones_like(ts)
    qm = q1 if m == 1 else q2
    mismatch = (eval_matrix(cs, "P", ts)[m - 1, j - 1] - eval_matrix(cs, "S", ts)[j - 1, m - 1]) * np.ones_like(ts)
    ok = (q1 >= -tol) & (q2 >= -tol)
    ok &= ~((np.abs(qm) <= eps_q) & (np.abs(mismatch) > tol))
    return ok, float(min(q1.min(), q2.min()))


def check_condition_I(cs: CoefficientSystem, j: int, interval, grid: int | None = None, eps_q: float = DEFAULT_EPS_Q, tol: float = SIGN_TOL, ray: bool = False) -> CriterionReport:
    """q_1, q_2 >= 0 and, where q_{3-j} vanishes, p_{3-j,j} = s_{j,3-j}.

    ``interval`` is [t1, t2]; with ``ray`` set it stands for the finite
    stretch of [t0, +inf) that is actually sampled.
    """
    _check_index(j)
    lo, hi = _span_of(cs, interval)
    if grid is not None and grid < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}")
    ts = np.linspace(lo, hi, grid) if grid else sign_grid(lo, hi)
    ok, worst_q = _cond_I_mask(cs, j, ts, tol, eps_q)
    where = f"[{lo:g}, {hi:g}]"
    note = f"sampled {len(ts)} points on {where}" + (" (finite part of the ray)" if ray else "")
    bad = _first_violation(ts, ~ok)
    if bad is not None:
        return CriterionReport("cond_I", "fails", worst_q, [bad], note + f"; first violation at t = {bad:.12g}")
    return CriterionReport("cond_I", "holds", worst_q, [[lo, hi]], note)


# --------------------------------------------------------------------------
# Condition II: the reduced scalar system oscillates (empirically)


def check_condition_II(cs: CoefficientSystem, j: int, horizon: float, angles: int = 4, min_zeros: int = 2, cfg: IntegratorConfig | None = None, eps_q: float = DEFAULT_EPS_Q) -> CriterionReport:
    """Integrate the scalar system from several initial angles and count phi zeros.

    Evidence, not proof: it says the solutions tried change sign at least
    ``min_zeros`` times before ``horizon``.
    """
    _check_index(j)
    counts, witnesses = [], []
    for i in range(angles):
        th = math.pi * i / angles
        traj = integrate_scalar_system(cs, j, math.sin(th), math.cos(th), (cs.t0, horizon), cfg, eps_q)
        if traj.termination.status != "reached_end":
            return CriterionReport("cond_II", "fails", 0.0, [traj.span[1]], f"scalar integration stopped: {traj.termination.reason}")
        zs = detect_scalar_zeros(traj)
        counts.append(len(zs))
        witnesses.append(zs.times[:min_zeros])
    fewest = min(counts)
    note = f"empirical: phi zero counts {counts} on [{cs.t0:g}, {horizon:g}] for {angles} initial angles"
    verdict = "undecided_at_horizon" if fewest >= min_zeros else "fails"
    return CriterionReport("cond_II", verdict, float(fewest - min_zeros), witnesses, note)


# --------------------------------------------------------------------------
# Condition III: divergence of two weighted integrals


def _weight_antiderivative(cs, j, lo, hi):
    return Antiderivative(lambda s: a_jk(cs, j, j, s) * np.ones_like(s), lo, hi)


def _partials_III(cs, j, checkpoints, eps_q):
    lo = cs.t0
    A = _weight_antiderivative(cs, j, lo, checkpoints[-1])

    def gq(s):
        return float(q_k(cs, j, s)) * math.exp(-A(s))

    def gF(s):
        return -float(F_k(cs, j, s, eps_q)) * math.exp(A(s))

    Gq, GF = [], []
    acc_q = acc_F = 0.0
    prev = lo
    for T in checkpoints:
        breaks = _kinks(prev, T)
        acc_q += quad(gq, prev, T, epsabs=1e-11, epsrel=1e-11, points=breaks, limit=2000)
        acc_F += quad(gF, prev, T, epsabs=1e-11, epsrel=1e-11, points=breaks, limit=2000)
        Gq.append(acc_q)
        GF.append(acc_F)
        prev = T
    return np.array(Gq), np.array(GF)


def _kinks(lo, hi):
    """Multiples of pi inside (lo, hi): helps quadrature over sin-based kinks."""
    k0, k1 = math.floor(lo / math.pi) + 1, math.ceil(hi / math.pi) - 1
    if k1 - k0 > 500:
        return None
    return [k * math.pi for k in range(k0, k1 + 1)]


def check_condition_III(cs: CoefficientSystem, j: int, horizon: float, threshold: float = 10.0, checkpoints: int = 20, eps_q: float = DEFAULT_EPS_Q) -> CriterionReport:
    """Partial integrals of the two divergent integrals at checkpoints.

    Divergence cannot be established numerically; the best verdict is
    ``undecided_at_horizon`` (supported). The margin is min(G_q, G_F) at the
    horizon minus ``threshold``.
    """
    _check_index(j)
    if not horizon > cs.t0:
        raise ValueError("horizon must exceed t0")
    ts = np.linspace(cs.t0, horizon, checkpoints + 1)[1:]
    Gq, GF = _partials_III(cs, j, ts, eps_q)
    tail = slice(-5, None)
    margin = float(min(Gq[-1], GF[-1]) - threshold)
    witnesses = [{"t": float(t), "G_q": float(a), "G_F": float(b)} for t, a, b in zip(ts, Gq, GF)]
    slack = 1e-9 * max(1.0, float(np.max(np.abs(np.concatenate([Gq, GF])))))
    nondecreasing = all(np.all(np.diff(G[tail]) >= -slack) for G in (Gq, GF))
    if margin >= 0 and nondecreasing:
        return CriterionReport(
            "cond_III", "undecided_at_horizon", margin, witnesses,
            f"supported: both partial integrals exceed {threshold:g} and are nondecreasing over the last 5 checkpoints; divergence itself is not provable numerically",
        )
    why = []
    if margin < 0:
        why.append(f"a partial integral stays below {threshold:g} at T = {horizon:g}")
    if not nondecreasing:
        why.append("a partial integral decreases over the tail")
    return CriterionReport("cond_III", "fails", margin, witnesses, "; ".join(why))


# --------------------------------------------------------------------------
# Condition IV: the pi threshold


def _iv_integrand(cs, j, A, eps_q):
    def g(s):
        w = A(s)
        q = q_k(cs, j, s) * np.exp(-w)
        f = -F_k(cs, j, s, eps_q) * np.exp(w)
        return np.minimum(q, f)

    return g


def _anchored(cs, j, t1, t2):
    """A(s) = int_{t1}^s a_jj, exact when a_jj has no t in it."""
    if not any(depends_on_t(cs.entry(w, j, j)) for w in "PS"):
        return ConstantRateAntiderivative(float(a_jk(cs, j, j, t1)), t1, t2)
    return _weight_antiderivative(cs, j, t1, t2)


def iv_integral(cs: CoefficientSystem, j: int, t1: float, t2: float, subdivisions: int = 1, eps_q: float = DEFAULT_EPS_Q) -> float:
    """int_{t1}^{t2} min[q_j e^{-A}, -F_j e^{A}] with A = int_{t1} a_jj."""
    A = _anchored(cs, j, t1, t2)
    g = _iv_integrand(cs, j, A, eps_q)

    def f(s):
        return float(g(s))

    edges = np.linspace(t1, t2, subdivisions + 1)
    return float(sum(quad(f, a, b, epsabs=1e-12, epsrel=1e-12, points=_kinks(a, b), limit=2000) for a, b in zip(edges[:-1], edges[1:])))


def check_condition_IV(cs: CoefficientSystem, j: int, t1: float, t2: float, subdivisions: int = 1, eps_q: float = DEFAULT_EPS_Q, tol: float = IV_TOL) -> CriterionReport:
    """margin = int min[...] - pi on [t1, t2]; holds iff margin >= -tol."""
    _check_index(j)
    t1, t2 = _span_of(cs, (t1, t2))
    margin = iv_integral(cs, j, t1, t2, subdivisions, eps_q) - math.pi
    note = f"integral over [{t1:.12g}, {t2:.12g}] minus pi"
    if margin >= -tol:
        return CriterionReport("cond_IV", "holds", margin, [[t1, t2]], note)
    return CriterionReport("cond_IV", "fails", margin, [[t1, t2]], note + "; below pi")


# --------------------------------------------------------------------------
# Oscillation windows


def _runs(mask):
    """(start, end) index pairs of maximal True runs."""
    if not mask.any():
        return []
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts, ends))


def _refine_edge(pred, good: float, bad: float, tol: float = 1e-12) -> float:
    """Boundary of ``pred`` between a point where it holds and one where it fails."""
    while abs(good - bad) > tol * max(1.0, abs(good)):
        mid = 0.5 * (good + bad)
        if mid in (good, bad):
            break
        if pred(mid):
            good = mid
        else:
            bad = mid
    return good


def find_oscillation_windows(cs: CoefficientSystem, j: int, horizon: float, min_gap: float = 0.5, eps_q: float = DEFAULT_EPS_Q, tol: float = SIGN_TOL) -> CriterionReport:
    """Greedy search for disjoint [eta, zeta] where condition I holds and
    the pi threshold is met with the weight anchored at eta.

    Candidate eta values are the left ends of the stretches where
    condition I holds, then steps of ``min_gap`` inside each stretch. For
    each eta the smallest admissible zeta is located by root finding on the
    running integral.
    """
    _check_index(j)
    lo, hi = _span_of(cs, (cs.t0, horizon))
    ts = sign_grid(lo, hi)
    ok, _ = _cond_I_mask(cs, j, ts, tol, eps_q)

    def pointwise(t):
        return bool(_cond_I_mask(cs, j, np.array([t]), tol, eps_q)[0][0])

    windows = []
    for i0, i1 in _runs(ok):
        s = ts[i0] if i0 == 0 else _refine_edge(pointwise, ts[i0], ts[i0 - 1])
        e = ts[i1] if i1 == len(ts) - 1 else _refine_edge(pointwise, ts[i1], ts[i1 + 1])
        eta = s
        while eta < e:
            zeta = _smallest_zeta(cs, j, eta, e, eps_q)
            if zeta is None:
                eta += min_gap
                continue
            windows.append((float(eta), float(zeta)))
            eta = zeta + min_gap
    witnesses = [list(w) for w in windows]
    note = f"{len(windows)} window(s) on [{lo:g}, {hi:g}]; finite-horizon evidence for the infinite family"
    if len(windows) >= 2:
        margin = min(check_condition_IV(cs, j, a, b, eps_q=eps_q).margin for a, b in windows)
        return CriterionReport("windows_IVm", "holds", margin, witnesses, note)
    return CriterionReport("windows_IVm", "fails", float(len(windows) - 2), witnesses, note + "; need at least 2")


def _smallest_zeta(cs, j, eta, end, eps_q):
    if end - eta <= 1e-9:
        return None
    A = _anchored(cs, j, eta, end)
    g = _iv_integrand(cs, j, A, eps_q)
    G = Antiderivative(lambda s: g(s) * np.ones_like(s), eta, end, tol=1e-13)
    target = math.pi - 0.5 * IV_TOL
    if G(end) < target:
        return None
    grid = np.linspace(eta, end, max(8, int((end - eta) * 16)))
    vals = G(grid) - target
    k = int(np.argmax(vals >= 0))
    if k == 0:
        return float(grid[0])
    zeta = brentq(lambda s: G(s) - target, grid[k - 1], grid[k], xtol=1e-13)
    for _ in range(60):
        if zeta >= end or check_condition_IV(cs, j, eta, zeta, eps_q=eps_q).holds:
            break
        zeta = min(end, zeta + 1e-9 * max(1.0, zeta - eta))
    if not check_condition_IV(cs, j, eta, min(zeta, end), eps_q=eps_q).holds:
        return None
    return float(min(zeta, end))


# --------------------------------------------------------------------------
# Cell checks for lemma condition B and conditions D1/D2


def _cell_integral(cs, lo, hi, inner, outer, a_idx, q_idx, sign, eps_q):
    """Solve (I, B, G) on [lo, hi]:

        I' = inner - a I,  B' = sign (a + q I),  G' = e^B outer.

    ``inner``/``outer`` map the flat coefficient tuple to a number.
    """
    coef = cs.coefficients

    def rhs(t, y):
        c = coef(t)
        a = _a_scalar(c, a_idx, a_idx)
        q = c[_ix("Q", q_idx, q_idx)]
        I, B, _ = y
        return [inner(c) - a * I, sign * (a + q * I), math.exp(B) * outer(c)]

    sol = solve_ivp(rhs, (lo, hi), [0.0, 0.0, 0.0], method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    if not sol.success:
        raise ArithmeticError(f"cell integration on [{lo}, {hi}] failed: {sol.message}")
    probe = np.unique(np.concatenate([np.linspace(lo, hi, CELL_SUBGRID), sol.t]))
    return probe, sol.sol(probe)[2]


def _cells_check(cs, partition, inner, outer, a_idx, q_idx, sign, want_nonneg, eps_q, tol):
    """min over cells of +/-G, with the first offending point."""
    worst, witness = math.inf, None
    for lo, hi in partition.cells:
        ts, G = _cell_integral(cs, lo, hi, inner, outer, a_idx, q_idx, sign, eps_q)
        # the condition is stated for t in [xi_m, xi_{m+1}); the right end is kept
        # as a harmless extra probe since G is continuous.
        vals = G if want_nonneg else -G
        scale = max(1.0, float(np.max(np.abs(G))))
        i = int(np.argmin(vals))
        if vals[i] < worst:
            worst = float(vals[i])
        if witness is None and vals[i] < -tol * scale:
            bad = np.flatnonzero(vals < -tol * scale)
            witness = {"cell": [lo, hi], "t": float(ts[bad[0]]), "value": float(G[bad[0]])}
    return worst, witness


def _partition(cs, p, horizon):
    if p is None:
        if horizon is None:
            raise ValueError("give a partition or a horizon")
        return Partition.trivial(cs.t0, horizon)
    p = p if isinstance(p, Partition) else Partition(tuple(p))
    if abs(p.points[0] - cs.t0) > 1e-12 * max(1.0, abs(cs.t0)):
        raise ValueError(f"partition must start at t0 = {cs.t0}")
    return p


_LEMMA_PATTERNS = {
    # entry -> required sign (+1: >= 0, -1: <= 0)
    "sign_pattern_plus": {("R", 1, 2): 1, ("R", 2, 1): -1, ("P", 2, 1): 1, ("S", 1, 2): 1},
    "sign_pattern_minus": {("R", 1, 2): -1, ("R", 2, 1): 1, ("P", 2, 1): -1, ("S", 1, 2): -1},
}
LEMMA_CONES = {
    "sign_pattern_plus": "y11, y22 > 0, y12 >= 0, y21 <= 0",
    "sign_pattern_minus": "y11, y22 > 0, y12 <= 0, y21 >= 0",
}


def check_lemma22(cs: CoefficientSystem, partition_1=None, partition_2=None, mode: str = "sign_pattern_plus", horizon: float | None = None, tol: float = SIGN_TOL) -> CriterionReport:
    """Conditions A and B; the report's components hold each separately.

    B is first tried through the shortcut r_kk >= 0 on the grid; otherwise
    the inequality is checked cell by cell on the supplied partitions.
    """
    if mode not in _LEMMA_PATTERNS:
        raise ValueError(f"mode must be one of {sorted(_LEMMA_PATTERNS)}")
    parts = [_partition(cs, partition_1, horizon), _partition(cs, partition_2, horizon)]
    hi = max(p.points[-1] for p in parts)
    ts = sign_grid(cs.t0, hi)

    # A
    checks = [(("Q", 1, 1), 1), (("Q", 2, 2), 1)] + list(_LEMMA_PATTERNS[mode].items())
    worst, wit = math.inf, []
    for (which, i, k), sgn in checks:
        v = sgn * eval_matrix(cs, which, ts)[i - 1, k - 1] * np.ones_like(ts)
        worst = min(worst, float(v.min()))
        bad = _first_violation(ts, v < -tol)
        if bad is not None:
            wit.append({"entry": f"{which.lower()}{i}{k}", "t": bad})
    A = CriterionReport(
        "lemma22_A", "fails" if wit else "holds", worst, wit or [[cs.t0, hi]],
        f"{mode}; initial cone {LEMMA_CONES[mode]}",
    )

    # B
    r_min = min(float((eval_matrix(cs, "R", ts)[k - 1, k - 1] * np.ones_like(ts)).min()) for k in (1, 2))
    if r_min >= -tol:
        B = CriterionReport("lemma22_B", "holds", r_min, [p.to_list() for p in parts], "r_kk >= 0 on the grid, so any partition works")
    else:
        margins, wits = [], []
        for k, p in zip((1, 2), parts):
            r = _ix("R", k, k)
            m, w = _cells_check(cs, p, lambda c, r=r: c[r], lambda c, r=r: c[r], k, k, 1.0, True, DEFAULT_EPS_Q, tol)
            margins.append(m)
            if w is not None:
                wits.append({"k": k, **w})
        margin = min(margins)
        if wits:
            B = CriterionReport("lemma22_B", "fails", margin, wits, "no admissible partition found up to horizon (the given one fails)")
        else:
            B = CriterionReport("lemma22_B", "holds", margin, [p.to_list() for p in parts], "finite partition checked cell by cell; finite-horizon evidence")
    verdict = "holds" if A.holds and B.holds else "fails"
    report = CriterionReport("thm33", verdict, min(A.margin, B.margin), [], f"Lemma conditions A and B ({mode})", [A, B])
    return report


def check_thm34(cs: CoefficientSystem, j: int, partition_1=None, partition_2=None, eps_q: float = DEFAULT_EPS_Q, horizon: float | None = None, tol: float = SIGN_TOL) -> CriterionReport:
    """Conditions C, D1 and D2 for index ``j``; the components hold each.

    D1 uses the weight exp{+int[a_jj + q_j Itilde_1]}, D2 the weight
    exp{-int[a + q Itilde_2]} for index 3 - j, as stated.
    """
    _check_index(j)
    m = 3 - j
    parts = [_partition(cs, partition_1, horizon), _partition(cs, partition_2, horizon)]
    hi = max(p.points[-1] for p in parts)
    ts = sign_grid(cs.t0, hi)

    # C
    one = np.ones_like(ts)
    qj = q_k(cs, j, ts) * one
    qm = q_k(cs, m, ts) * one
    P, S = eval_matrix(cs, "P", ts), eval_matrix(cs, "S", ts)
    mis_j = (P[j - 1, m - 1] - S[m - 1, j - 1]) * one
    mis_m = (P[m - 1, j - 1] - S[j - 1, m - 1]) * one
    wit = []
    for label, bad in (
        (f"q{j} < 0", qj < -tol),
        (f"q{m} > 0", qm > tol),
        (f"q{j} = 0 but p{j}{m} != s{m}{j}", (np.abs(qj) <= eps_q) & (np.abs(mis_j) > tol)),
        (f"q{m} = 0 but p{m}{j} != s{j}{m}", (np.abs(qm) <= eps_q) & (np.abs(mis_m) > tol)),
    ):
        t = _first_violation(ts, bad)
        if t is not None:
            wit.append({"violation": label, "t": t})
    C = CriterionReport("thm34_C", "fails" if wit else "holds", float(min(qj.min(), -qm.max())), wit or [[cs.t0, hi]], f"j = {j}")

    Fj = F_k(cs, j, ts, eps_q) * one
    Fm = F_k(cs, m, ts, eps_q) * one
    sign_note = "weight exp{+int[a + q Itilde_1]} as stated"
    if Fj.min() >= -tol:
        D1 = CriterionReport("thm34_D1", "holds", float(Fj.min()), [parts[0].to_list()], f"F_{j} >= 0 on the grid; {sign_note}")
    else:
        mg, w = _cells_check(
            cs, parts[0], lambda c: _F_scalar(c, j, eps_q), lambda c: _F_scalar(c, j, eps_q), j, j, 1.0, True, eps_q, tol
        )
        D1 = _cell_report("thm34_D1", mg, w, parts[0], sign_note)
    sign_note = "weight exp{-int[a + q Itilde_2]} as stated"
    if Fm.max() <= tol:
        D2 = CriterionReport("thm34_D2", "holds", float(-Fm.max()), [parts[1].to_list()], f"F_{m} <= 0 on the grid; {sign_note}")
    else:
        # Itilde_2' = -F_m - a Itilde_2
        mg, w = _cells_check(
            cs, parts[1], lambda c: -_F_scalar(c, m, eps_q), lambda c: _F_scalar(c, m, eps_q), m, m, -1.0, False, eps_q, tol
        )
        D2 = _cell_report("thm34_D2", mg, w, parts[1], sign_note)
    verdict = "holds" if C.holds and D1.holds and D2.holds else "fails"
    return CriterionReport("thm34", verdict, min(C.margin, D1.margin, D2.margin), [], f"Theorem conditions C, D1, D2 with j = {j}", [C, D1, D2])


def _cell_report(name, margin, witness, partition, note):
    if witness is not None:
        return CriterionReport(name, "fails", margin, [witness], "no admissible partition found up to horizon (the given one fails); " + note)
    return CriterionReport(name, "holds", margin, [partition.to_list()], "finite partition checked cell by cell; " + note)


# --------------------------------------------------------------------------
# Closed forms for the off-diagonal Riccati entries


def offdiag_closed_form(cs: CoefficientSystem, riccati_traj: Trajectory, t):
    """y12(t), y21(t) from the variation-of-constants formulas, driven by the
    integrated diagonal entries y11, y22 (Q diagonal is assumed)."""
    if riccati_traj.kind != "riccati":
        raise ValueError("offdiag_closed_form needs a riccati trajectory")
    t_a, t_b = riccati_traj.span
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if ts.min() < t_a or ts.max() > t_b:
        raise ValueError(f"t outside the trajectory span [{t_a}, {t_b}]")
    y0 = riccati_traj.states[0]
    coef = cs.coefficients
    i = {name: _ix(*name) for name in [("Q", 1, 1), ("Q", 2, 2), ("P", 1, 2), ("P", 2, 1), ("S", 1, 2), ("S", 2, 1), ("R", 1, 2), ("R", 2, 1)]}

    def rhs(s, z):
        c = coef(s)
        y11, _, _, y22 = riccati_traj._at(s)
        base = c[i["Q", 1, 1]] * y11 + c[i["Q", 2, 2]] * y22
        b12 = base + _a_scalar(c, 2, 1)
        b21 = base + _a_scalar(c, 1, 2)
        f12 = c[i["P", 1, 2]] * y11 - c[i["S", 1, 2]] * y22 - c[i["R", 1, 2]]
        f21 = c[i["P", 2, 1]] * y22 - c[i["S", 2, 1]] * y11 - c[i["R", 2, 1]]
        return [b12, math.exp(z[0]) * f12, b21, math.exp(z[2]) * f21]

    hi = float(ts.max())
    if hi == t_a:
        y12, y21 = np.full(ts.shape, y0[1]), np.full(ts.shape, y0[2])
    else:
        sol = solve_ivp(rhs, (t_a, hi), [0.0] * 4, method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True, max_step=(t_b - t_a) / 50)
        if not sol.success:
            raise ArithmeticError(f"closed-form quadrature failed: {sol.message}")
        B12, J12, B21, J21 = sol.sol(ts)
        y12 = np.exp(-B12) * (y0[1] - J12)
        y21 = np.exp(-B21) * (y0[2] - J21)
    if np.ndim(t) == 0:
        return float(y12[0]), float(y21[0])
    return y12, y21


# --------------------------------------------------------------------------
# Theorem-level verdicts


def theorem_verdict(cs: CoefficientSystem, which: str, j: int = 1, horizon: float | None = None, t1: float | None = None, t2: float | None = None, partition_1=None, partition_2=None, mode: str = "sign_pattern_plus", threshold: float = 10.0, eps_q: float = DEFAULT_EPS_Q) -> CriterionReport:
    """Compose the condition checkers behind one theorem or corollary."""
    if which == "thm31":
        _need(horizon, "horizon")
        I = check_condition_I(cs, j, (cs.t0, horizon), eps_q=eps_q, ray=True)
        II = check_condition_II(cs, j, horizon, eps_q=eps_q)
        return _combine("thm31", [I, II], "oscillation predicted; condition II is empirical")
    if which == "cor31":
        _need(horizon, "horizon")
        I = check_condition_I(cs, j, (cs.t0, horizon), eps_q=eps_q, ray=True)
        III = check_condition_III(cs, j, horizon, threshold, eps_q=eps_q)
        return _combine("cor31", [I, III], "oscillation predicted; divergence checked up to the horizon only")
    if which == "cor32":
        _need(t1, "t1")
        _need(t2, "t2")
        I = check_condition_I(cs, j, (t1, t2), eps_q=eps_q)
        IV = check_condition_IV(cs, j, t1, t2, eps_q=eps_q)
        return _combine("cor32", [I, IV], f"oscillation on [{t1:g}, {t2:g}] predicted")
    if which == "thm33":
        rep = check_lemma22(cs, partition_1, partition_2, mode, horizon)
        rep.notes = f"non-oscillation predicted for every prepared solution starting in the cone {LEMMA_CONES[mode]}; " + rep.notes
        return rep
    if which == "thm34":
        rep = check_thm34(cs, j, partition_1, partition_2, eps_q, horizon)
        rep.notes = "det Phi != 0 and sign det Phi = -sign det Psi predicted for prepared solutions with y11(t0) >= 0, y22(t0) <= 0; " + rep.notes
        return rep
    raise ValueError(f"unknown theorem {which!r}")


def _need(value, name):
    if value is None:
        raise ValueError(f"{name} is required")


def _combine(name, parts, note):
    if any(p.verdict == "fails" for p in parts):
        verdict = "fails"
    elif all(p.verdict == "holds" for p in parts):
        verdict = "holds"
    else:
        verdict = "undecided_at_horizon"
    if verdict == "undecided_at_horizon":
        note = "supported: " + note
    return CriterionReport(name, verdict, min(p.margin for p in parts), [], note, parts)


# --------------------------------------------------------------------------
# Empirical cross-check used by tests and the CLI


def prepared_zero_check(cs: CoefficientSystem, t1: float, t2: float, n: int = 20, seed: int = 42, cfg: IntegratorConfig | None = None) -> list[int]:
    """Count det Phi zeros in [t1, t2] for ``n`` random prepared solutions."""
    rng = np.random.default_rng(seed)
    counts = []
    for _ in range(n):
        Y0 = rng.normal(size=(2, 2))
        Y0 = 0.5 * (Y0 + Y0.T)
        traj = integrate_matrix_system(cs, np.eye(2), Y0, (cs.t0, t2), cfg)
        counts.append(len(detect_zeros(traj, (t1, t2))))
    return counts
