"""Solvers for the standard-form linear complementarity problem.

Find ``lam`` with ``w = B + A lam >= 0``, ``lam >= 0`` and ``lam . w = 0``.

Three routes are provided: Lemke's complementary pivoting (used by the
time steppers), a semismooth Newton method on the Fischer-Burmeister
reformulation, and brute-force active-set enumeration for small problems.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleLcp

#: complementarity tolerance
EPS_C = 1e-9


class LcpStatus(enum.Enum):
    SOLVED = "solved"
    RAY_TERMINATION = "ray_termination"
    ITERATION_LIMIT = "iteration_limit"
    STALLED_LINE_SEARCH = "stalled_line_search"
    INACCURATE = "inaccurate"


@dataclass(frozen=True)
class LcpProblem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        m = B.size
        if m < 1 or A.shape != (m, m):
            raise ValueError(f"A must be {m}x{m}, got {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("LCP data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def m(self):
        return self.B.size

    def w(self, lam):
        return self.B + self.A @ lam


@dataclass
class LcpSolution:
    lam: np.ndarray
    w: np.ndarray
    status: LcpStatus
    iterations: int = 0
    active: tuple[int, ...] = ()
    merit_history: list[float] = field(default_factory=list)

    @property
    def solved(self):
        return self.status is LcpStatus.SOLVED


def is_complementary(p: LcpProblem, lam, w=None, eps=EPS_C):
    """Check the LCP conditions to tolerance ``eps``."""
    if w is None:
        w = p.w(lam)
    scale = 1.0 + np.max(np.abs(p.B))
    return bool(
        np.all(lam >= -eps) and np.all(w >= -eps) and np.all(np.abs(lam * w) <= eps * scale)
    )


def _finish(p, lam, status, iterations, merit_history=None):
    lam = np.asarray(lam, dtype=float)
    w = p.w(lam)
    if status is LcpStatus.SOLVED and not is_complementary(p, lam, w):
        status = LcpStatus.INACCURATE
    active = tuple(int(i) for i in np.flatnonzero(lam > 0.0))
    return LcpSolution(lam, w, status, iterations, active, merit_history or [])


def _polish(p, lam, support):
    """Re-solve the equality system on ``support`` for a cleaner solution."""
    lam_new = np.zeros(p.m)
    S = np.asarray(sorted(support), dtype=int)
    if S.size:
        try:
            lam_new[S] = np.linalg.solve(p.A[np.ix_(S, S)], -p.B[S])
        except np.linalg.LinAlgError:
            return lam
    if is_complementary(p, lam_new):
        # kill signed zeros / tiny negatives from roundoff
        return np.maximum(lam_new, 0.0)
    return lam


def lemke_solve(p: LcpProblem, max_pivots=None, pivot_tol=1e-12) -> LcpSolution:
    """Lemke's complementary pivoting with covering vector ``d = (1, ..., 1)``.

    Ties in the ratio test are broken lexicographically on the rows of the
    current basis inverse, which makes the pivot sequence deterministic and
    rules out cycling.
    """
    m = p.m
    if max_pivots is None:
        max_pivots = 50 * m
    if np.all(p.B >= 0.0):
        return _finish(p, np.zeros(m), LcpStatus.SOLVED, 0)

    # tableau columns: w_0..w_{m-1}, lam_0..lam_{m-1}, z0, rhs
    z0 = 2 * m
    T = np.zeros((m, 2 * m + 2))
    T[:, :m] = np.eye(m)
    T[:, m : 2 * m] = -p.A
    T[:, z0] = -1.0
    T[:, -1] = p.B
    basis = list(range(m))
    scale = max(1.0, np.max(np.abs(p.A)))

    def pivot(row, col):
        T[row] /= T[row, col]
        for i in range(m):
            if i != row and T[i, col] != 0.0:
                T[i] -= T[i, col] * T[row]
        leaving = basis[row]
        basis[row] = col
        return leaving

    # z0 enters at the most negative rhs; ties go to the smaller index
    row = int(np.argmin(p.B))
    leaving = pivot(row, z0)
    pivots = 1
    while True:
        entering = leaving + m if leaving < m else leaving - m
        col = T[:, entering]
        cand = np.flatnonzero(col > pivot_tol * scale)
        if cand.size == 0:
            return _finish(p, _basic_lam(T, basis, m), LcpStatus.RAY_TERMINATION, pivots)
        row = _lexmin_ratio(T, col, cand, m, basis, z0)
        leaving = pivot(row, entering)
        pivots += 1
        if leaving == z0:
            lam = _basic_lam(T, basis, m)
            support = [b - m for b in basis if m <= b < 2 * m]
            lam = _polish(p, np.maximum(lam, 0.0), support)
            return _finish(p, lam, LcpStatus.SOLVED, pivots)
        if pivots >= max_pivots:
            return _finish(p, _basic_lam(T, basis, m), LcpStatus.ITERATION_LIMIT, pivots)


def _basic_lam(T, basis, m):
    lam = np.zeros(m)
    for r, b in enumerate(basis):
        if m <= b < 2 * m:
            lam[b - m] = T[r, -1]
    return lam


def _lexmin_ratio(T, col, cand, m, basis, z0, tie_tol=1e-12):
    ratios = T[cand, -1] / col[cand]
    best = ratios.min()
    keep = cand[ratios <= best + tie_tol * max(1.0, abs(best))]
    if keep.size == 1:
        return int(keep[0])
    for r in keep:
        if basis[r] == z0:
            return int(r)
    # lexicographic refinement on the basis-inverse columns
    for k in range(m):
        vals = T[keep, k] / col[keep]
        vmin = vals.min()
        keep = keep[vals <= vmin + tie_tol * max(1.0, abs(vmin))]
        if keep.size == 1:
            break
    return int(keep[0])


def fb_phi(a, b):
    """Fischer-Burmeister NCP function ``sqrt(a^2 + b^2) - a - b``."""
    return np.hypot(a, b) - a - b


def fb_residual(p: LcpProblem, lam):
    lam = np.asarray(lam, dtype=float)
    return fb_phi(p.w(lam), lam)


def _fb_jacobian(p, lam):
    a = p.w(lam)
    b = lam
    r = np.hypot(a, b)
    da = np.empty_like(r)
    db = np.empty_like(r)
    smooth = r > 0.0
    da[smooth] = a[smooth] / r[smooth] - 1.0
    db[smooth] = b[smooth] / r[smooth] - 1.0
    # kink at (0, 0): limit along the direction (1, 1)
    da[~smooth] = db[~smooth] = np.sqrt(0.5) - 1.0
    return da[:, None] * p.A + np.diag(db)


def fb_newton_solve(
    p: LcpProblem,
    lam0=None,
    tol=EPS_C,
    max_iter=100,
    sigma=1e-4,
    beta=0.5,
    min_step=1e-12,
) -> LcpSolution:
    """Semismooth Newton on ``phi(B + A lam, lam) = 0`` with Armijo backtracking.

    The merit function is ``0.5 * ||phi||^2``. Once the residual drops below
    ``tol`` the active set is read off and the equality system on it is
    re-solved, which removes the remaining Newton error when strict
    complementarity holds.
    """
    lam = np.zeros(p.m) if lam0 is None else np.array(lam0, dtype=float)
    phi = fb_residual(p, lam)
    theta = 0.5 * phi @ phi
    history = [theta]
    for it in range(max_iter + 1):
        if np.max(np.abs(phi)) <= tol:
            w = p.w(lam)
            lam = _polish(p, lam, np.flatnonzero(lam > w))
            return _finish(p, lam, LcpStatus.SOLVED, it, history)
        if it == max_iter:
            break
        J = _fb_jacobian(p, lam)
        grad = J.T @ phi
        try:
            d = np.linalg.solve(J, -phi)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -phi, rcond=None)[0]
        slope = grad @ d
        if not np.isfinite(slope) or slope >= 0.0:
            d = -grad
            slope = -(grad @ grad)
        alpha = 1.0
        while True:
            trial = lam + alpha * d
            phi_t = fb_residual(p, trial)
            theta_t = 0.5 * phi_t @ phi_t
            if theta_t <= theta + sigma * alpha * slope and theta_t < theta:
                break
            alpha *= beta
            if alpha < min_step:
                return _finish(p, lam, LcpStatus.STALLED_LINE_SEARCH, it, history)
        lam, phi, theta = trial, phi_t, theta_t
        history.append(theta)
    return _finish(p, lam, LcpStatus.ITERATION_LIMIT, max_iter, history)


def brute_force_solve(p: LcpProblem, eps=EPS_C) -> LcpSolution:
    """Enumerate active sets by size, then lexicographically; first hit wins.

    Only meant as a test oracle: the cost is ``2^m`` small solves.

    Raises:
        ValueError: if ``m > 20``.
        InfeasibleLcp: if no active set yields a complementary solution.
    """
    m = p.m
    if m > 20:
        raise ValueError("brute-force enumeration is limited to m <= 20")
    count = 0
    for k in range(m + 1):
        for S in itertools.combinations(range(m), k):
            count += 1
            lam = np.zeros(m)
            if k:
                idx = list(S)
                A_SS = p.A[np.ix_(idx, idx)]
                try:
                    lam_S = np.linalg.solve(A_SS, -p.B[idx])
                except np.linalg.LinAlgError:
                    continue
                if not np.allclose(A_SS @ lam_S, -p.B[idx], rtol=1e-9, atol=1e-12):
                    continue
                lam[idx] = lam_S
            w = p.w(lam)
            off = np.ones(m, dtype=bool)
            off[list(S)] = False
            if np.all(lam >= -eps) and np.all(w[off] >= -eps):
                sol = _finish(p, lam, LcpStatus.SOLVED, count)
                sol.active = S
                return sol
    raise InfeasibleLcp("no active set satisfies the complementarity conditions")
