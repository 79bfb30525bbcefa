"""Full-order static and dynamic contact solves.

The dynamic scheme is the two-step implicit Euler discretization

    M (q+ - 2 q + q-) + h^2 K q+ = h^2 f(t+h) + h^2 C^T lam+

Eliminating q+ leaves an m x m LCP per step whose matrix does not depend on
the state, so it is formed once per step size and reused.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SolverFailure
from .fem import ContactSystem
from .lcp import EPS_C, LcpProblem, fb_newton_solve, lemke_solve
from .linalg import spd_factorize


@dataclass(frozen=True)
class SimParams:
    h: float = 0.05
    t0: float = 0.0
    t_end: float = 20.0
    q0: np.ndarray | None = None
    v0: np.ndarray | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step must be positive")
        if self.t_end < self.t0:
            raise ValueError("t_end must not precede t0")

    @property
    def n_steps(self):
        return int(round((self.t_end - self.t0) / self.h))


@dataclass
class SimState:
    t: float
    q_curr: np.ndarray
    q_prev: np.ndarray
    lam: np.ndarray


@dataclass
class Trajectory:
    """Time series recorded by :func:`simulate` and the reduced variant.

    ``sensor_disp`` has shape ``(steps, n_sensors, 2)``; ``lam`` and ``gap``
    have shape ``(steps, m)``.
    """

    times: np.ndarray
    sensor_disp: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    energy: np.ndarray
    sensors: tuple[int, ...] = ()
    lcp_pivots: np.ndarray | None = None
    final_state: SimState | None = field(default=None, repr=False)

    def __len__(self):
        return self.times.size

    @property
    def max_penetration(self):
        return float(max(0.0, -self.gap.min())) if self.gap.size else 0.0

    def columns(self):
        cols = ["t"]
        for k in range(self.sensor_disp.shape[1]):
            cols += [f"s{k + 1}_ux", f"s{k + 1}_uy"]
        m = self.lam.shape[1]
        cols += [f"lambda_{i + 1}" for i in range(m)]
        cols += [f"gap_{i + 1}" for i in range(m)]
        cols.append("energy")
        return cols

    def table(self):
        n = self.times.size
        return np.column_stack(
            [
                self.times,
                self.sensor_disp.reshape(n, -1),
                self.lam,
                self.gap,
                self.energy,
            ]
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns())
            for row in self.table():
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(x) for x in row] for row in reader], dtype=float)
        data = data.reshape(-1, len(header))
        ns = sum(1 for c in header if c.endswith("_ux"))
        m = sum(1 for c in header if c.startswith("lambda_"))
        n = data.shape[0]
        disp = data[:, 1 : 1 + 2 * ns].reshape(n, ns, 2)
        lam = data[:, 1 + 2 * ns : 1 + 2 * ns + m]
        gap = data[:, 1 + 2 * ns + m : 1 + 2 * ns + 2 * m]
        return cls(data[:, 0], disp, lam, gap, data[:, -1])


@dataclass
class StaticContext:
    Kinv_f: np.ndarray
    Kinv_Ct: np.ndarray


def solve_lcp(problem: LcpProblem, step=None, t=None):
    """Lemke first; the Fischer-Burmeister Newton solver is the fallback."""
    sol = lemke_solve(problem)
    if sol.solved:
        return sol
    retry = fb_newton_solve(problem)
    if retry.solved:
        return retry
    raise SolverFailure(
        f"LCP not solved (lemke: {sol.status.value}, fb-newton: {retry.status.value})",
        step=step,
        time=t,
    )


def _dense_cols(C):
    return C.T.toarray() if sp.issparse(C) else np.asarray(C, dtype=float).T


def static_lcp_assemble(sys: ContactSystem, f=None):
    """A = C K^-1 C^T and B = C K^-1 f + b, plus the cached solves."""
    f = sys.load_pattern if f is None else np.asarray(f, dtype=float)
    fac = sys.K_factor
    Kinv_f = fac.solve(f)
    Kinv_Ct = fac.solve(_dense_cols(sys.C))
    A = sys.C @ Kinv_Ct
    A = 0.5 * (A + A.T)
    B = sys.C @ Kinv_f + sys.b
    return LcpProblem(A, B), StaticContext(Kinv_f, Kinv_Ct)


def static_solve(sys: ContactSystem, f=None):
    """Static contact equilibrium. ``f`` defaults to the peak load pattern.

    Returns ``(q, lam)``.
    """
    problem, ctx = static_lcp_assemble(sys, f)
    sol = solve_lcp(problem)
    q = ctx.Kinv_f + ctx.Kinv_Ct @ sol.lam
    return q, sol.lam


class DynamicOperator:
    """Per-step-size data of the implicit Euler contact scheme.

    Works for both sparse (full order) and dense (reduced) matrices. With
    ``S = M + h^2 K`` and ``Z = S^-1 C^T`` one step is

        y   = S^-1 (h^2 f(t+h) + M (2 q - q_prev))
        lam = LCP(A = h^2 C Z, B = C y + b)
        q+  = y + h^2 Z lam
    """

    def __init__(self, M, K, C, b, pattern, time_function, h, factor=None):
        self.h = float(h)
        self.M = M
        self.K = K
        self.C = C
        self.b = np.asarray(b, dtype=float)
        self.time_function = time_function
        if factor is None:
            factor = spd_factorize(M + h * h * K)
        self.factor = factor
        self.Z = factor.solve(_dense_cols(C)).reshape(M.shape[0], -1)
        A = h * h * (C @ self.Z)
        self.A = 0.5 * (A + A.T)
        self.S_inv_pattern = factor.solve(np.asarray(pattern, dtype=float))

    @property
    def m(self):
        return self.b.size

    def gap(self, q):
        return self.C @ q + self.b

    def step(self, state: SimState, index=None) -> SimState:
        h = self.h
        t_next = state.t + h
        y = self.factor.solve(self.M @ (2.0 * state.q_curr - state.q_prev))
        y += h * h * self.time_function(t_next) * self.S_inv_pattern
        if self.m:
            problem = LcpProblem(self.A, self.C @ y + self.b)
            sol = solve_lcp(problem, step=index, t=t_next)
            lam = sol.lam
            q_next = y + h * h * (self.Z @ lam)
        else:
            lam = np.zeros(0)
            q_next = y
        return SimState(t_next, q_next, state.q_curr, lam)

    def energy(self, q, q_prev, h):
        v = (q - q_prev) / h
        return 0.5 * float(v @ (self.M @ v)) + 0.5 * float(q @ (self.K @ q))


def dynamic_operator(sys: ContactSystem, h) -> DynamicOperator:
    key = ("dynop", float(h))
    if key not in sys._cache:
        sys._cache[key] = DynamicOperator(
            sys.M.csr, sys.K.csr, sys.C, sys.b, sys.load_pattern, sys.time_function, h,
            factor=sys.step_factor(h),
        )
    return sys._cache[key]


def dynamic_lcp_assemble(sys: ContactSystem, st: SimState, h, f_next=None):
    """LCP of one implicit Euler step from state ``st``.

    ``f_next`` defaults to ``f(st.t + h)``.
    """
    op = dynamic_operator(sys, h)
    if f_next is None:
        f_next = sys.f(st.t + h)
    rhs = h * h * np.asarray(f_next, dtype=float) + op.M @ (2.0 * st.q_curr - st.q_prev)
    y = op.factor.solve(rhs)
    return LcpProblem(op.A, op.gap(y))


def fom_step(sys: ContactSystem, st: SimState, h) -> SimState:
    return dynamic_operator(sys, h).step(st)


def sensor_dofs(sys: ContactSystem, sensors):
    """Free-DOF indices of the sensor nodes; -1 marks a fixed component."""
    if not len(sensors):
        return np.zeros((0, 2), dtype=np.int64)
    return np.array([[sys.dof_map[n, 0], sys.dof_map[n, 1]] for n in sensors], dtype=np.int64)


def _pick(vec, dofs):
    out = np.where(dofs >= 0, vec[np.maximum(dofs, 0)], 0.0)
    return out


def run_stepper(op: DynamicOperator, p: SimParams, x0, v0, observe):
    """Drive ``op`` over the horizon of ``p``; ``observe(x) -> (n_sensors, 2)``.

    The first step is an explicit Euler start ``x1 = x0 + h v0`` with no
    contact force; the two-step formula takes over afterwards.
    """
    h = p.h
    n = p.n_steps
    m = op.m
    times = p.t0 + h * np.arange(n + 1)
    lam = np.zeros((n + 1, m))
    gap = np.zeros((n + 1, m))
    energy = np.zeros(n + 1)
    disp0 = observe(x0)
    disp = np.zeros((n + 1,) + disp0.shape)
    pivots = np.zeros(n + 1, dtype=np.int64)

    disp[0] = disp0
    gap[0] = op.gap(x0)
    energy[0] = 0.5 * float(v0 @ (op.M @ v0)) + 0.5 * float(x0 @ (op.K @ x0))
    state = SimState(p.t0, x0, x0, np.zeros(m))
    if n >= 1:
        x1 = x0 + h * v0
        state = SimState(times[1], x1, x0, np.zeros(m))
        disp[1] = observe(x1)
        gap[1] = op.gap(x1)
        energy[1] = op.energy(x1, x0, h)
    for k in range(2, n + 1):
        state = op.step(state, index=k)
        # keep the time grid exact instead of accumulating t += h
        state.t = times[k]
        lam[k] = state.lam
        gap[k] = op.gap(state.q_curr)
        disp[k] = observe(state.q_curr)
        energy[k] = op.energy(state.q_curr, state.q_prev, h)
    return times, disp, lam, gap, energy, state


def simulate(sys: ContactSystem, p: SimParams, sensors=()) -> Trajectory:
    """Full-order dynamic contact simulation over ``[p.t0, p.t_end]``."""
    op = dynamic_operator(sys, p.h)
    n = sys.n_free
    q0 = np.zeros(n) if p.q0 is None else np.asarray(p.q0, dtype=float)
    v0 = np.zeros(n) if p.v0 is None else np.asarray(p.v0, dtype=float)
    dofs = sensor_dofs(sys, sensors)
    times, disp, lam, gap, energy, state = run_stepper(op, p, q0, v0, lambda q: _pick(q, dofs))
    return Trajectory(times, disp, lam, gap, energy, tuple(int(s) for s in sensors), final_state=state)


def kkt_residuals(sys: ContactSystem, q, lam, f=None):
    """Static KKT residuals: (equilibrium, min gap, min lam, |lam . gap|)."""
    f = sys.load_pattern if f is None else f
    eq = np.linalg.norm(sys.K @ q - f - sys.C.T @ lam)
    g = sys.C @ q + sys.b
    return eq, float(g.min()) if g.size else math.inf, float(lam.min()) if lam.size else 0.0, abs(float(lam @ g))


__all__ = [
    "EPS_C",
    "DynamicOperator",
    "SimParams",
    "SimState",
    "StaticContext",
    "Trajectory",
    "dynamic_lcp_assemble",
    "dynamic_operator",
    "fom_step",
    "kkt_residuals",
    "run_stepper",
    "sensor_dofs",
    "simulate",
    "solve_lcp",
    "static_lcp_assemble",
    "static_solve",
]
