"""Projection-based reduction of the displacements, with the LCP kept exact.

Bases are built offline from M, K, C and the spatial load pattern only; the
reduced simulation keeps all m contact constraints and multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NotPositiveDefinite, SingularSlaveBlock, ZeroSeed
from .fem import ContactSystem
from .linalg import orthonormalize_append, spd_factorize
from .solvers import DynamicOperator, SimParams, Trajectory, run_stepper, sensor_dofs

KRYLOV = "krylov"
MODAL = "modal"
CRAIG_BAMPTON = "craig_bampton"


@dataclass(frozen=True, eq=False)
class ReductionBasis:
    Q: np.ndarray
    kind: str
    master_dofs: np.ndarray | None = None
    n_k: int | None = None
    n_c: int | None = None
    eigenvalues: np.ndarray | None = None

    @property
    def n_r(self):
        return self.Q.shape[1]

    @property
    def orthonormal(self):
        return self.kind == KRYLOV


def _arnoldi(solve, M, first, n):
    """Orthonormal basis of span{x, (S M) x, (S M)^2 x, ...} with ``S = solve``."""
    basis = np.zeros((first.size, 0))
    w = first
    while basis.shape[1] < n:
        nxt = orthonormalize_append(basis, w)
        if nxt is None:
            break
        basis = nxt
        w = solve(M @ basis[:, -1])
    return basis


def krylov_basis(sys: ContactSystem, n_r: int, shift: float = 0.0) -> ReductionBasis:
    """Arnoldi basis of the Krylov space of ``K_w^-1 M`` seeded with ``K_w^-1 f0``.

    ``K_w = K - shift * M``; the default expansion point is zero. The seed is
    the spatial load pattern, so the basis does not depend on the load
    amplitude. Stops early if the sequence deflates.
    """
    if n_r < 1:
        raise ValueError("n_r must be at least 1")
    seed = np.asarray(sys.load_pattern, dtype=float)
    if not np.any(seed):
        raise ZeroSeed("load pattern is zero; no Krylov seed available")
    if shift == 0.0:
        solve = sys.K_factor.solve
    else:
        lu = spla.splu((sys.K.csr - shift * sys.M.csr).tocsc())
        solve = lu.solve
    Q = _arnoldi(solve, sys.M.csr, solve(seed), min(n_r, sys.n_free))
    return ReductionBasis(Q, KRYLOV)


def modal_basis(sys: ContactSystem, n_r: int) -> ReductionBasis:
    """Lowest ``n_r`` eigenvectors of ``K y = w^2 M y``, normalized to ``Y^T M Y = I``."""
    n = sys.n_free
    if not 1 <= n_r <= n:
        raise ValueError(f"n_r must lie in [1, {n}]")
    if n <= 1500 or n_r >= n - 1:
        vals, vecs = scipy.linalg.eigh(
            sys.K.toarray(), sys.M.toarray(), subset_by_index=[0, n_r - 1]
        )
    else:
        vals, vecs = spla.eigsh(
            sys.K.csr, k=n_r, M=sys.M.csr, sigma=0.0, which="LM", v0=np.ones(n)
        )
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    Mv = sys.M @ vecs
    vecs = vecs / np.sqrt(np.einsum("ij,ij->j", vecs, Mv))
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return ReductionBasis(vecs, MODAL, eigenvalues=vals)


def craig_bampton_basis(sys: ContactSystem, n_k: int) -> ReductionBasis:
    """Master/slave basis ``[[I, 0], [-K_SS^-1 K_SM, Q_S]]`` in original DOF order.

    Masters are all DOFs of the contact nodes, so C vanishes on the slaves.
    ``Q_S`` holds ``n_k`` Arnoldi vectors of the slave system seeded with the
    slave part of the load pattern; if the load acts on masters only, the
    static slave response to it, ``-K_SS^-1 K_SM f_M``, is used instead.
    """
    if n_k < 0:
        raise ValueError("n_k must be non-negative")
    n = sys.n_free
    masters = np.asarray(sys.master_dofs, dtype=np.int64)
    is_slave = np.ones(n, dtype=bool)
    is_slave[masters] = False
    slaves = np.flatnonzero(is_slave)
    K = sys.K.csr
    try:
        fac = spd_factorize(K[slaves][:, slaves])
    except NotPositiveDefinite as exc:
        raise SingularSlaveBlock(str(exc)) from exc
    K_SM = K[slaves][:, masters].toarray()
    psi = -fac.solve(K_SM).reshape(slaves.size, masters.size)

    Q_S = np.zeros((slaves.size, 0))
    if n_k > 0:
        f_S = sys.load_pattern[slaves]
        first = fac.solve(f_S) if np.any(f_S) else psi @ sys.load_pattern[masters]
        if not np.any(first):
            raise ZeroSeed("load pattern has no slave component and no slave response")
        M_SS = sys.M.csr[slaves][:, slaves]
        Q_S = _arnoldi(fac.solve, M_SS, first, min(n_k, slaves.size))

    n_c = masters.size
    Q = np.zeros((n, n_c + Q_S.shape[1]))
    Q[masters, np.arange(n_c)] = 1.0
    Q[np.ix_(slaves, np.arange(n_c))] = psi
    Q[np.ix_(slaves, np.arange(n_c, Q.shape[1]))] = Q_S
    return ReductionBasis(Q, CRAIG_BAMPTON, master_dofs=masters, n_k=Q_S.shape[1], n_c=n_c)


@dataclass(eq=False)
class ReducedSystem:
    Mhat: np.ndarray
    Khat: np.ndarray
    Chat: np.ndarray
    fhat: np.ndarray
    basis: ReductionBasis
    system: ContactSystem = field(repr=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def n_r(self):
        return self.basis.n_r

    @property
    def b(self):
        return self.system.b

    def expand(self, v):
        """Back-map reduced coordinates to full displacements."""
        return self.basis.Q @ v

    def project(self, q):
        q = np.asarray(q, dtype=float)
        if self.basis.orthonormal:
            return self.basis.Q.T @ q
        return np.linalg.lstsq(self.basis.Q, q, rcond=None)[0]

    def operator(self, h) -> DynamicOperator:
        key = float(h)
        if key not in self._cache:
            self._cache[key] = DynamicOperator(
                self.Mhat, self.Khat, self.Chat, self.b, self.fhat,
                self.system.time_function, h,
            )
        return self._cache[key]


def reduce(sys: ContactSystem, basis: ReductionBasis, tol=1e-10) -> ReducedSystem:
    """Galerkin projection ``Mhat = Q^T M Q``, ``Khat = Q^T K Q``, ``Chat = C Q``."""
    Q = basis.Q
    if Q.shape[0] != sys.n_free:
        raise DimensionMismatch(f"basis has {Q.shape[0]} rows, system has {sys.n_free} DOFs")
    Mhat = Q.T @ (sys.M @ Q)
    Khat = Q.T @ (sys.K @ Q)
    for name, X in (("Mhat", Mhat), ("Khat", Khat)):
        scale = max(np.abs(X).max(), 1e-300)
        if np.abs(X - X.T).max() > tol * scale:
            raise NotPositiveDefinite(f"{name} is not symmetric")
    Mhat = 0.5 * (Mhat + Mhat.T)
    Khat = 0.5 * (Khat + Khat.T)
    spd_factorize(Mhat)  # raises if the basis is rank deficient
    kmin = np.linalg.eigvalsh(Khat).min() if Khat.size else 0.0
    if kmin < -tol * max(np.abs(Khat).max(), 1e-300):
        raise NotPositiveDefinite(f"Khat has a negative eigenvalue {kmin:.3e}")
    Chat = np.asarray(sys.C @ Q)
    fhat = Q.T @ sys.load_pattern
    return ReducedSystem(Mhat, Khat, Chat, fhat, basis, sys)


def rom_step(red: ReducedSystem, st, h):
    return red.operator(h).step(st)


def simulate_rom(red: ReducedSystem, p: SimParams, sensors=()) -> Trajectory:
    """Reduced dynamic contact simulation, recorded in full coordinates."""
    sys = red.system
    n = sys.n_free
    q0 = np.zeros(n) if p.q0 is None else p.q0
    qd0 = np.zeros(n) if p.v0 is None else p.v0
    v0 = red.project(q0)
    vd0 = red.project(qd0)
    dofs = sensor_dofs(sys, sensors)
    rows = red.basis.Q[np.maximum(dofs, 0).ravel()].reshape(dofs.shape + (red.n_r,))
    mask = dofs >= 0

    def observe(v):
        return np.where(mask, rows @ v, 0.0)

    op = red.operator(p.h)
    times, disp, lam, gap, energy, state = run_stepper(op, p, v0, vd0, observe)
    return Trajectory(times, disp, lam, gap, energy, tuple(int(s) for s in sensors), final_state=state)


def write_basis(basis: ReductionBasis, path):
    """Column-major text dump: one basis column per line."""
    np.savetxt(path, basis.Q.T, fmt="%.17g", header=f"kind={basis.kind} n_r={basis.n_r} n={basis.Q.shape[0]}")


__all__ = [
    "CRAIG_BAMPTON",
    "KRYLOV",
    "MODAL",
    "ReducedSystem",
    "ReductionBasis",
    "craig_bampton_basis",
    "krylov_basis",
    "modal_basis",
    "reduce",
    "rom_step",
    "simulate_rom",
    "write_basis",
]
