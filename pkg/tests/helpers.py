"""Shared builders for small test systems."""

import numpy as np
import scipy.sparse as sp

from contactmor.fem import ContactSystem, LoadSpec, Material, MeshSpec, Tear, assemble, build_mesh
from contactmor.linalg import SparseSymMatrix


def toy_system(M, K, C, b, f, time_function=lambda t: 1.0):
    """ContactSystem from small dense arrays (no mesh attached)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = M.shape[0]
    C = np.asarray(C, dtype=float).reshape(-1, n)
    return ContactSystem(
        M=SparseSymMatrix.from_dense(M),
        K=SparseSymMatrix.from_dense(K),
        C=sp.csr_matrix(C),
        b=np.atleast_1d(np.asarray(b, dtype=float)).reshape(C.shape[0]),
        load_pattern=np.atleast_1d(np.asarray(f, dtype=float)),
        time_function=time_function,
    )


SMALL_TEAR = Tear((0.75, 1.0), (0.75, 0.625))  # 4 points on an 8x8 grid


def small_system(nx=8, ny=8, tears=(SMALL_TEAR,), load=None, mat=None):
    mesh = build_mesh(MeshSpec(nx, ny, tears=tears))
    return assemble(mesh, mat or Material(), load or LoadSpec())


# 8x8 scenario with the small tear; runs in well under a second
SMALL = """
[scenario]
name = small
contact_node = 2

[mesh]
nx = 8
ny = 8
tears = 0.75 1.0 0.75 0.625

[load]
kind = load1
position = 1.0 0.875

[sim]
h = 0.1
t_end = 20

[sensors]
s1 = 0.75 0.875 plus
s2 = 0.5 0.5

[reduction]
method = krylov
n_r = 6
variants = krylov:3, craig_bampton:2
"""
