#!/usr/bin/env python3
"""Dense-solve oracle values frozen into the FEM unit tests.

Builds the half-MBB system with the same conventions as top88.py but solves
it with a dense Cholesky factorization (numpy), independent of the sparse
C++ path.
"""
import numpy as np

from top88 import top88  # noqa: F401  (kept for reference parity runs)


def ke():
    nu = 0.3
    A11 = np.array([[12, 3, -6, -3], [3, 12, 3, 0], [-6, 3, 12, -3], [-3, 0, -3, 12]])
    A12 = np.array([[-6, -3, 0, 3], [-3, -6, -3, -6], [0, -3, -6, 3], [3, -6, 3, -6]])
    B11 = np.array([[-4, 3, -2, 9], [3, -4, -9, 4], [-2, -9, -4, -3], [9, 4, -3, -4]])
    B12 = np.array([[2, -3, 4, -9], [-3, 2, 9, -2], [4, 9, 2, 3], [-9, -2, 3, 2]])
    return 1 / (1 - nu**2) / 24 * (np.block([[A11, A12], [A12.T, A11]])
                                   + nu * np.block([[B11, B12], [B12.T, B11]]))


def uniform_compliance(nelx, nely, young):
    KE = ke()
    ndof = 2 * (nelx + 1) * (nely + 1)
    K = np.zeros((ndof, ndof))
    for elx in range(nelx):
        for ely in range(nely):
            n1 = (nely + 1) * elx + ely
            n2 = (nely + 1) * (elx + 1) + ely
            edof = [2 * n1 + 2, 2 * n1 + 3, 2 * n2 + 2, 2 * n2 + 3, 2 * n2, 2 * n2 + 1, 2 * n1, 2 * n1 + 1]
            K[np.ix_(edof, edof)] += young * KE
    F = np.zeros(ndof)
    F[1] = -1.0
    fixed = list(range(0, 2 * (nely + 1), 2)) + [ndof - 1]
    free = np.setdiff1d(np.arange(ndof), fixed)
    Kf = K[np.ix_(free, free)]
    L = np.linalg.cholesky(Kf)
    y = np.linalg.solve(L, F[free])
    u = np.linalg.solve(L.T, y)
    return float(F[free] @ u)


if __name__ == "__main__":
    print("4x4 rho=1:", repr(uniform_compliance(4, 4, 1.0)))
    y = 1e-9 + 0.9**3 * (1 - 1e-9)
    print("20x20 rho=0.9:", repr(uniform_compliance(20, 20, y)))
