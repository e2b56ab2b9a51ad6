#!/usr/bin/env python3
"""Line-by-line numpy/scipy port of the 88-line MATLAB SIMP script.

Used offline to produce golden compliance values for the C++ optimizer.
Only the sensitivity-filter branch (ft = 1) is ported.

    python3 tools/reference/top88.py --nelx 60 --nely 20 --volfrac 0.5
"""
import argparse

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve


def top88(nelx, nely, volfrac, penal=3.0, rmin=1.5, max_iters=None):
    E0, Emin, nu = 1.0, 1e-9, 0.3
    A11 = np.array([[12, 3, -6, -3], [3, 12, 3, 0], [-6, 3, 12, -3], [-3, 0, -3, 12]])
    A12 = np.array([[-6, -3, 0, 3], [-3, -6, -3, -6], [0, -3, -6, 3], [3, -6, 3, -6]])
    B11 = np.array([[-4, 3, -2, 9], [3, -4, -9, 4], [-2, -9, -4, -3], [9, 4, -3, -4]])
    B12 = np.array([[2, -3, 4, -9], [-3, 2, 9, -2], [4, 9, 2, 3], [-9, -2, 3, 2]])
    KE = 1 / (1 - nu**2) / 24 * (np.block([[A11, A12], [A12.T, A11]])
                                 + nu * np.block([[B11, B12], [B12.T, B11]]))
    # MATLAB is column-major and 1-based; keep 1-based arithmetic then shift.
    nodenrs = np.arange(1, (1 + nelx) * (1 + nely) + 1).reshape((1 + nely, 1 + nelx), order="F")
    edofVec = (2 * nodenrs[:-1, :-1] + 1).reshape(nelx * nely, order="F")
    edofMat = edofVec[:, None] + np.array([0, 1, 2 * nely + 2, 2 * nely + 3, 2 * nely, 2 * nely + 1, -2, -1])
    edofMat -= 1
    iK = np.kron(edofMat, np.ones((8, 1), dtype=int)).ravel()
    jK = np.kron(edofMat, np.ones((1, 8), dtype=int)).ravel()
    ndof = 2 * (nely + 1) * (nelx + 1)
    F = np.zeros(ndof)
    F[1] = -1.0
    U = np.zeros(ndof)
    fixeddofs = np.union1d(np.arange(0, 2 * (nely + 1), 2), [ndof - 1])
    freedofs = np.setdiff1d(np.arange(ndof), fixeddofs)

    iH, jH, sH = [], [], []
    r = int(np.ceil(rmin)) - 1
    for i1 in range(nelx):
        for j1 in range(nely):
            e1 = i1 * nely + j1
            for i2 in range(max(i1 - r, 0), min(i1 + r, nelx - 1) + 1):
                for j2 in range(max(j1 - r, 0), min(j1 + r, nely - 1) + 1):
                    e2 = i2 * nely + j2
                    iH.append(e1)
                    jH.append(e2)
                    sH.append(max(0.0, rmin - np.sqrt((i1 - i2) ** 2 + (j1 - j2) ** 2)))
    H = sp.csr_matrix((sH, (iH, jH)), shape=(nelx * nely, nelx * nely))
    Hs = np.asarray(H.sum(axis=1)).ravel()

    x = np.full(nelx * nely, volfrac)  # column-major element order
    xPhys = x.copy()
    loop, change, c = 0, 1.0, 0.0
    while change > 0.01 and (max_iters is None or loop < max_iters):
        loop += 1
        sK = (KE.ravel()[None, :] * (Emin + xPhys[:, None] ** penal * (E0 - Emin))).ravel()
        K = sp.coo_matrix((sK, (iK, jK)), shape=(ndof, ndof)).tocsc()
        K = (K + K.T) / 2
        U[:] = 0
        U[freedofs] = spsolve(K[freedofs][:, freedofs], F[freedofs])
        ue = U[edofMat]
        ce = np.einsum("ij,jk,ik->i", ue, KE, ue)
        c = float(np.sum((Emin + xPhys**penal * (E0 - Emin)) * ce))
        dc = -penal * (E0 - Emin) * xPhys ** (penal - 1) * ce
        dv = np.ones(nelx * nely)
        dc = H @ (x * dc) / Hs / np.maximum(1e-3, x)
        l1, l2, move = 0.0, 1e9, 0.2
        while (l2 - l1) / (l1 + l2) > 1e-3:
            lmid = 0.5 * (l2 + l1)
            xnew = np.maximum(0, np.maximum(x - move, np.minimum(1, np.minimum(x + move, x * np.sqrt(-dc / dv / lmid)))))
            xPhys = xnew
            if xPhys.sum() > volfrac * nelx * nely:
                l1 = lmid
            else:
                l2 = lmid
        change = float(np.max(np.abs(xnew - x)))
        x = xnew
    return c, loop, x.reshape((nely, nelx), order="F")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nelx", type=int, default=60)
    ap.add_argument("--nely", type=int, default=20)
    ap.add_argument("--volfrac", type=float, default=0.5)
    ap.add_argument("--max-iters", type=int, default=None)
    a = ap.parse_args()
    c, loop, x = top88(a.nelx, a.nely, a.volfrac, max_iters=a.max_iters)
    print(f"nelx={a.nelx} nely={a.nely} volfrac={a.volfrac} iterations={loop} "
          f"compliance={c:.12g} volume={x.mean():.6f}")


if __name__ == "__main__":
    main()
