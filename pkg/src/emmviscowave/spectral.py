"""Discrete checks of dissipativity, resolvent bounds and stationary modes.

Norms are taken in the energy metric ``M_H = blockdiag(M_rho, M_psi)``:
with ``M_H = R^T R`` the H-norm operator quantities of ``T`` are the
Euclidean ones of ``R T R^-1``.
"""
from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import block_diag
from .timestep import StateAD

DENSE_LIMIT = 6000
# above this size smin_H iterates on a sparse LU instead of a dense SVD
SVD_DENSE_LIMIT = 1500
PROBE_TOL = 1e-8


@dataclass
class ResolventProbe:
    lam: complex
    smin_H: float
    bound: float
    satisfied: bool
    eps2_hat: float = float("nan")

    def to_dict(self):
        d = asdict(self)
        lam = complex(self.lam)
        d["lam"] = lam.real if lam.imag == 0 else [lam.real, lam.imag]
        return d


def check_dissipativity(ops, tol=1e-12):
    """Relative residual of M_H L + L^T M_H + 2 D (max norm).

    Also verifies D >= 0 block by block; raises ``ValueError`` when D has an
    eigenvalue below ``-tol * scale``.
    """
    ML = (ops.M_H @ ops.L).tocsr()
    R = ML + ML.T + 2 * ops.D_full
    scale = abs(ML).max()
    res = abs(R).max() / scale if R.nnz else 0.0
    dmin = dissipation_min_eig(ops)
    dscale = max(abs(ops.D_full).max(), np.finfo(float).tiny)
    if dmin < -tol * dscale:
        raise ValueError(f"dissipation form is indefinite: eigenvalue {dmin:.3e}")
    return float(res)


def dissipation_min_eig(ops):
    """Smallest eigenvalue of the assembled psi-block of D (block diagonal 3x3)."""
    nf = ops.dofs.n_free
    Dpsi = ops.D_full[nf:, nf:].tocsr()
    k = Dpsi.shape[0] // 3
    if k == 0:
        return 0.0
    idx = np.arange(3 * k).reshape(k, 3)
    blocks = np.empty((k, 3, 3))
    for a in range(3):
        for b in range(3):
            blocks[:, a, b] = np.asarray(Dpsi[idx[:, a], idx[:, b]]).ravel()
    return float(np.linalg.eigvalsh(blocks)[:, 0].min())


def h_factor(ops):
    """Sparse R and R^-1 with M_H = R^T R (diagonal and 3x3 Cholesky blocks)."""
    if "Rfac" in ops._cache:
        return ops._cache["Rfac"]
    rm = np.sqrt(ops.M_rho.diagonal())
    Rb, Rib = [], []
    for j in range(ops.dofs.n_branches):
        blocks = ops.areas[:, None, None] * ops.C[j]
        U = np.linalg.cholesky(blocks).transpose(0, 2, 1)  # upper: blocks = U^T U
        Rb.append(block_diag(U))
        Rib.append(block_diag(np.linalg.inv(U)))
    R = sp.block_diag([sp.diags(rm)] + Rb, format="csr")
    Ri = sp.block_diag([sp.diags(1.0 / rm)] + Rib, format="csr")
    ops._cache["Rfac"] = (R, Ri)
    return R, Ri


def h_norm(ops, x):
    return float(np.sqrt(np.real(np.vdot(x, ops.M_H @ x))))


def smin_H(ops, lam, dense_limit=SVD_DENSE_LIMIT):
    """Smallest singular value of (lam I - L) in the H metric."""
    R, Ri = h_factor(ops)
    n = ops.n_reduced
    T = (R @ (lam * sp.identity(n) - ops.L) @ Ri).tocsc()
    if n <= dense_limit:
        return float(sla.svdvals(T.toarray())[-1])
    is_complex = np.iscomplexobj(T)
    try:
        lu = spla.splu(T)
    except RuntimeError:  # exactly singular
        return 0.0
    trans = "H" if is_complex else "T"
    # largest eigenvalue of (T^H T)^-1 is 1 / smin^2
    op = spla.LinearOperator((n, n), matvec=lambda y: lu.solve(lu.solve(y, trans=trans)), dtype=T.dtype)
    mu = spla.eigsh(op, k=1, which="LM", return_eigenvectors=False, tol=1e-10)[0]
    return float(1.0 / np.sqrt(abs(mu)))


def eps2_hat(ops):
    """1/2 smin_H(L)^2, the measured coercivity constant of L in H."""
    return 0.5 * smin_H(ops, 0.0) ** 2


def probe_resolvent(ops, lam, eps2=None, tol=PROBE_TOL):
    """Probe (lam I - L) at a real or purely imaginary lam.

    * real lam > 0: smin_H >= sqrt(lam^2 + eps2) (>= lam; eps2 = 0 if not given);
    * lam = 0 or imaginary: invertibility, smin_H > tol.
    """
    lam = complex(lam)
    val = lam.real if lam.imag == 0 else lam
    s = smin_H(ops, val)
    e2 = 0.0 if eps2 is None else eps2
    if lam.imag == 0 and lam.real > 0:
        bound = float(np.sqrt(lam.real ** 2 + e2))
        ok = s >= bound - tol * max(1.0, bound)
    elif lam.imag == 0 and lam.real == 0:
        bound = float(np.sqrt(e2)) if eps2 is not None else tol
        ok = s > tol and s >= bound - tol * max(1.0, bound)
    else:
        bound = tol
        ok = s > tol
    return ResolventProbe(val, s, bound, bool(ok), float("nan") if eps2 is None else float(eps2))


def higher_energy_bounds(ops, dense_limit=DENSE_LIMIT):
    """(a1, b1) with a1 |x|_H^2 <= Ebar(x) <= b1 |x|_H^2.

    Ebar = 1/2 x^T (M_H + L^T M_H L) x, so the constants are half the extreme
    generalized eigenvalues of that pencil against M_H.
    """
    n = ops.n_reduced
    if n > dense_limit:
        raise ValueError(f"dense eigenproblem limited to {dense_limit} dofs, got {n}")
    MH = ops.M_H.toarray()
    L = ops.L.toarray()
    ev = sla.eigh(0.5 * (MH + L.T @ MH @ L), MH, eigvals_only=True)
    return float(ev[0]), float(ev[-1])


def nearest_eigenvalue(ops, lam):
    """Eigenvalue of L closest to lam (shift-invert), for failure reports."""
    try:
        w = spla.eigs(ops.L.astype(complex), k=1, sigma=complex(lam), return_eigenvectors=False)
        return complex(w[0])
    except Exception:
        w = np.linalg.eigvals(ops.L.toarray())
        return complex(w[np.argmin(np.abs(w - lam))])


def build_stationary(ops, phi_seed):
    """Stationary state (u1, 0, phi) of the augmented generator from a seed.

    Solves the elliptic problem G^T W C G u1 = G^T W sum_j C_j phi_j (mixed
    boundary conditions built in by the dof elimination) and sets every
    phi_j = G u1, which is the compatible viscous strain; A U = 0 then holds
    exactly. Requires a purely Maxwell material (no elastic branches).
    """
    nd = ops.nondegenerate
    if len(nd) != ops.dofs.n_branches:
        raise ValueError("the augmented generator has no stationary mode when elastic branches are present")
    phi_seed = np.asarray(phi_seed, dtype=float)
    if phi_seed.shape != (ops.dofs.n_phi,):
        raise ValueError(f"phi_seed must have length {ops.dofs.n_phi}")
    if not np.any(phi_seed):
        raise ValueError("phi_seed must be nonzero")
    k = 3 * ops.dofs.n_elements
    S_total = sum(ops.S).tocsc()
    rhs = sum(ops.G.T @ (ops.Wc[j] @ phi_seed[q * k:(q + 1) * k]) for q, j in enumerate(nd))
    try:
        u1 = spla.spsolve(S_total, rhs)
    except RuntimeError as exc:
        raise RuntimeError("elliptic block is singular; check the Dirichlet set") from exc
    if not np.all(np.isfinite(u1)):
        raise RuntimeError("elliptic block is singular; check the Dirichlet set")
    if not np.any(u1):
        raise ValueError("seed is orthogonal to every compatible strain; stationary mode is zero")
    phi = np.tile(ops.G @ u1, len(nd))
    return StateAD(u1, np.zeros_like(u1), phi)


def kernel_residual(ops, U):
    """||A U|| / ||U|| in the Euclidean norm."""
    U = U.vector if isinstance(U, StateAD) else np.asarray(U)
    return float(np.linalg.norm(ops.A @ U) / np.linalg.norm(U))
