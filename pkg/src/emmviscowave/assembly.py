"""P1/P0 finite-element operators for the augmented and reduced EMM systems.

Discretisation
--------------
* velocity / displacement: vector P1 on the nodes, global dof ``2*node + c``;
  Dirichlet nodes are eliminated (both components);
* internal variables (``psi_j``, ``phi_j``): one Kelvin vector per element
  and branch, row ``3*element + component`` inside each branch block;
* mass is row-sum lumped, so every generator is an explicit sparse matrix.

Reduced state ``x = (v, psi_1, ..., psi_n)`` (every branch, elastic ones
included), augmented state ``U = (u1, u2, phi_j for non-degenerate j)``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .material import EmmMaterial, MaterialField, script_I_blocks
from .voigt import SQRT2, spd_function


def block_diag(blocks):
    """CSR matrix with the (k, m, m) ``blocks`` on its diagonal."""
    blocks = np.asarray(blocks)
    k, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(k), np.arange(k + 1)), shape=(k * m, k * m)).tocsr()


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def symgrad_matrix(mesh):
    """Map from nodal P1 velocities (2N) to element Kelvin strains (3K)."""
    tri = mesh.triangles
    p = mesh.nodes[tri]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise ValueError("degenerate or clockwise triangle in assembly")
    x, y = p[..., 0], p[..., 1]
    dNx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / (2 * area[:, None])
    dNy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / (2 * area[:, None])
    ne = len(tri)
    rows, cols, vals = [], [], []
    e3 = 3 * np.arange(ne)[:, None]
    ux, uy = 2 * tri, 2 * tri + 1
    for r, c, v in ((e3, ux, dNx), (e3 + 1, uy, dNy), (e3 + 2, ux, dNy / SQRT2), (e3 + 2, uy, dNx / SQRT2)):
        rows.append(np.broadcast_to(r, c.shape).ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(3 * ne, 2 * mesh.n_nodes))


@dataclass(frozen=True)
class DofMap:
    n_nodes: int
    n_elements: int
    free: np.ndarray
    dirichlet: np.ndarray
    n_branches: int
    nondegenerate: tuple
    m: int = 3

    @property
    def n_free(self):
        return self.free.size

    @property
    def n_psi(self):
        return self.n_branches * self.m * self.n_elements

    @property
    def n_phi(self):
        return len(self.nondegenerate) * self.m * self.n_elements

    @property
    def n_reduced(self):
        return self.n_free + self.n_psi

    @property
    def n_ad(self):
        return 2 * self.n_free + self.n_phi


@dataclass(eq=False)
class DiscreteOperators:
    """Assembled operators of one mesh/material pair.

    Attributes
    ----------
    M_rho : lumped velocity mass on free dofs
    M_psi : internal-variable mass, blockdiag_j(area * C_j)
    G, G_D : element symmetric gradient acting on free / Dirichlet dofs
    S : per-branch stiffness G^T (area C_j) G
    D_full : dissipation form on the reduced state
    L : reduced generator, M_H : metric blockdiag(M_rho, M_psi)
    """

    mesh: object
    material: MaterialField
    dofs: DofMap
    areas: np.ndarray
    C: np.ndarray
    rates: np.ndarray
    M_rho: sp.csr_matrix
    M_rho_full: np.ndarray
    G: sp.csr_matrix
    G_D: sp.csr_matrix
    Wc: list
    Kb: list
    S: list
    M_psi: sp.csr_matrix
    D_full: sp.csr_matrix
    L: sp.csr_matrix
    M_H: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    # ---- layout helpers -------------------------------------------------
    @property
    def n_reduced(self):
        return self.dofs.n_reduced

    @property
    def n_ad(self):
        return self.dofs.n_ad

    def split_reduced(self, x):
        nf = self.dofs.n_free
        return x[:nf], x[nf:]

    def split_ad(self, U):
        nf = self.dofs.n_free
        return U[:nf], U[nf:2 * nf], U[2 * nf:]

    def branch_slice(self, j):
        k = 3 * self.dofs.n_elements
        return slice(j * k, (j + 1) * k)

    def full_velocity(self, v, g=None):
        out = np.zeros(2 * self.dofs.n_nodes, dtype=np.result_type(v, 0.0))
        out[self.dofs.free] = v
        if g is not None:
            out = out.astype(np.result_type(out, g))
            out[self.dofs.dirichlet] = g
        return out

    def restrict(self, nodal):
        """Split a nodal vector field (N, 2) or (2N,) into free and Dirichlet parts."""
        nodal = np.asarray(nodal).reshape(-1)
        return nodal[self.dofs.free], nodal[self.dofs.dirichlet]

    def interpolate(self, func):
        """Nodal interpolant of ``func(x, y) -> (fx, fy)``, returned as full (2N,) vector."""
        fx, fy = func(self.mesh.nodes[:, 0], self.mesh.nodes[:, 1])
        out = np.empty(2 * self.dofs.n_nodes)
        out[0::2] = fx
        out[1::2] = fy
        return out

    # ---- augmented system -------------------------------------------------
    @property
    def nondegenerate(self):
        return self.dofs.nondegenerate

    @property
    def A(self):
        """Augmented generator on ``(u1, u2, phi)``."""
        if "A" not in self._cache:
            self._cache["A"] = _assemble_A(self)
        return self._cache["A"]

    @property
    def P(self):
        """Linear map (u1, u2, phi) -> (v, psi) with psi_j = G u1 - phi_j."""
        if "P" not in self._cache:
            nf, n = self.dofs.n_free, self.dofs.n_branches
            k = 3 * self.dofs.n_elements
            top = [sp.csr_matrix((nf, nf)), sp.identity(nf)]
            bottom = [sp.vstack([self.G] * n), sp.csr_matrix((n * k, nf))]
            if self.nondegenerate:
                # phi block q feeds psi block nondegenerate[q]
                rows = np.concatenate([np.arange(j * k, (j + 1) * k) for j in self.nondegenerate])
                sel = sp.csr_matrix((np.ones(rows.size), (rows, np.arange(rows.size))),
                                    shape=(n * k, self.dofs.n_phi))
                top.append(sp.csr_matrix((nf, self.dofs.n_phi)))
                bottom.append(-sel)
            self._cache["P"] = sp.bmat([top, bottom], format="csr")
        return self._cache["P"]

    def reduced_from_ad(self, U):
        return self.P @ U

    def coupling(self):
        """Stacked (area C_j) G, i.e. the psi -> velocity coupling transposed."""
        if "Bv" not in self._cache:
            self._cache["Bv"] = sp.vstack([W @ self.G for W in self.Wc]).tocsr()
        return self._cache["Bv"]

    def lambda_stiffness(self, lam):
        """G^T area lam sum_j (lam + C_j/eta_j)^-1 C_j G, the displacement operator at real lam > 0."""
        blocks = np.zeros_like(self.C[0])
        for j in range(self.dofs.n_branches):
            if j in self.nondegenerate:
                R = spd_function(self.rates[j], "shift_inv", lam=lam)
                blocks += lam * R @ self.C[j]
            else:
                blocks += self.C[j]
        W = block_diag(self.areas[:, None, None] * blocks)
        return (self.G.T @ W @ self.G).tocsr()


def _as_field(material, n_elements):
    if isinstance(material, EmmMaterial):
        return MaterialField.uniform(material, n_elements)
    if material.n_elements != n_elements:
        raise ValueError(f"material field covers {material.n_elements} elements, mesh has {n_elements}")
    return material


def make_dofmap(mesh, field_):
    nn = mesh.n_nodes
    dn = mesh.dirichlet_nodes()
    dirichlet = np.sort(np.concatenate([2 * dn, 2 * dn + 1]))
    free = np.setdiff1d(np.arange(2 * nn), dirichlet)
    nondeg = tuple(j for j, deg in enumerate(field_.degenerate) if not deg)
    return DofMap(nn, mesh.n_triangles, free, dirichlet, field_.n, nondeg, field_.m)


def assemble_reduced(mesh, material):
    """Mass, gradient, stiffness and dissipation blocks plus the reduced generator L."""
    ne = mesh.n_triangles
    fld = _as_field(material, ne)
    if fld.m != 3:
        raise ValueError("assembly is two-dimensional (Kelvin size 3)")
    dofs = make_dofmap(mesh, fld)
    area = mesh.signed_areas()
    rho = fld.rho()
    C = fld.C()
    rates = fld.rates()

    lump = np.zeros(mesh.n_nodes)
    np.add.at(lump, mesh.triangles.ravel(), np.repeat(rho * area / 3.0, 3))
    m_full = np.repeat(lump, 2)
    M_rho = sp.diags(m_full[dofs.free]).tocsr()

    Gfull = symgrad_matrix(mesh)
    G = Gfull[:, dofs.free].tocsr()
    G_D = Gfull[:, dofs.dirichlet].tocsr()

    Wc = [block_diag(area[:, None, None] * C[j]) for j in range(fld.n)]
    Kb = [block_diag(rates[j]) for j in range(fld.n)]
    S = [(G.T @ W @ G).tocsr() for W in Wc]
    M_psi = sp.block_diag(Wc, format="csr")
    Dpsi = sp.block_diag([block_diag(_sym(area[:, None, None] * C[j] @ rates[j])) for j in range(fld.n)])
    nf = dofs.n_free
    D_full = sp.block_diag([sp.csr_matrix((nf, nf)), Dpsi], format="csr")

    Minv = sp.diags(1.0 / m_full[dofs.free])
    Bv = sp.vstack([W @ G for W in Wc])
    L = sp.bmat([[sp.csr_matrix((nf, nf)), -(Minv @ Bv.T)],
                 [sp.vstack([G] * fld.n), -sp.block_diag(Kb)]], format="csr")
    M_H = sp.block_diag([M_rho, M_psi], format="csr")
    return DiscreteOperators(mesh, fld, dofs, area, C, rates, M_rho, m_full, G, G_D, Wc, Kb, S,
                             M_psi, D_full, L, M_H)


def _assemble_A(ops):
    nf = ops.dofs.n_free
    nd = ops.nondegenerate
    Minv = sp.diags(1.0 / ops.M_rho.diagonal())
    S_total = sum(ops.S)
    Z = sp.csr_matrix((nf, nf))
    I = sp.identity(nf, format="csr")
    if not nd:
        return sp.bmat([[Z, I], [-(Minv @ S_total), Z]], format="csr")
    GtW = sp.hstack([ops.G.T @ ops.Wc[j] for j in nd])
    KG = sp.vstack([ops.Kb[j] @ ops.G for j in nd])
    K_nd = sp.block_diag([ops.Kb[j] for j in nd])
    n_phi = ops.dofs.n_phi
    return sp.bmat([[Z, I, sp.csr_matrix((nf, n_phi))],
                    [-(Minv @ S_total), Z, Minv @ GtW],
                    [KG, sp.csr_matrix((n_phi, nf)), -K_nd]], format="csr")


def assemble_ad(mesh, material):
    """Same operators as :func:`assemble_reduced`, with the augmented generator A built."""
    ops = assemble_reduced(mesh, material)
    ops.A
    return ops


def assemble_B(ops, sigma, mu, delta0=None):
    """Real and imaginary parts of the reduced frequency-domain form at sigma + i mu.

    B1 = G^T area ReI G + sigma M_rho, B2 = G^T area ImI G + mu M_rho.
    Requires ``sigma >= -delta0`` (default 0.9 times the smallest relaxation rate).
    """
    if delta0 is None:
        delta0 = ops.material.default_delta0()
    if ops.nondegenerate and sigma < -delta0:
        raise ValueError(f"sigma={sigma} violates sigma >= -delta0 = {-delta0:.6g}")
    nd = [j in ops.nondegenerate for j in range(ops.dofs.n_branches)]
    re, im = script_I_blocks(ops.C, ops.rates, sigma, mu, nd, delta=1e-14 if ops.nondegenerate else None)
    a = ops.areas[:, None, None]
    B1 = ops.G.T @ block_diag(a * _sym(re)) @ ops.G + sigma * ops.M_rho
    B2 = ops.G.T @ block_diag(a * _sym(im)) @ ops.G + mu * ops.M_rho
    return _sym_sparse(B1), _sym_sparse(B2)


def _sym_sparse(A):
    A = A.tocsr()
    return ((A + A.T) * 0.5).tocsr()


def dump_coo(A, path):
    """Write a sparse matrix as 'i j value' lines with a 'rows cols nnz' header."""
    A = sp.coo_matrix(A)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
