"""Integrodifferential (relaxation) form with recursive exponential convolution.

With zero initial viscous strain the viscous strain of branch j is

    h_j(t) = int_0^t exp(-(t-s) K_j) K_j e(s) ds,     K_j = C_j / eta_j,

and the stress is sum_j C_j (e - h_j). For strains that are linear in time
on each step the integral is updated exactly:

    h+ = E h + (I - E) e_old + Phi (e_new - e_old),
    E = exp(-dt K),  Phi = I - (dt K)^-1 (I - E).

The displacement update is the trapezoidal (average acceleration) rule.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import block_diag
from .voigt import spd_function

_SERIES_CUT = 0.1
# Taylor coefficients of 1 - (1 - exp(-x))/x = sum_k (-1)^(k+1) x^k / (k+1)!
_SERIES = np.array([(-1.0) ** (k + 1) / math.factorial(k + 1) for k in range(1, 14)])


def _one_minus_expm1_ratio(x):
    """1 - (1 - exp(-x)) / x, by series for small |x| (avoids cancellation)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_CUT
    xs = x[small]
    out[small] = xs * np.polyval(_SERIES[::-1], xs)
    xl = x[~small]
    out[~small] = 1.0 + np.expm1(-xl) / xl
    return out


def convolution_factors(K, dt):
    """(E, Phi) for a symmetric rate matrix (or stack) K and step dt."""
    E = spd_function(K, "exp", t=dt)
    Phi = spd_function(K, lambda ev: _one_minus_expm1_ratio(dt * ev))
    return E, Phi


def convolve_step(branch, h, e_old, e_new, dt):
    """Advance one branch accumulator by dt for linearly interpolated strain."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    E, Phi = convolution_factors(branch.rate, dt)
    return E @ h + (np.eye(E.shape[-1]) - E) @ e_old + Phi @ (e_new - e_old)


def stress_id(mat, e_now, h):
    """sum_j C_j (e_now - h_j); degenerate branches contribute C_j e_now.

    ``h`` is a sequence with one accumulator per branch (ignored for
    degenerate branches, may be None there).
    """
    e_now = np.asarray(e_now, dtype=float)
    out = np.zeros_like(e_now)
    for b, hj in zip(mat.branches, h):
        if b.degenerate or hj is None:
            out = out + b.C @ e_now
        else:
            out = out + b.C @ (e_now - hj)
    return out


@dataclass
class IDTrajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    h: np.ndarray


class IDIntegrator:
    """Trapezoidal displacement update with exact convolution of the history.

    Per step, with e = G u and sigma = sum_j C_j (e - h_j):

        u+ = u + dt/2 (v + v+)
        M v+ = M v - dt/2 G^T W (sigma + sigma+)

    and h+ from the exact linear-in-time convolution, which makes sigma+
    affine in u+; the resulting SPD system is factored once.
    """

    def __init__(self, ops, dt):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.ops = ops
        self.dt = dt
        self.nd = ops.nondegenerate
        ne = ops.dofs.n_elements
        eye = np.eye(3)
        self.E, self.Phi = [], []
        for j in self.nd:
            E, Phi = convolution_factors(ops.rates[j], dt)
            self.E.append(block_diag(E))
            self.Phi.append(block_diag(Phi))
        a = ops.areas[:, None, None]
        # stress sensitivity to e_new: sum_j C_j (I - Phi_j), elastic branches C_j
        blocks = np.zeros((ne, 3, 3))
        for j in range(ops.dofs.n_branches):
            if j in self.nd:
                _, Phi = convolution_factors(ops.rates[j], dt)
                blocks += ops.C[j] @ (eye - Phi)
            else:
                blocks += ops.C[j]
        self.Wsens = block_diag(a * 0.5 * (blocks + np.swapaxes(blocks, 1, 2)))
        self.WC = [ops.Wc[j] for j in range(ops.dofs.n_branches)]
        M = ops.M_rho
        lhs = (2.0 / dt) * M + 0.5 * dt * (ops.G.T @ self.Wsens @ ops.G)
        self.lu = spla.splu(sp.csc_matrix(lhs))
        self.I = sp.identity(3 * ne, format="csr")

    def weighted_stress(self, e, h):
        """W sigma for strain e and accumulators h (list over non-degenerate branches)."""
        out = sum(W @ e for W in self.WC)
        for q, j in enumerate(self.nd):
            out = out - self.WC[j] @ h[q]
        return out

    def step(self, u, v, h):
        ops, dt = self.ops, self.dt
        G = ops.G
        e_old = G @ u
        Ws_old = self.weighted_stress(e_old, h)
        # W sigma+ = Wsens e_new + W * sum_j C_j (-E h - (I - E - Phi) e_old)
        const = np.zeros_like(e_old)
        for q, j in enumerate(self.nd):
            hist = self.E[q] @ h[q] + (self.I - self.E[q] - self.Phi[q]) @ e_old
            const -= self.WC[j] @ hist
        M = ops.M_rho
        rhs = (2.0 / dt) * (M @ u) + 2.0 * (M @ v) - 0.5 * dt * (G.T @ (Ws_old + const))
        u_new = self.lu.solve(rhs)
        v_new = 2.0 * (u_new - u) / dt - v
        e_new = G @ u_new
        h_new = [self.E[q] @ h[q] + (self.I - self.E[q]) @ e_old + self.Phi[q] @ (e_new - e_old)
                 for q in range(len(self.nd))]
        return u_new, v_new, h_new


def run_id(ops, u0, v0, dt, T, every=1):
    """Integrate the relaxation form from (u0, v0) with zero viscous history.

    Returns an :class:`IDTrajectory` sampled every ``every`` steps
    (``h`` has shape (samples, n_nondegenerate, 3 * n_elements)).
    """
    n_steps = int(round(T / dt))
    if not np.isclose(n_steps * dt, T, rtol=1e-12, atol=0):
        raise ValueError("T must be an integer multiple of dt")
    integ = IDIntegrator(ops, dt)
    u = np.asarray(u0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    h = [np.zeros(3 * ops.dofs.n_elements) for _ in ops.nondegenerate]
    ts, us, vs, hs = [0.0], [u.copy()], [v.copy()], [np.array(h).copy()]
    for k in range(1, n_steps + 1):
        u, v, h = integ.step(u, v, h)
        if k % every == 0 or k == n_steps:
            ts.append(k * dt)
            us.append(u.copy())
            vs.append(v.copy())
            hs.append(np.array(h).copy())
    return IDTrajectory(np.array(ts), np.array(us), np.array(vs), np.array(hs))


def id_energy(ops, u, v):
    """1/2 |v|_rho^2 + 1/2 (C e[u], e[u]) summed over all branches (elastic limit)."""
    e = ops.G @ u
    return 0.5 * float(v @ (ops.M_rho @ v)) + 0.5 * float(sum(e @ (W @ e) for W in ops.Wc))
