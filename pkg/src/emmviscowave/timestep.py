"""Implicit-midpoint integration of the reduced and augmented systems, energy bookkeeping.

The midpoint rule preserves quadratic invariants, so along a trajectory of
``x' = L x`` the discrete balance

    E(x+) - E(x) = -dt * x_mid^T D x_mid

holds to round-off, the exact counterpart of the continuous dissipation law.
"""
import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class StateReduced:
    v: np.ndarray
    psi: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.v, self.psi])

    @classmethod
    def from_vector(cls, ops, x):
        v, psi = ops.split_reduced(np.asarray(x))
        return cls(v.copy(), psi.copy())


@dataclass
class StateAD:
    u1: np.ndarray
    u2: np.ndarray
    phi: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.u1, self.u2, self.phi])

    @classmethod
    def from_vector(cls, ops, U):
        u1, u2, phi = ops.split_ad(np.asarray(U))
        return cls(u1.copy(), u2.copy(), phi.copy())


@dataclass
class EnergyReport:
    t: float
    E: float
    Ebar: float
    Etilde: float
    dissipation: float
    f_E: float


class MidpointStepper:
    """(I - dt/2 A) x+ = (I + dt/2 A) x with one sparse LU reused for every step."""

    def __init__(self, A, dt):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.A = sp.csc_matrix(A)
        self.dt = dt
        n = A.shape[0]
        try:
            self.lu = spla.splu((sp.identity(n, format="csc") - 0.5 * dt * self.A).tocsc())
        except RuntimeError as exc:
            raise RuntimeError(f"factorization of I - dt/2 A failed (n={n}, dt={dt}): {exc}") from exc

    def rhs(self, x):
        return x + 0.5 * self.dt * (self.A @ x)

    def solve(self, b):
        if np.iscomplexobj(b):
            return self.lu.solve(np.ascontiguousarray(b.real)) + 1j * self.lu.solve(np.ascontiguousarray(b.imag))
        out = self.lu.solve(b)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite midpoint solution")
        return out

    def step(self, x, source=None):
        """One step; ``source`` is the midpoint-averaged forcing, added as dt * source."""
        b = self.rhs(x)
        if source is not None:
            b = b + self.dt * source
        return self.solve(b)


def _stepper(ops, which, dt):
    key = (which, float(dt))
    if key not in ops._cache:
        ops._cache[key] = MidpointStepper(ops.L if which == "L" else ops.A, dt)
    return ops._cache[key]


def reduced_stepper(ops, dt):
    return _stepper(ops, "L", dt)


def ad_stepper(ops, dt):
    return _stepper(ops, "A", dt)


def step_cn(ops, state, dt):
    """One implicit-midpoint step of the reduced system."""
    x = state.vector if isinstance(state, StateReduced) else np.asarray(state)
    out = reduced_stepper(ops, dt).step(x)
    return StateReduced.from_vector(ops, out) if isinstance(state, StateReduced) else out


def step_ad(ops, state, dt):
    """One implicit-midpoint step of the augmented system."""
    U = state.vector if isinstance(state, StateAD) else np.asarray(state)
    out = ad_stepper(ops, dt).step(U)
    return StateAD.from_vector(ops, out) if isinstance(state, StateAD) else out


def integrate(stepper, x0, n_steps, every=1):
    """Run ``n_steps`` steps; returns the states at steps 0, every, 2*every, ..."""
    x = np.asarray(x0, dtype=float)
    out = [x.copy()]
    for k in range(1, n_steps + 1):
        x = stepper.step(x)
        if k % every == 0:
            out.append(x.copy())
    return np.array(out)


# ---- energies -------------------------------------------------------------

def energy_E(ops, x):
    """E = 1/2 |v|_rho^2 + 1/2 sum_j (C_j psi_j, psi_j)."""
    x = np.asarray(x)
    return 0.5 * float(np.real(np.vdot(x, ops.M_H @ x)))


def dissipation_rate(ops, x, xdot=None):
    """-sum_j eta_j |e[v] - psi_j'|^2, with psi' taken from the reduced equation."""
    if xdot is None:
        xdot = ops.L @ x
    v, _ = ops.split_reduced(x)
    _, psidot = ops.split_reduced(xdot)
    ev = ops.G @ v
    area = ops.areas
    eta = ops.material.eta()
    total = 0.0
    for j in ops.nondegenerate:
        r = (ev - psidot[ops.branch_slice(j)]).reshape(-1, 3)
        total += float(np.sum(area * eta[j] * np.sum(r * r, axis=1)))
    return -total


def f_E(ops, x):
    """(sum_j C_j psi_j, e[v])."""
    v, psi = ops.split_reduced(x)
    return float(psi @ (ops.coupling() @ v))


def corrector_weight(ops):
    """Weight of the cross term in the amended energy.

    0.5 * lambda_min(D restricted to psi) / max(1, ||f_E form||_2), where the
    f_E form is 1/2 [[0, B^T], [B, 0]] with B the psi-velocity coupling.
    """
    if "c_f" in ops._cache:
        return ops._cache["c_f"]
    lam_min = np.inf
    for j in range(ops.dofs.n_branches):
        if j not in ops.nondegenerate:
            lam_min = 0.0
            continue
        blocks = ops.areas[:, None, None] * ops.C[j] @ ops.rates[j]
        lam_min = min(lam_min, float(np.linalg.eigvalsh(0.5 * (blocks + np.swapaxes(blocks, 1, 2)))[:, 0].min()))
    B = ops.coupling()
    if B.nnz == 0:
        nrm = 0.0
    elif min(B.shape) > 1:
        nrm = float(spla.svds(B, k=1, return_singular_vectors=False, random_state=0)[0])
    else:
        nrm = float(np.linalg.norm(B.toarray(), 2))
    c_f = 0.5 * lam_min / max(1.0, 0.5 * nrm)
    ops._cache["c_f"] = c_f
    return c_f


def energy(ops, state, state_dot=None, t=0.0, c_f=None):
    """Energy report of a reduced state; ``state_dot`` defaults to L x."""
    x = state.vector if isinstance(state, StateReduced) else np.asarray(state)
    if state_dot is None:
        xdot = ops.L @ x
    else:
        xdot = state_dot.vector if isinstance(state_dot, StateReduced) else np.asarray(state_dot)
    if c_f is None:
        c_f = corrector_weight(ops)
    E = energy_E(ops, x)
    Ebar = E + energy_E(ops, xdot)
    fE = f_E(ops, x)
    return EnergyReport(t, E, Ebar, Ebar + c_f * fE, dissipation_rate(ops, x, xdot), fE)


@dataclass
class EnergyTrajectory:
    t: np.ndarray
    E: np.ndarray
    Ebar: np.ndarray
    Etilde: np.ndarray
    dissipation: np.ndarray
    balance_residual: np.ndarray
    c_f: float
    final_state: np.ndarray

    def write_csv(self, path):
        write_energy_csv(path, self)


def run_energy(ops, x0, dt, n_steps, c_f=None):
    """Integrate the reduced system and record E, Ebar, Etilde each step.

    ``balance_residual[k]`` is |E_{k+1} - E_k - dt * D(x_mid)| / E_k where
    D(x_mid) is the dissipation rate evaluated independently from the
    eta-weighted strain-rate mismatch at the midpoint.
    """
    stepper = reduced_stepper(ops, dt)
    if c_f is None:
        c_f = corrector_weight(ops)
    x = np.asarray(x0, dtype=float).copy()
    y = ops.L @ x
    rows = []
    bal = np.zeros(n_steps)

    def record(k, x, y):
        E = energy_E(ops, x)
        Eb = E + energy_E(ops, y)
        rows.append((k * dt, E, Eb, Eb + c_f * f_E(ops, x), dissipation_rate(ops, x, y)))

    record(0, x, y)
    for k in range(n_steps):
        xn = stepper.step(x)
        yn = ops.L @ xn
        xm = 0.5 * (x + xn)
        E0, E1 = energy_E(ops, x), energy_E(ops, xn)
        bal[k] = abs(E1 - E0 - dt * dissipation_rate(ops, xm)) / max(E0, np.finfo(float).tiny)
        x, y = xn, yn
        record(k + 1, x, y)
    arr = np.array(rows)
    return EnergyTrajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], bal, c_f, x)


def write_energy_csv(path, traj):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "E", "Ebar", "Etilde", "dissipation"])
        for row in zip(traj.t, traj.E, traj.Ebar, traj.Etilde, traj.dissipation):
            w.writerow([format(float(v), ".17g") for v in row])


def fit_decay(t, E, window=0.5):
    """Least-squares exponential rate of a decaying positive series.

    Fits log E = a - rate * t on the last ``window`` fraction of the samples.
    Returns ``(rate, r2)``; a perfectly fitted (or constant) series has r2 = 1.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.shape != E.shape or t.size < 2:
        raise ValueError("need matching t and E with at least two samples")
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    start = int(np.floor((1 - window) * t.size))
    start = min(start, t.size - 2)
    t, E = t[start:], E[start:]
    small = E < 1e-300
    if np.any(small):
        cut = int(np.argmax(small))
        warnings.warn(f"energy underflows at t={t[cut]:.6g}; fit window truncated", RuntimeWarning)
        t, E = t[:cut], E[:cut]
        if t.size < 2:
            raise ValueError("fit window empty after underflow truncation")
    if np.any(~np.isfinite(E)):
        raise ValueError("series must be finite on the fit window")
    y = np.log(E)
    # centred normal equations: exact zero slope for a constant series
    tc, yc = t - t.mean(), y - y.mean()
    slope = float(tc @ yc / (tc @ tc))
    ss_tot = float(yc @ yc)
    ss_res = float(np.sum((yc - slope * tc) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return -slope + 0.0, float(r2)
