"""Frequency-domain solves of the reduced system and the limiting amplitude run.

At lam = sigma + i mu the reduced resolvent equation (lam - L) x = F with
Dirichlet velocity data g is

    lam M v + sum_j G^T W C_j psi_j = f                  (f: dual load)
    (lam + K_j) psi_j = G v + G_D g + omega_j            (K_j = C_j/eta_j)

Eliminating psi_j gives the complex symmetric system (B1 + i B2) v = rhs,
with B1, B2 from :func:`emmviscowave.assembly.assemble_B`.
"""
import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_B, block_diag
from .spectral import h_norm
from .timestep import corrector_weight, fit_decay, reduced_stepper
from .voigt import spd_function


@dataclass
class HarmonicSolution:
    sigma: float
    kappa: float
    v0: np.ndarray
    psi0: np.ndarray
    g: np.ndarray
    residual: float

    @property
    def x(self):
        return np.concatenate([self.v0, self.psi0])


def _branch_resolvents(ops, lam):
    return [block_diag(spd_function(ops.rates[j], "shift_inv", lam=lam)) for j in range(ops.dofs.n_branches)]


def _dirichlet_data(ops, g_D):
    nD = ops.dofs.dirichlet.size
    if g_D is None:
        return np.zeros(nD)
    g_D = np.asarray(g_D)
    if g_D.size == 2 * ops.dofs.n_nodes:
        return g_D.reshape(-1)[ops.dofs.dirichlet]
    if g_D.size != nD:
        raise ValueError(f"g_D must be a full nodal field or have {nD} Dirichlet entries")
    return g_D.reshape(-1)


def _split_omega(ops, omega):
    k = 3 * ops.dofs.n_elements
    n = ops.dofs.n_branches
    if omega is None:
        return [np.zeros(k)] * n
    omega = np.asarray(omega)
    if omega.size != n * k:
        raise ValueError(f"omega must have length {n * k}")
    return [omega[j * k:(j + 1) * k] for j in range(n)]


def first_order_residual(ops, lam, v, psi, f=None, omega=None, g=None):
    """Relative residual of (lam - L) x = F in weak first-order form."""
    nf = ops.dofs.n_free
    f = np.zeros(nf) if f is None else np.asarray(f)
    g = _dirichlet_data(ops, g)
    om = _split_omega(ops, omega)
    ev = ops.G @ v + ops.G_D @ g
    k = 3 * ops.dofs.n_elements
    lam_Mv = lam * (ops.M_rho @ v)
    stress = sum(ops.G.T @ (ops.Wc[j] @ psi[j * k:(j + 1) * k]) for j in range(ops.dofs.n_branches))
    r_v = lam_Mv + stress - f
    scale_v = np.linalg.norm(lam_Mv) + np.linalg.norm(stress) + np.linalg.norm(f)
    r_psi, scale_psi = [], 0.0
    for j in range(ops.dofs.n_branches):
        pj = psi[j * k:(j + 1) * k]
        lhs = lam * pj + ops.Kb[j] @ pj
        r_psi.append(lhs - ev - om[j])
        scale_psi += np.linalg.norm(lhs) + np.linalg.norm(ev) + np.linalg.norm(om[j])
    rv = np.linalg.norm(r_v) / scale_v if scale_v > 0 else 0.0
    rp = np.linalg.norm(np.concatenate(r_psi)) / scale_psi if scale_psi > 0 else 0.0
    return float(max(rv, rp))


def solve_lambda(ops, sigma, mu, f=None, g_D=None, omega=None, delta0=None):
    """Solve the reduced resolvent equation at lam = sigma + i mu by eliminating psi.

    Parameters
    ----------
    f : dual-space velocity load (length n_free), default 0
    g_D : Dirichlet velocity trace, either a full nodal field or the
        Dirichlet entries only, default 0
    omega : internal-variable load (length n_psi), default 0
    """
    lam = complex(sigma, mu)
    nf = ops.dofs.n_free
    f = np.zeros(nf) if f is None else np.asarray(f)
    g = _dirichlet_data(ops, g_D)
    om = _split_omega(ops, omega)
    B1, B2 = assemble_B(ops, sigma, mu, delta0)
    Rj = _branch_resolvents(ops, lam)
    lift = ops.G_D @ g
    rhs = f.astype(complex)
    for j in range(ops.dofs.n_branches):
        rhs = rhs - ops.G.T @ (ops.Wc[j] @ (Rj[j] @ (lift + om[j])))
    Bc = (B1 + 1j * B2).tocsc()
    try:
        v = spla.splu(Bc).solve(rhs)
    except RuntimeError as exc:
        raise RuntimeError(f"complex system singular at lam={lam}: {exc}") from exc
    ev = ops.G @ v + lift
    psi = np.concatenate([Rj[j] @ (ev + om[j]) for j in range(ops.dofs.n_branches)])
    res = first_order_residual(ops, lam, v, psi, f, omega, g)
    return HarmonicSolution(float(sigma), float(mu), v, psi, g, res)


def _is_pd(A):
    try:
        np.linalg.cholesky(A.toarray())
        return True
    except np.linalg.LinAlgError:
        return False


def measured_delta0(ops, mu=0.0, n_grid=40):
    """Largest grid value d in [0, delta0] with B1(sigma, mu) positive definite for all grid sigma in [-d, 0].

    The material margin delta0 only keeps the branch resolvents SPD; the
    negative mass term sigma M_rho can make the discrete B1 indefinite
    before sigma reaches -delta0, so the coercive range is measured here.
    Returns 0.0 if B1 is not positive definite at sigma = 0 (large |mu|).
    """
    d0 = ops.material.default_delta0() if ops.nondegenerate else 0.0
    best = 0.0
    for d in np.linspace(0.0, d0, n_grid + 1):
        if not _is_pd(assemble_B(ops, -d, mu)[0]):
            return best if d > 0 else 0.0
        best = float(d)
    return best


def solve_unreduced(ops, sigma, mu, f=None, g_D=None, omega=None):
    """Direct sparse solve of the unreduced block system (reference path)."""
    lam = complex(sigma, mu)
    nf, n = ops.dofs.n_free, ops.dofs.n_branches
    f = np.zeros(nf) if f is None else np.asarray(f)
    g = _dirichlet_data(ops, g_D)
    om = _split_omega(ops, omega)
    Bv = ops.coupling()
    k = 3 * ops.dofs.n_elements
    K = sp.block_diag(ops.Kb)
    blk = sp.bmat([[lam * ops.M_rho, Bv.T],
                   [-sp.vstack([ops.G] * n), lam * sp.identity(n * k) + K]], format="csc")
    lift = ops.G_D @ g
    rhs = np.concatenate([f.astype(complex)] + [lift + om[j] for j in range(n)])
    sol = spla.spsolve(blk, rhs)
    return sol[:nf], sol[nf:]


def ramp(t, t0):
    """Quintic smoothstep: 0 at t <= 0, 1 at t >= t0, C^2 in between."""
    s = np.clip(np.asarray(t, dtype=float) / t0, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s * s)


@dataclass
class LimitingAmplitudeResult:
    kappa: float
    t: np.ndarray
    mismatch_H: np.ndarray
    energy: np.ndarray
    harmonic: HarmonicSolution
    fitted_rate: float
    r2: float
    mismatch_amended: np.ndarray = None
    fitted_rate_amended: float = float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mismatch_H", "energy"])
            for row in zip(self.t, self.mismatch_H, self.energy):
                w.writerow([format(float(v), ".17g") for v in row])

    def summary(self):
        return {"kappa": self.kappa, "fitted_rate": self.fitted_rate, "r2": self.r2,
                "residual_harmonic": self.harmonic.residual,
                "fitted_rate_amended": self.fitted_rate_amended}


def amended_energy_complex(ops, y, c_f=None):
    """Amended energy of a complex state: E(y) + E(L y) + c_f Re f_E(y)."""
    if c_f is None:
        c_f = corrector_weight(ops)
    Ly = ops.L @ y
    v, psi = ops.split_reduced(y)
    fE = float(np.real(np.vdot(psi, ops.coupling() @ v)))
    return 0.5 * (h_norm(ops, y) ** 2 + h_norm(ops, Ly) ** 2) + c_f * fE


def limiting_amplitude_run(ops, kappa, f_tilde, t0, T, dt, start="zero", every=1,
                           fit_window=0.5, harmonic=None):
    """Time-harmonic Dirichlet forcing exp(i kappa t) chi(t) f_tilde on the clamped boundary.

    The complex state obeys x' = L x + b(t) with b = (0, G_D g(t) per branch);
    the midpoint rule averages b over each step. ``start="zero"`` begins at
    rest with the ramp chi; ``start="harmonic"`` begins on the harmonic
    solution with chi = 1. The mismatch is |x(t) - exp(i kappa t) x0|_H and
    its square is fitted to an exponential on the post-ramp tail. The
    amended energy of the same difference is recorded and fitted as well.

    ``fitted_rate`` is the log-slope of the squared mismatch, negative when
    the run converges to the harmonic state.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if start not in ("zero", "harmonic"):
        raise ValueError("start must be 'zero' or 'harmonic'")
    if start == "zero" and not t0 > 0:
        raise ValueError("ramp time t0 must be positive")
    if harmonic is None:
        harmonic = solve_lambda(ops, 0.0, kappa, g_D=f_tilde)
    x0 = harmonic.x
    g = harmonic.g
    n_steps = int(round(T / dt))
    stepper = reduced_stepper(ops, dt)
    n = ops.dofs.n_branches
    lift = ops.G_D @ g
    nf = ops.dofs.n_free

    def forcing(t):
        chi = 1.0 if start == "harmonic" else float(ramp(t, t0))
        b = np.zeros(ops.n_reduced, dtype=complex)
        if chi != 0.0:
            b[nf:] = np.tile(np.exp(1j * kappa * t) * chi * lift, n)
        return b

    x = x0.copy() if start == "harmonic" else np.zeros(ops.n_reduced, dtype=complex)
    ts, mis, en, am = [], [], [], []
    c_f = corrector_weight(ops)

    def record(t, x):
        y = x - np.exp(1j * kappa * t) * x0
        ts.append(t)
        mis.append(h_norm(ops, y))
        en.append(0.5 * h_norm(ops, x) ** 2)
        am.append(amended_energy_complex(ops, y, c_f))

    record(0.0, x)
    b_old = forcing(0.0)
    for k in range(1, n_steps + 1):
        t = k * dt
        b_new = forcing(t)
        x = stepper.step(x, 0.5 * (b_old + b_new))
        b_old = b_new
        if k % every == 0 or k == n_steps:
            record(t, x)
    ts, mis, en, am = np.array(ts), np.array(mis), np.array(en), np.array(am)
    rate, r2, rate_am = float("nan"), float("nan"), float("nan")
    tail = ts >= (t0 if start == "zero" else 0.0)
    if np.count_nonzero(tail) >= 2 and np.all(mis[tail] > 0):
        rate, r2 = fit_decay(ts[tail], mis[tail] ** 2, window=fit_window)
        rate = -rate
    if np.count_nonzero(tail) >= 2 and np.all(am[tail] > 0):
        rate_am, _ = fit_decay(ts[tail], am[tail], window=fit_window)
        rate_am = -rate_am
    return LimitingAmplitudeResult(float(kappa), ts, mis, en, harmonic, rate, r2, am, rate_am)
