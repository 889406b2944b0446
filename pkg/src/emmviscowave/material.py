"""Extended Maxwell (EMM) and extended standard linear solid (ESLSM) materials.

A material is a density plus ``n`` Maxwell branches, each a spring ``C_j``
(Kelvin matrix) in series with a dashpot of viscosity ``eta_j``. A branch
flagged ``degenerate`` is a purely elastic unit: its relaxation rate
``C_j / eta_j`` is treated as absent, so it carries no viscous strain.
"""
from dataclasses import dataclass, field

import numpy as np

from .voigt import check_stiffness, spd_function, SingularSpectrumError


@dataclass(frozen=True, eq=False)
class MaxwellBranch:
    C: np.ndarray
    eta: float = np.inf
    degenerate: bool = False

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        check_stiffness(C)
        C = 0.5 * (C + C.T)
        C.setflags(write=False)
        object.__setattr__(self, "C", C)
        if not self.degenerate and not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"viscosity must be positive and finite, got {self.eta}")

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def rate(self):
        """Relaxation-rate matrix C/eta (zero for a degenerate branch)."""
        if self.degenerate:
            return np.zeros_like(self.C)
        return self.C / self.eta


@dataclass(frozen=True, eq=False)
class EmmMaterial:
    """Density and Maxwell branches at one point (or one homogeneous phase)."""

    rho: float
    branches: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise ValueError("material needs at least one branch")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValueError(f"density must be positive, got {self.rho}")
        ms = {b.m for b in self.branches}
        if len(ms) != 1:
            raise ValueError("all branches must share the Kelvin dimension")
        check_stiffness(self.C_total)

    @property
    def n(self):
        return len(self.branches)

    @property
    def m(self):
        return self.branches[0].m

    @property
    def C_total(self):
        return sum(b.C for b in self.branches)

    @property
    def degenerate(self):
        return tuple(b.degenerate for b in self.branches)

    def default_delta0(self):
        """0.9 times the smallest eigenvalue over the non-degenerate relaxation rates."""
        lams = [np.linalg.eigvalsh(b.rate)[0] for b in self.branches if not b.degenerate]
        return 0.9 * min(lams) if lams else 0.0


def isotropic(lame_lambda, lame_mu, d=2):
    """Kelvin matrix of an isotropic stiffness (plane strain for d=2)."""
    m = d * (d + 1) // 2
    K = np.zeros((m, m))
    K[:d, :d] = lame_lambda
    K[np.arange(d), np.arange(d)] += 2 * lame_mu
    K[np.arange(d, m), np.arange(d, m)] = 2 * lame_mu
    return K


def relaxation_kernel(branch, t):
    """exp(-t C/eta) C/eta, the relaxation kernel of a Maxwell branch."""
    if branch.degenerate:
        raise ValueError("degenerate branch has no relaxation kernel")
    if t < 0:
        raise ValueError("t must be non-negative")
    K = branch.rate
    return spd_function(K, "exp", t=t) @ K


def complex_modulus(mat, lam):
    """lam * sum_j (lam I + C_j/eta_j)^-1 C_j; degenerate branches add C_j."""
    out = np.zeros((mat.m, mat.m), dtype=complex if np.iscomplexobj(lam) else float)
    for j, b in enumerate(mat.branches):
        if b.degenerate:
            out = out + b.C
            continue
        try:
            R = spd_function(b.rate, "shift_inv", lam=lam)
        except SingularSpectrumError as exc:
            raise SingularSpectrumError(f"lam hits the spectrum of branch {j}", exc.eigenvalue) from None
        out = out + lam * R @ b.C
    return out


def script_I_blocks(C, rates, sigma, mu, nondegenerate=None, delta=None):
    """Stacked real/imaginary coefficient of the reduced frequency operator.

    ``C`` and ``rates`` have shape (n, ..., m, m). With
    ``K_j = sigma I + rates_j``, returns

        ReI = sum_j C_j K_j (mu^2 I + K_j^2)^-1
        ImI = -mu sum_j C_j (mu^2 I + K_j^2)^-1

    If ``delta`` is given, every non-degenerate ``K_j`` must satisfy
    ``K_j >= delta``.
    """
    C = np.asarray(C, dtype=float)
    rates = np.asarray(rates, dtype=float)
    n, m = C.shape[0], C.shape[-1]
    eye = np.eye(m)
    if nondegenerate is None:
        nondegenerate = [True] * n
    re = np.zeros(C.shape[1:])
    im = np.zeros(C.shape[1:])
    for j in range(n):
        K = sigma * eye + rates[j]
        if delta is not None and nondegenerate[j]:
            kmin = np.linalg.eigvalsh(K)[..., 0].min()
            if kmin < delta:
                raise ValueError(
                    f"branch {j}: sigma I + C/eta has eigenvalue {kmin:.6g} below delta={delta:.6g}"
                )
        try:
            S = spd_function(K, "sq_shift_inv", mu=mu)
        except SingularSpectrumError as exc:
            raise SingularSpectrumError(f"lam = sigma + i mu hits the spectrum of branch {j}", exc.eigenvalue) from None
        re += C[j] @ K @ S
        im -= mu * C[j] @ S
    return re, im


def script_I(mat, sigma, mu, delta=None):
    """(ReI, ImI) at a point; see :func:`script_I_blocks`.

    ``delta`` defaults to ``1e-12``, i.e. only positivity of the shifted
    rates is demanded.
    """
    C = np.stack([b.C for b in mat.branches])
    rates = np.stack([b.rate for b in mat.branches])
    nd = [not b.degenerate for b in mat.branches]
    return script_I_blocks(C, rates, sigma, mu, nd, 1e-12 if delta is None else delta)


class MaterialField:
    """Piecewise-constant material: a list of phases and an element -> phase map.

    All phases must share the number of branches and the degenerate pattern,
    so that the internal-variable layout is the same on every element.
    """

    def __init__(self, phases, element_phase):
        self.phases = tuple(phases)
        self.element_phase = np.asarray(element_phase, dtype=int)
        if not self.phases:
            raise ValueError("no phases")
        p0 = self.phases[0]
        for p in self.phases[1:]:
            if p.n != p0.n or p.degenerate != p0.degenerate or p.m != p0.m:
                raise ValueError("phases must share branch count, Kelvin size and degenerate pattern")
        if self.element_phase.ndim != 1 or self.element_phase.min(initial=0) < 0 or \
                self.element_phase.max(initial=0) >= len(self.phases):
            raise ValueError("element_phase entries must index phases")

    @classmethod
    def uniform(cls, mat, n_elements):
        return cls([mat], np.zeros(n_elements, dtype=int))

    @property
    def n_elements(self):
        return self.element_phase.size

    @property
    def n(self):
        return self.phases[0].n

    @property
    def m(self):
        return self.phases[0].m

    @property
    def degenerate(self):
        return self.phases[0].degenerate

    def rho(self):
        return np.array([p.rho for p in self.phases])[self.element_phase]

    def C(self):
        """Per-branch per-element stiffness, shape (n, n_elements, m, m)."""
        tab = np.array([[b.C for b in p.branches] for p in self.phases])
        return np.transpose(tab, (1, 0, 2, 3))[:, self.element_phase]

    def rates(self):
        tab = np.array([[b.rate for b in p.branches] for p in self.phases])
        return np.transpose(tab, (1, 0, 2, 3))[:, self.element_phase]

    def eta(self):
        tab = np.array([[b.eta if not b.degenerate else np.inf for b in p.branches] for p in self.phases])
        return tab.T[:, self.element_phase]

    def default_delta0(self):
        return min(p.default_delta0() for p in self.phases)
