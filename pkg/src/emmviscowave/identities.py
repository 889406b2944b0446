"""Randomized checks of the pointwise tensor identities behind the elimination.

Every identity is evaluated twice: once through the eigendecomposition
routines of :mod:`emmviscowave.voigt` / :mod:`emmviscowave.material` and once
by dense ``numpy.linalg`` inverses or index contractions.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .material import EmmMaterial, MaxwellBranch, complex_modulus
from .voigt import (check_elimination_identity, from_voigt, kelvin_to_tensor, random_spd,
                    resolvent_split, tensor_to_kelvin, to_voigt)

IDENTITY_TOL = 1e-12
COND_MAX = 50.0


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), np.finfo(float).tiny))


def elimination_residual(rng):
    """lam (lam + C/eta)^-1 C = C - C/eta (lam + C/eta)^-1 C for random C, eta, lam > 0."""
    C = random_spd(rng, 3, rng.uniform(1.0, COND_MAX), rng.uniform(0.5, 5.0))
    return check_elimination_identity(C, rng.uniform(0.1, 10.0), rng.uniform(0.05, 20.0))


def split_residual(rng):
    """Q + iR against a dense complex inverse of (i mu I + K)."""
    K = random_spd(rng, 3, rng.uniform(1.0, COND_MAX), rng.uniform(0.1, 5.0))
    mu = rng.uniform(-10.0, 10.0)
    Q, R = resolvent_split(K, mu)
    ref = np.linalg.inv(1j * mu * np.eye(3) + K)
    return _rel(Q + 1j * R, ref)


def laplace_bc_residual(rng, n_branches=3):
    """sum_j (I - (lam + K_j)^-1 K_j) C_j against the complex modulus, lam > 0."""
    branches = [MaxwellBranch(random_spd(rng, 3, rng.uniform(1.0, COND_MAX), rng.uniform(0.5, 5.0)),
                              rng.uniform(0.1, 10.0)) for _ in range(n_branches)]
    mat = EmmMaterial(1.0, branches)
    lam = rng.uniform(0.05, 20.0)
    eye = np.eye(3)
    lhs = sum((eye - np.linalg.solve(lam * eye + b.C / b.eta, b.C / b.eta)) @ b.C for b in branches)
    return _rel(lhs, complex_modulus(mat, lam))


def _random_stiffness_tensor(rng):
    """Random rank-4 tensor with minor and major symmetry, built by averaging."""
    A = rng.standard_normal((2, 2, 2, 2))
    A = 0.5 * (A + A.transpose(1, 0, 2, 3))
    A = 0.5 * (A + A.transpose(0, 1, 3, 2))
    return 0.5 * (A + A.transpose(2, 3, 0, 1))


def contraction_residual(rng):
    """C : w and w : w' as index contractions against Kelvin matrix-vector products."""
    T = _random_stiffness_tensor(rng)
    K = tensor_to_kelvin(T)
    a, b = rng.standard_normal((2, 2, 2))
    w, w2 = a + a.T, b + b.T
    sig = np.einsum("ijkl,kl->ij", T, w)
    r1 = _rel(from_voigt(K @ to_voigt(w)), sig)
    dot = np.einsum("ij,ij->", w, w2)
    r2 = abs(to_voigt(w) @ to_voigt(w2) - dot) / max(np.linalg.norm(w) * np.linalg.norm(w2), 1e-300)
    r3 = _rel(kelvin_to_tensor(K), T)
    return max(r1, float(r2), r3)


IDENTITIES = {
    "elimination": elimination_residual,
    "resolvent_split": split_residual,
    "laplace_bc": laplace_bc_residual,
    "kelvin_contraction": contraction_residual,
}


@dataclass
class IdentityReport:
    trials: int
    seed: int
    max_residual: dict = field(default_factory=dict)
    seconds: float = 0.0
    tol: float = IDENTITY_TOL

    @property
    def passed(self):
        return all(r <= self.tol for r in self.max_residual.values())

    def to_dict(self):
        return {"trials": self.trials, "seed": self.seed, "tol": self.tol,
                "max_residual": dict(self.max_residual), "passed": self.passed,
                "seconds": self.seconds}


def run_identity_suite(trials=1000, seed=0):
    """Max relative residual of each identity over ``trials`` random instances."""
    if trials < 1:
        raise ValueError("trials must be positive")
    t0 = time.perf_counter()
    out = {}
    for k, (name, fn) in enumerate(IDENTITIES.items()):
        rng = np.random.default_rng([seed, k])
        out[name] = max(fn(rng) for _ in range(trials))
    return IdentityReport(trials, seed, out, time.perf_counter() - t0)
