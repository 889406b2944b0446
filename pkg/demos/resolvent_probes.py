"""Resolvent probes of the reduced generator and a stationary mode of the augmented one.

Run: python3 demos/resolvent_probes.py
"""
import numpy as np

from emmviscowave.assembly import assemble_ad, assemble_reduced
from emmviscowave.material import EmmMaterial, MaxwellBranch, isotropic
from emmviscowave.mesh import rect_mesh
from emmviscowave.spectral import build_stationary, check_dissipativity, eps2_hat, kernel_residual, probe_resolvent

mat = EmmMaterial(1.0, [MaxwellBranch(isotropic(1.0, 1.0), 0.2),
                        MaxwellBranch(isotropic(0.5, 0.5), 0.5)])
mesh = rect_mesh(8, 8, {"left": "D"})
ops = assemble_reduced(mesh, mat)
print(f"dissipativity residual {check_dissipativity(ops):.1e}")
e2 = eps2_hat(ops)
print(f"eps2_hat = {e2:.4f} (the reduced generator is invertible at 0)")
for lam in (0.1, 1.0, 10.0, 1j, 5j):
    if isinstance(lam, complex):
        p = probe_resolvent(ops, lam)
        print(f"  lambda = {lam}: smin_H = {p.smin_H:.5f}, invertible {p.satisfied}")
    else:
        p = probe_resolvent(ops, lam, e2)
        print(f"  lambda = {lam}: smin_H = {p.smin_H:.5f} >= sqrt(lambda^2 + eps2_hat) = {p.bound:.5f}: {p.satisfied}")
ops_ad = assemble_ad(mesh, mat)
U = build_stationary(ops_ad, np.random.default_rng(0).standard_normal(ops_ad.dofs.n_phi))
print(f"augmented generator kernel vector: relative residual {kernel_residual(ops_ad, U):.1e}")
