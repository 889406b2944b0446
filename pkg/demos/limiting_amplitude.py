"""Convergence to the time-harmonic state under ramped boundary forcing.

Run: python3 demos/limiting_amplitude.py
"""
from emmviscowave.assembly import assemble_reduced
from emmviscowave.experiments import boundary_forcing
from emmviscowave.freq import limiting_amplitude_run, solve_lambda
from emmviscowave.material import EmmMaterial, MaxwellBranch, isotropic
from emmviscowave.mesh import rect_mesh

mat = EmmMaterial(1.0, [MaxwellBranch(isotropic(1.0, 1.0), 0.2),
                        MaxwellBranch(isotropic(0.5, 0.5), 0.5)])
ops = assemble_reduced(rect_mesh(8, 8, {"left": "D"}), mat)
g = boundary_forcing(ops, (1.0, 0.5), 1.0)
for kappa in (0.5, 1.0, 2.0):
    harm = solve_lambda(ops, 0.0, kappa, g_D=g)
    run = limiting_amplitude_run(ops, kappa, g, t0=2.0, T=20.0, dt=0.002, every=10, harmonic=harm)
    print(f"kappa = {kappa}: harmonic residual {harm.residual:.1e}, "
          f"mismatch {run.mismatch_H[-1]:.2e} at T, fitted rate {run.fitted_rate:.4f} (r2 {run.r2:.6f})")
