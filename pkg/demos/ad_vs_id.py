"""Second-order agreement of the internal-variable and relaxation-kernel formulations.

Run: python3 demos/ad_vs_id.py
"""
from emmviscowave.assembly import assemble_reduced
from emmviscowave.experiments import ad_id_deviation
from emmviscowave.material import EmmMaterial, MaxwellBranch, isotropic
from emmviscowave.mesh import rect_mesh

mat = EmmMaterial(1.0, [MaxwellBranch(isotropic(1.0, 1.0), 0.2),
                        MaxwellBranch(isotropic(0.5, 0.5), 0.5)])
ops = assemble_reduced(rect_mesh(8, 8, {"left": "D"}), mat)
prev = None
for dt in (8e-3, 4e-3, 2e-3, 1e-3):
    dev = ad_id_deviation(ops, dt, 1.0)
    print(f"dt = {dt:.0e}: relative displacement deviation at T=1 {dev:.3e}"
          + ("" if prev is None else f", ratio {prev / dev:.3f}"))
    prev = dev
