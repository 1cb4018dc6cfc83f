"""Restricted three-body charts: transforms, the infinity cylinder and energy drift."""

import numpy as np

from reeblab import flow, reeb
from reeblab.gallery import TRANSFORMS, builtin, infinity_cylinder_point, rpc3bp_hamiltonian
from reeblab.system import project

print("H at mu = 0:", rpc3bp_hamiltonian("cartesian", [1.0, 0.0, 0.0, 1.0], mu=0.0))
p = np.array([3.0, 0.4, 0.2, -0.7])
print("canonicity residual:", TRANSFORMS["cartesian_to_mcgehee"].canonicity_residual(p))

cyl = builtin("rpc3bp_infinity_cylinder", c=1.0)
for pr in (0.0, 1.0, 2.0):
    print(f"margin at Pr = {pr}:", reeb.liouville_margin(cyl, infinity_cylinder_point(0, pr, 1))[1])

m = builtin("rpc3bp_mcgehee", mu=0.5, c=1.0)
start = TRANSFORMS["cartesian_to_mcgehee"].apply([0.1, -4.0, 0.1, -1.7])
start = project(m, start)
tr = flow.flow_system(m, start, 50.0, kind="hamiltonian")
print("x from", start[0], "to", tr.final[0], "energy drift", flow.conservation_drift(tr, m.f_H))
