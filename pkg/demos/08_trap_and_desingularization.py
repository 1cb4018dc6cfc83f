"""Turning inside the trap chart, and smoothing an even-order pole."""

import numpy as np

from reeblab import orbits, reeb
from reeblab.gallery import builtin

rows, summary = orbits.trap_diagnostics(builtin("trap_chart", eps=0.1), [0.01, 0.05, 0.2])
for r in rows:
    print(f"t = {r['t']:<5} dtheta per unit xi = {r['dtheta_per_xi']:.6f}")
print("entry-exit:", summary["entry_exit"])

s = builtin("t3_bm", m=2)
p_in = [np.arcsin(0.03), 0.0, 1.0]
for eps in (0.2, 0.1, 0.05):
    d = reeb.desingularize_even(s, eps)
    diff = reeb.reeb_off_Z(s, p_in).vector - reeb.reeb_off_Z(d, p_in).vector
    print(f"eps = {eps}: |R_eps - R| at sin x = 0.03 is {np.max(np.abs(diff)):.3e}")
