"""Zeros of the Reeb field on Z and periodic orbits found by shooting."""

import math

from reeblab import orbits
from reeblab.gallery import builtin, infinity_cylinder_point

for name in ("s3_b", "t3_bm", "s2s1"):
    s = builtin(name)
    rep = orbits.zero_set_report(s, orbits.z_seed_grid(s, 48, 0))
    print(name, rep["verdict"], rep["zeros"] or rep["families"] or rep.get("note"))

s3 = builtin("s3_b")
for y1 in (0.0, 0.5):
    rec = orbits.periodic_from_seed(s3, [0.0, y1, math.sqrt(1 - y1 * y1), 0.0])
    print(f"S3 y1 = {y1}: period {rec.period:.10f} vs {math.pi * (1 + y1 * y1):.10f}")

cyl = builtin("rpc3bp_infinity_cylinder", c=1.0)
for pr in (0.0, 1.0):
    rec = orbits.periodic_from_seed(cyl, infinity_cylinder_point(0.0, pr, 1.0))
    print(f"cylinder Pr = {pr}: period {rec.period:.10f} vs {math.pi * (pr * pr + 2):.10f}")
