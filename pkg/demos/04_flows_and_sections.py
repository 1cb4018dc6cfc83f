"""Adaptive integration, dense output and section crossings."""

import math

import numpy as np

from reeblab import flow
from reeblab.gallery import builtin

t3 = builtin("t3_bm")
tr = flow.integrate(flow.reeb_flow(t3), [math.pi / 2, 0.0, math.pi / 2], (0.0, 1.0))
print("x(1) =", tr.final[0], "closed form", 2 * math.atan(math.e))

s3 = builtin("s3_b")
tr = flow.flow_system(s3, np.array([0.0, 0.5, 0.0, -math.sqrt(0.75)]), 12.0)
sec = flow.SectionSpec(lambda x1, y1, x2, y2: x2, "+", name="x2 = 0")
ts = [t for t, _ in flow.section_crossings(tr, sec)]
print("return times on Z:", np.diff(ts), "expected", math.pi * 1.25)

p0 = np.array([0.05, 0.2, 0.7, 0.0])
p0[3] = math.sqrt(1 - np.sum(p0[:3] ** 2))
tr = flow.flow_system(s3, p0, 40.0)
print("off-Z orbit ends:", tr.reason, "at t =", tr.t_end, "x1 =", tr.final[0])
