"""Monotone witnesses rule out periodic orbits away from Z."""

import numpy as np

from reeblab import flow, orbits
from reeblab.gallery import builtin
from reeblab.system import sample_points

for name, witness in (("s3_b", "y1"), ("t3_bm", "log_tan")):
    s = builtin(name)
    for p in sample_points(s, np.random.default_rng(0), 3):
        rep = orbits.witness_check(s, flow.flow_system(s, p, 3.0), witness)
        print(name, witness, rep["verdict"], rep["direction"],
              f"rate residual {rep['max_rate_residual']:.1e}")
