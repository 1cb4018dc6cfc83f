"""Orbits that leave one zero of R on Z and arrive at another."""

import math

from reeblab import orbits
from reeblab.errors import InconclusiveError
from reeblab.gallery import builtin

rec = orbits.detect_singular_orbit(builtin("s3_b"), [1.0, 0.0, 0.0, 0.0])
print("S3:", rec.p_minus, "->", rec.p_plus, rec.confirmed_minus, rec.confirmed_plus)

rec = orbits.detect_singular_orbit(builtin("t3_bm"), [math.pi / 2, 0.0, math.pi / 2])
print("T3:", rec.p_minus, "->", rec.p_plus)

try:
    orbits.detect_singular_orbit(builtin("t3_bm"), [math.pi / 2, 0.0, math.pi / 4])
except InconclusiveError as e:
    print("T3 with drifting y:", e)
