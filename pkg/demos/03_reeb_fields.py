"""Reeb fields off and on the critical set for the torus and the sphere."""

import math

from reeblab import reeb
from reeblab.gallery import builtin

t3 = builtin("t3_bm")
print("T3 off Z:", reeb.reeb_off_Z(t3, [math.pi / 2, 0.0, math.pi / 4]).vector)
print("T3 on Z :", reeb.reeb_on_Z(t3, [0.0, 0.0, 1.0]).vector)

s3 = builtin("s3_b")
r = math.sqrt(0.5)
print("S3 off Z:", reeb.reeb_off_Z(s3, [r, 0.0, r, 0.0]).vector)
for y1 in (0.0, 0.5):
    p = [0.0, y1, math.sqrt(1 - y1 * y1), 0.0]
    print(f"S3 on Z, y1 = {y1}:", reeb.reeb_on_Z(s3, p).vector)
print("S2xS1 on Z:", reeb.reeb_on_Z(builtin("s2s1"), [0.2, 1.0, 0.0]).vector)
