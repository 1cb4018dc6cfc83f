"""Second-order jets and pointwise forms: the arithmetic everything else rests on."""

import math

import numpy as np

from reeblab import jets
from reeblab.forms import contract, coordinate_form, d1, wedge

j = jets.jet_eval(lambda x, y: x * y * y, [2.0, 3.0])
print("x*y^2 at (2, 3):", j.value, j.grad, j.hess.tolist())

# d of sin(phi) dx / sin(x) + cos(phi) dy at one point
x, y, phi = jets.variables([math.pi / 2, 0.0, math.pi / 4])
dw = d1([jets.sin(phi) / jets.sin(x), jets.cos(phi), jets.Jet2.constant(0.0, 3)])
print("dphi^dx, dphi^dy:", dw[2, 0], dw[2, 1])

dx, dy = coordinate_form(0, 3), coordinate_form(1, 3)
print("iota_dx (dx^dy) =", contract(np.array([1.0, 0, 0]), wedge(dx, dy)).components)
