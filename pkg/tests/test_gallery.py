import math

import numpy as np
import pytest

from reeblab import gallery, jets
from reeblab.errors import CollisionError, ParamError, UnknownSystemError
from reeblab.gallery import (TRANSFORMS, builtin, infinity_cylinder_point, rpc3bp_hamiltonian,
                             transform)


def test_builtin_t3():
    s = builtin("t3_bm", m=1)
    assert s.names == ("x", "y", "phi")
    assert s.critical.key() == ("call", "sin", (("var", "x", ()),))
    p = [0.7, 0.1, 0.4]
    a = s.singular_form.value(p).components
    assert np.allclose(a, [math.sin(0.4) / math.sin(0.7), math.cos(0.4), 0.0])


def test_builtin_s3_omega_and_liouville():
    s = builtin("s3_b")
    p = np.array([0.5, 0.1, -0.3, 0.2])
    W = s.omega_matrix(p)
    assert W[0, 1] == pytest.approx(2.0) and W[2, 3] == 1.0
    Y = [jets.value_of(f(*p)) for f in s.f_liouville]
    assert np.allclose(Y, [0.25, 0.1, -0.15, 0.1])


def test_unknown_and_bad_params():
    with pytest.raises(UnknownSystemError):
        builtin("nope")
    with pytest.raises(ParamError):
        builtin("t3_bm", m=0)


def test_cartesian_h_single_primary():
    assert rpc3bp_hamiltonian("cartesian", [1.0, 0.0, 0.0, 1.0], mu=0.0) == pytest.approx(-1.5)


def test_cartesian_h_jet_hand_partials():
    s = builtin("rpc3bp_cartesian", mu=0.5)
    j = jets.jet_eval(s.f_H, [2.0, 0.0, 0.0, 1.0])
    d1, d2 = 1.5, 2.5
    assert j.value == pytest.approx(0.5 - 0.5 / d1 - 0.5 / d2 - 2.0, abs=1e-14)
    g = [0.5 * 1.5 / d1 ** 3 + 0.5 * 2.5 / d2 ** 3 - 1.0, 0.0, 0.0, -1.0]
    assert np.allclose(j.grad, g, atol=1e-14)
    H = np.zeros((4, 4))
    H[0, 0] = -1.0 / d1 ** 3 - 1.0 / d2 ** 3
    H[1, 1] = 0.5 / d1 ** 3 + 0.5 / d2 ** 3
    H[0, 3] = H[3, 0] = -1.0
    H[1, 2] = H[2, 1] = 1.0
    H[2, 2] = H[3, 3] = 1.0
    assert np.allclose(j.hess, H, atol=1e-14)


def test_collision_and_mu_range():
    with pytest.raises(CollisionError):
        rpc3bp_hamiltonian("cartesian", [0.3, 0.0, 1.0, 0.0], mu=0.3)
    with pytest.raises(ParamError):
        rpc3bp_hamiltonian("cartesian", [3.0, 0.0, 0.0, 1.0], mu=0.7)


def test_transform_examples():
    assert np.allclose(transform([1.0, 0.0, 0.0, 1.0], "cartesian_to_polar"), [1, 0, 0, 1])
    assert transform([2.0, 0.3, 0.1, 0.2], "polar_to_mcgehee")[0] == 1.0
    assert transform([8.0, 0.3, 0.1, 0.2], "polar_to_mcgehee")[0] == 0.5


def test_transform_roundtrip_and_canonicity():
    rng = np.random.default_rng(0)
    spec = TRANSFORMS["cartesian_to_mcgehee"]
    for _ in range(100):
        r = rng.uniform(0.5, 5.0)
        a = rng.uniform(0, 2 * math.pi)
        p = np.array([r * math.cos(a), r * math.sin(a), *rng.normal(size=2)])
        back = spec.apply(spec.apply(p), "inverse")
        assert np.max(np.abs(back - p)) <= 1e-12
        for name in ("cartesian_to_polar", "polar_to_mcgehee"):
            q = p if name == "cartesian_to_polar" else TRANSFORMS["cartesian_to_polar"].apply(p)
            assert TRANSFORMS[name].canonicity_residual(q) <= 1e-9


def test_h_agrees_across_charts():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = np.array([rng.uniform(2, 6), rng.uniform(0, 6), *rng.normal(size=2)])
        c = transform(p, "cartesian_to_polar", "inverse")
        m = transform(p, "polar_to_mcgehee")
        h = rpc3bp_hamiltonian("cartesian", c, 0.3)
        assert rpc3bp_hamiltonian("polar", p, 0.3) == pytest.approx(h, abs=1e-11)
        assert rpc3bp_hamiltonian("mcgehee", m, 0.3) == pytest.approx(h, abs=1e-11)
        pol = builtin("rpc3bp_polar", mu=0.3)
        assert pol.f_H(*p) == pytest.approx(h, abs=1e-11)


def test_cylinder_points():
    assert infinity_cylinder_point(0.0, 0.0, 1.0)[3] == -1.0
    assert infinity_cylinder_point(math.pi, 2.0, 1.0)[3] == 1.0
    assert gallery.cylinder_rotation_rate(1.0, 1.0) == pytest.approx(2 / 3)
    with pytest.raises(ParamError):
        infinity_cylinder_point(0.0, 0.0, -1.0)


def test_corpus_files_parse():
    from reeblab.system import load_system
    names = sorted(p.stem for p in gallery.corpus_files())
    assert len(names) == 12
    for p in gallery.corpus_files():
        assert load_system(p).dim >= 1


def test_symplectization_builtin():
    s = builtin("symplectization", inner="t3_bm")
    assert s.names == ("x", "y", "phi", "s")
    assert s.symplectization.name == "t3_bm"
