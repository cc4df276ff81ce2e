import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pebilliards.errors import ZeroDirection
from pebilliards.pecore import (
    Ellipsoid,
    Quadric,
    RayState,
    Signature,
    VectorType,
    classify_vector,
    inner,
    line_canonicalize,
    quadric_eval,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
nonzero_scale = st.floats(min_value=1e-6, max_value=1e6).map(lambda s: s)


def test_signature_basics():
    sig = Signature(2, 1)
    assert sig.dim == 3
    assert np.array_equal(sig.e, [1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        Signature(1, 0)
    with pytest.raises(ValueError):
        Signature(-1, 3)
    # Euclidean signature is accepted
    assert Signature(2, 0).q == 0


def test_inner_examples():
    assert inner((1, 1), (1, 1), Signature(1, 1)) == 0.0
    assert inner((1, 0), (0, 1), Signature(1, 1)) == 0.0
    assert inner((1, 0), (0, 1), Signature(2, 0)) == 0.0
    assert inner((3, 4), (3, 4), Signature(2, 0)) == 25.0


def test_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        inner((1, 2, 3), (1, 2), Signature(1, 1))


@given(
    st.lists(finite, min_size=3, max_size=3),
    st.lists(finite, min_size=3, max_size=3),
    st.lists(finite, min_size=3, max_size=3),
    finite,
    finite,
)
@settings(max_examples=200, deadline=None)
def test_inner_symmetric_bilinear(u, v, w, a, b):
    sig = Signature(2, 1)
    u, v, w = np.array(u), np.array(v), np.array(w)
    assert inner(u, v, sig) == pytest.approx(inner(v, u, sig), abs=1e-6, rel=1e-12)
    left = inner(a * u + b * v, w, sig)
    right = a * inner(u, w, sig) + b * inner(v, w, sig)
    scale = max(1.0, abs(left), abs(right))
    assert abs(left - right) <= 1e-9 * scale


def test_euclidean_signature_is_dot_product():
    rng = np.random.default_rng(0)
    sig = Signature(4, 0)
    for _ in range(50):
        u, v = rng.standard_normal(4), rng.standard_normal(4)
        assert inner(u, v, sig) == pytest.approx(float(u @ v), rel=1e-14, abs=1e-14)


def test_classify_examples():
    sig = Signature(1, 1)
    assert classify_vector((1, 0), sig) is VectorType.SPACELIKE
    assert classify_vector((1, 1), sig) is VectorType.LIGHTLIKE
    assert classify_vector((0, 1), sig) is VectorType.TIMELIKE
    with pytest.raises(ZeroDirection):
        classify_vector((0, 0), sig)


@given(
    st.lists(finite, min_size=2, max_size=2).filter(lambda v: any(abs(c) > 1e-3 for c in v)),
    st.one_of(
        st.floats(min_value=1e-3, max_value=1e3),
        st.floats(min_value=-1e3, max_value=-1e-3),
    ),
)
@settings(max_examples=200, deadline=None)
def test_classify_scale_invariant(v, s):
    sig = Signature(1, 1)
    assert classify_vector(np.array(v), sig) is classify_vector(s * np.array(v), sig)


def test_canonicalize_examples():
    r = line_canonicalize(RayState((5, 5), (2, 2)))
    assert np.allclose(r.x, [0, 0], atol=1e-14)
    assert np.allclose(r.v, [1 / np.sqrt(2)] * 2)

    r = line_canonicalize(RayState((1, 0), (0, 3)))
    assert np.allclose(r.x, [1, 0])
    assert np.allclose(r.v, [0, 1])

    # Derived: minimize Euclidean distance to the origin over the line.
    r = line_canonicalize(RayState((2, 1), (1, 0)))
    assert np.allclose(r.x, [0, 1])
    assert np.allclose(r.v, [1, 0])


@given(
    st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=3),
    st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=3).filter(
        lambda v: np.linalg.norm(v) > 1e-3
    ),
    st.floats(min_value=-50, max_value=50),
    st.floats(min_value=1e-3, max_value=1e3),
)
@settings(max_examples=200, deadline=None)
def test_canonicalize_quotient_property(x, v, t, s):
    x, v = np.array(x), np.array(v)
    base = line_canonicalize(RayState(x, v))
    slid = line_canonicalize(RayState(x + t * v, s * v))
    again = line_canonicalize(base)
    scale = max(1.0, float(np.max(np.abs(base.x))))
    assert np.max(np.abs(base.x - slid.x)) <= 1e-9 * scale
    assert np.max(np.abs(base.v - slid.v)) <= 1e-12
    # idempotent
    assert np.max(np.abs(base.x - again.x)) <= 1e-12 * scale
    assert np.max(np.abs(base.v - again.v)) <= 1e-15


def test_quadric_eval_examples():
    ellipse = Quadric(np.array([4.0, 1.0]))
    assert quadric_eval(ellipse, (0, 1)) == 0.0
    assert quadric_eval(ellipse, (0, 0)) == -1.0
    hyperbola = Quadric(np.array([1.0, -2.0]))
    assert quadric_eval(hyperbola, (1, 0)) == 0.0


def test_quadric_rejects_zero_coefficients():
    with pytest.raises(ValueError):
        Quadric(np.array([1.0, 0.0]))


def test_ellipsoid_validation_and_geometry():
    ell = Ellipsoid((2.0, 1.0))
    assert ell.boundary_defect(np.array([0.0, 1.0])) == 0.0
    assert np.allclose(ell.conormal(np.array([2.0, 0.0])), [0.5, 0.0])
    with pytest.raises(ValueError):
        Ellipsoid((1.0, -2.0))
    with pytest.raises(ValueError):
        Ellipsoid((1.0,))


def test_raystate_immutability_and_validation():
    r = RayState((0, 1), (1, -1))
    with pytest.raises(ValueError):
        r.x[0] = 5.0
    with pytest.raises(ZeroDirection):
        RayState((0, 1), (0, 0))
    with pytest.raises(ValueError):
        RayState((0, 1, 2), (1, 0))
