from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clstream.errors import DimensionMismatch, MissingImageShape, NotInvertible, ParseError
from clstream.transforms import (
    IDENTITY,
    Composition,
    Identity,
    Permutation,
    Rotation,
    apply,
    invert,
    make_permutation,
    parse_transform,
)

from conftest import one_hot_image
from transform_oracles import bilinear_reference, forward_pixel


@pytest.mark.parametrize("degrees", [0, 90, 180, 270, 360, -90, 450])
@pytest.mark.parametrize("h,w", [(5, 5), (4, 4)])
def test_quarter_turns_match_coordinate_oracle(degrees, h, w):
    rot = Rotation(float(degrees), h, w)
    for r in range(h):
        for c in range(w):
            out = rot.apply(one_hot_image(h, w, r, c)).reshape(h, w)
            er, ec = forward_pixel(r, c, h, w, degrees)
            expected = np.zeros((h, w))
            expected[er, ec] = 1.0
            assert np.array_equal(out, expected), (r, c)


def test_half_turn_on_non_square_grid_is_exact():
    rot = Rotation(180.0, 3, 5)
    for r in range(3):
        for c in range(5):
            out = rot.apply(one_hot_image(3, 5, r, c)).reshape(3, 5)
            assert out[2 - r, 4 - c] == 1.0 and out.sum() == 1.0


def test_rotation_zero_is_bit_identity():
    x = np.random.default_rng(0).normal(size=25)
    assert np.array_equal(Rotation(0.0, 5, 5).apply(x), x)


@pytest.mark.parametrize("degrees", [45.0, 30.0, 135.0, 200.5, -10.0])
@pytest.mark.parametrize("h,w", [(5, 5), (4, 6)])
def test_bilinear_matches_scalar_reference(degrees, h, w):
    img = np.random.default_rng(1).normal(size=(h, w))
    got = Rotation(degrees, h, w).apply(img.reshape(-1)).reshape(h, w)
    assert np.allclose(got, bilinear_reference(img, degrees), atol=1e-12)


def test_quarter_turn_on_non_square_uses_zero_padding():
    img = np.arange(1.0, 7.0).reshape(2, 3)
    got = Rotation(90.0, 2, 3).apply(img.reshape(-1)).reshape(2, 3)
    assert np.allclose(got, bilinear_reference(img, 90.0), atol=1e-12)
    with pytest.raises(NotInvertible):
        invert(Rotation(90.0, 2, 3))


def test_45_degree_keeps_centre_of_odd_grid():
    x = np.ones(25)
    out = Rotation(45.0, 5, 5).apply(x).reshape(5, 5)
    assert out[2, 2] == pytest.approx(1.0, abs=1e-12)


@given(
    st.floats(-720, 720, allow_nan=False),
    st.integers(1, 7),
    st.integers(1, 7),
    st.integers(0, 2**32),
)
@settings(max_examples=200, deadline=None)
def test_rotation_output_is_convex_combination(degrees, h, w, seed):
    x = np.random.default_rng(seed).normal(size=h * w)
    y = Rotation(degrees, h, w).apply(x)
    assert y.shape == x.shape
    lo, hi = min(x.min(), 0.0), max(x.max(), 0.0)
    assert np.all(y >= lo - 1e-12) and np.all(y <= hi + 1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_quarter_turn_group_property(k):
    rot = Rotation(90.0 * k, 4, 4)
    for r in range(4):
        for c in range(4):
            x = one_hot_image(4, 4, r, c)
            y = x
            for _ in range(4):
                y = rot.apply(y)
            assert np.array_equal(y, x)


def test_invert_rotation_90_behaves_as_270():
    inv = invert(Rotation(90.0, 4, 4))
    ref = Rotation(270.0, 4, 4)
    for r in range(4):
        for c in range(4):
            x = one_hot_image(4, 4, r, c)
            assert np.array_equal(inv.apply(x), ref.apply(x))
            assert np.array_equal(inv.apply(Rotation(90.0, 4, 4).apply(x)), x)


def test_invert_identity_and_interpolating_rotation():
    assert invert(IDENTITY) == Identity()
    with pytest.raises(NotInvertible):
        invert(Rotation(45.0, 5, 5))


def test_rotation_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        Rotation(90.0, 5, 5).apply(np.zeros(24))


# -- permutations ----------------------------------------------------------


def test_permutation_determinism_and_bijection():
    p = make_permutation(123, 50)
    assert np.array_equal(p.mapping, make_permutation(123, 50).mapping)
    assert sorted(p.mapping.tolist()) == list(range(50))
    assert make_permutation(9, 1).mapping.tolist() == [0]


def test_permutation_semantics():
    p = make_permutation(4, 10)
    x = np.arange(10.0) * 1.5
    y = p.apply(x)
    assert all(y[i] == x[p.mapping[i]] for i in range(10))
    assert sorted(y.tolist()) == sorted(x.tolist())


@given(st.integers(0, 2**64 - 1), st.integers(1, 300))
@settings(max_examples=50, deadline=None)
def test_permutation_inverse_round_trip(seed, n):
    p = make_permutation(seed, n)
    x = np.random.default_rng(n).normal(size=n)
    assert np.array_equal(invert(p).apply(p.apply(x)), x)
    assert np.array_equal(p.apply(invert(p).apply(x)), x)


def test_permutation_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        make_permutation(0, 4).apply(np.zeros(5))


# -- composition and descriptors -------------------------------------------


def test_composition_applies_left_to_right():
    p = make_permutation(1, 16)
    r = Rotation(90.0, 4, 4)
    x = np.arange(16.0)
    assert np.array_equal(Composition((p, r)).apply(x), r.apply(p.apply(x)))
    comp = Composition((p, r, IDENTITY))
    assert np.array_equal(invert(comp).apply(comp.apply(x)), x)


@pytest.mark.parametrize(
    "text",
    [
        "identity",
        "rot:45",
        "rot:12.5",
        "rot:-90",
        "perm:7:16",
        "invperm:7:16",
        "compose:[]",
        "compose:[rot:90,perm:3:16]",
        "compose:[compose:[identity,rot:180],invperm:0:16,rot:30]",
    ],
)
def test_descriptor_round_trip(text):
    t = parse_transform(text, (4, 4))
    assert t.describe() == text
    assert parse_transform(t.describe(), (4, 4)) == t


@pytest.mark.parametrize("text", ["rot:", "rot:abc", "rot:nan", "perm:1", "perm:-1:4", "perm:1:0", "shear:3", "compose:[rot:90"])
def test_descriptor_rejects_malformed(text):
    with pytest.raises(ParseError):
        parse_transform(text, (4, 4))


def test_rotation_descriptor_needs_shape():
    with pytest.raises(MissingImageShape):
        parse_transform("rot:90")


def test_apply_and_invert_functions():
    x = np.arange(4.0)
    assert np.array_equal(apply(IDENTITY, x), x)
    assert isinstance(invert(Permutation(1, 4)), Permutation)
