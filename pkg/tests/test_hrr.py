import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsatraj import hrr


def naive_convolution(v, w):
    d = len(v)
    return np.array([sum(v[k] * w[(j - k) % d] for k in range(d)) for j in range(d)])


def test_random_unit_is_normalised_and_deterministic():
    a = hrr.random_unit(512, 7)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-9
    np.testing.assert_array_equal(a, hrr.random_unit(512, 7))
    assert not np.array_equal(a, hrr.random_unit(512, 8))


def test_random_unit_streams_are_independent():
    a = hrr.random_unit(512, 3, stream="TARGET")
    b = hrr.random_unit(512, 3, stream="EGO")
    assert abs(a @ b) < 0.2


def test_independent_unit_vectors_are_nearly_orthogonal():
    dots = np.array([hrr.random_unit(512, s) @ hrr.random_unit(512, 10_000 + s) for s in range(1000)])
    assert np.all(np.abs(dots) < 0.2)
    assert abs(dots.std() - 1 / np.sqrt(512)) < 0.01


def test_similarity_statistics_over_many_pairs():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((10_000, 512))
    w = rng.standard_normal((10_000, 512))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    sims = np.einsum("ij,ij->i", v, w)
    assert abs(sims.mean()) < 3 / np.sqrt(512) / np.sqrt(10_000) * 3
    assert abs(sims.std() * np.sqrt(512) - 1.0) < 0.03


@pytest.mark.parametrize("bad", [0, 1, -3, 2.5])
def test_invalid_dimension(bad):
    with pytest.raises(hrr.DimensionError):
        hrr.random_unit(bad, 0)
    with pytest.raises(hrr.DimensionError):
        hrr.random_unitary(bad, 0)


def test_bind_shift_example():
    np.testing.assert_allclose(hrr.bind([1, 2, 3, 4], [0, 1, 0, 0]), [4, 1, 2, 3], atol=1e-12)


def test_bind_identity_and_commutativity():
    rng = np.random.default_rng(1)
    v, w = rng.standard_normal(64), rng.standard_normal(64)
    np.testing.assert_allclose(hrr.bind(v, hrr.identity(64)), v, atol=1e-10)
    np.testing.assert_allclose(hrr.bind(v, w), hrr.bind(w, v), atol=1e-10)


def test_bind_dimension_mismatch():
    with pytest.raises(hrr.DimensionError):
        hrr.bind(np.ones(4), np.ones(5))
    with pytest.raises(hrr.DimensionError):
        hrr.similarity(np.ones(4), np.ones(5))


@pytest.mark.parametrize("d", [2, 3, 5, 8, 17, 31, 64])
def test_bind_matches_naive_convolution(d):
    rng = np.random.default_rng(d)
    for _ in range(10):
        v, w = rng.standard_normal(d), rng.standard_normal(d)
        np.testing.assert_allclose(hrr.bind(v, w), naive_convolution(v, w), atol=1e-10, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_bind_algebra(d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal((3, d))
    np.testing.assert_allclose(hrr.bind(hrr.bind(a, b), c), hrr.bind(a, hrr.bind(b, c)), atol=1e-9)
    np.testing.assert_allclose(hrr.bind(a, hrr.superpose([b, c])),
                               hrr.superpose([hrr.bind(a, b), hrr.bind(a, c)]), atol=1e-9)


def test_random_unitary_spectrum():
    for d in (4, 7, 64, 512):
        u = hrr.random_unitary(d, 5)
        spec = np.fft.fft(u.values)
        np.testing.assert_allclose(np.abs(spec), 1.0, atol=1e-9)
        assert spec[0].real == pytest.approx(1.0, abs=1e-12)
        if d % 2 == 0:
            assert abs(abs(spec[d // 2].real) - 1.0) < 1e-12
        np.testing.assert_allclose(spec[1:], np.conj(spec[1:][::-1]), atol=1e-12)


def test_unitary_all_zero_phases_is_identity():
    u = hrr.UnitaryVector.from_phases(np.zeros(3), 4)
    np.testing.assert_allclose(u.values, [1, 0, 0, 0], atol=1e-15)


@pytest.mark.parametrize("d", [64, 512])
def test_unitary_binding_preserves_norm(d):
    rng = np.random.default_rng(d)
    for k in range(100):
        u = hrr.random_unitary(d, k)
        v = rng.standard_normal(d) * rng.uniform(0.1, 10)
        assert abs(np.linalg.norm(hrr.bind(v, u)) - np.linalg.norm(v)) < 1e-9


def test_power_special_cases():
    u = hrr.random_unitary(128, 3)
    np.testing.assert_allclose(hrr.power(u, 1), u.values, atol=1e-10)
    np.testing.assert_allclose(hrr.power(u, 0), hrr.identity(128), atol=1e-10)
    np.testing.assert_allclose(hrr.power(u, 2), hrr.bind(u, u), atol=1e-10)
    probe = hrr.bind(hrr.power(u, 1), hrr.inverse(u))
    assert hrr.similarity(probe, hrr.identity(128)) == pytest.approx(1.0, abs=1e-9)


def test_power_additivity_random_exponents():
    rng = np.random.default_rng(11)
    for k in range(100):
        u = hrr.random_unitary(128, k)
        a, b = rng.uniform(-5, 5, 2)
        np.testing.assert_allclose(hrr.power(u, a + b), hrr.bind(hrr.power(u, a), hrr.power(u, b)), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 33), st.integers(0, 1000), st.floats(-20, 20), st.floats(-20, 20))
def test_power_additivity_property(d, seed, a, b):
    u = hrr.random_unitary(d, seed)
    np.testing.assert_allclose(hrr.power(u, a + b), hrr.bind(hrr.power(u, a), hrr.power(u, b)), atol=1e-9)
    assert abs(np.linalg.norm(hrr.power(u, a)) - 1.0) < 1e-9


def test_power_rejects_bad_inputs():
    with pytest.raises(hrr.NonUnitaryError):
        hrr.power(np.array([1.0, 2.0, 3.0]), 0.5)
    u = hrr.random_unitary(16, 0)
    for p in (np.nan, np.inf):
        with pytest.raises(hrr.InvalidExponentError):
            hrr.power(u, p)


def test_power_accepts_plain_unitary_array():
    u = hrr.random_unitary(32, 4)
    np.testing.assert_allclose(hrr.power(u.values, 0.3), hrr.power(u, 0.3), atol=1e-12)


def test_superpose_and_similarity():
    rng = np.random.default_rng(2)
    a = hrr.random_unit(256, 1)
    b = hrr.random_unit(256, 2)
    np.testing.assert_array_equal(hrr.superpose([a]), a)
    np.testing.assert_allclose(hrr.superpose([a, -a]), 0.0)
    assert hrr.similarity(hrr.superpose([a, b]), a) == pytest.approx(1 + a @ b)
    assert hrr.similarity(a, a) == pytest.approx(1.0, abs=1e-9)
    assert hrr.similarity(a, np.zeros(256)) == 0.0
    v = rng.standard_normal(256)
    assert hrr.similarity(v, v) == pytest.approx(np.linalg.norm(v) ** 2)
    with pytest.raises(hrr.EmptyInputError):
        hrr.superpose([])
    with pytest.raises(hrr.EmptyInputError):
        hrr.bind_all([])


def test_non_finite_vectors_rejected():
    with pytest.raises(hrr.HRRError):
        hrr.bind([1.0, np.nan], [1.0, 0.0])


def test_unitary_vector_is_read_only():
    u = hrr.random_unitary(16, 0)
    with pytest.raises(ValueError):
        u.values[0] = 3.0
    np.testing.assert_array_equal(np.asarray(u), u.values)
