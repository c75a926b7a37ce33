import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatopt.vectors import (
    LayerPartition,
    as_vector,
    axpy,
    dot,
    layer_norms,
    norm2,
    scale,
)


def compensated_norm2(values):
    """Oracle: sqrt of fsum of squares (exactly rounded accumulation)."""
    return math.sqrt(math.fsum(float(x) * float(x) for x in values))


class TestAsVector:
    def test_copies_and_casts(self):
        src = [1, 2, 3]
        v = as_vector(src)
        assert v.dtype == np.float64
        assert v.tolist() == [1.0, 2.0, 3.0]

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            as_vector([])

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError, match="non-finite"):
            as_vector([1.0, float("nan")])
        with pytest.raises(ValueError, match="non-finite"):
            as_vector([float("inf")])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError, match="1-D"):
            as_vector([[1.0, 2.0]])


class TestNorm2:
    def test_three_four_five(self):
        assert norm2(as_vector([3.0, 4.0])) == 5.0

    def test_zero_vector(self):
        assert norm2(np.zeros(3)) == 0.0

    def test_matches_compensated_oracle(self):
        rng = np.random.Generator(np.random.PCG64(42))
        v = rng.standard_normal(1000)
        expected = compensated_norm2(v)
        assert norm2(v) == pytest.approx(expected, rel=1e-12)

    def test_non_finite_rejected(self):
        v = np.array([1.0, np.nan])
        with pytest.raises(ValueError, match="non-finite vector"):
            norm2(v)

    def test_deterministic(self):
        rng = np.random.Generator(np.random.PCG64(7))
        v = rng.standard_normal(257)
        assert norm2(v) == norm2(v.copy())


class TestLayerPartition:
    def test_from_sizes(self):
        part = LayerPartition.from_sizes([2, 3])
        assert part.bounds == ((0, 2), (2, 5))
        assert part.length == 5
        assert part.num_layers == 2

    def test_rejects_gap(self):
        with pytest.raises(ValueError, match="starts at"):
            LayerPartition(((0, 2), (3, 4)))

    def test_rejects_empty_range(self):
        with pytest.raises(ValueError, match="empty"):
            LayerPartition(((0, 2), (2, 2)))

    def test_rejects_nonzero_start(self):
        with pytest.raises(ValueError):
            LayerPartition(((1, 3),))

    def test_rejects_no_layers(self):
        with pytest.raises(ValueError):
            LayerPartition(())


class TestLayerNorms:
    def test_two_layer_example(self):
        v = as_vector([3.0, 4.0, 0.0, 5.0])
        part = LayerPartition(((0, 2), (2, 4)))
        assert layer_norms(v, part) == [5.0, 5.0]

    def test_single_layer_is_norm2(self):
        v = as_vector([1.0, 2.0, 2.0])
        part = LayerPartition.single(3)
        assert layer_norms(v, part) == [norm2(v)]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="partition covers"):
            layer_norms(np.ones(5), LayerPartition.single(4))

    def test_pythagorean_identity(self):
        rng = np.random.Generator(np.random.PCG64(3))
        v = rng.standard_normal(40)
        part = LayerPartition.from_sizes([7, 13, 11, 9])
        total_sq = sum(n**2 for n in layer_norms(v, part))
        assert total_sq == pytest.approx(norm2(v) ** 2, rel=1e-12)


class TestBlas:
    def test_dot_orthogonal(self):
        assert dot(as_vector([1.0, 0.0]), as_vector([0.0, 1.0])) == 0.0

    def test_axpy(self):
        out = axpy(2.0, as_vector([1.0, 1.0]), as_vector([0.0, 0.0]))
        assert out.tolist() == [2.0, 2.0]

    def test_scale_zero(self):
        assert scale(0.0, as_vector([5.0, -1.0])).tolist() == [0.0, 0.0]

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            dot(np.ones(2), np.ones(3))
        with pytest.raises(ValueError, match="length mismatch"):
            axpy(1.0, np.ones(2), np.ones(3))


finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite_floats, min_size=1, max_size=50), st.data())
def test_cauchy_schwarz(values, data):
    a = as_vector(values)
    b = as_vector(data.draw(st.lists(finite_floats, min_size=len(a), max_size=len(a))))
    lhs = dot(a, b) ** 2
    rhs = norm2(a) ** 2 * norm2(b) ** 2
    assert lhs <= rhs * (1 + 1e-12) + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite_floats, min_size=2, max_size=64),
    st.integers(min_value=1, max_value=6),
    st.randoms(use_true_random=False),
)
def test_partition_pythagoras_property(values, num_layers, rnd):
    v = as_vector(values)
    num_layers = min(num_layers, len(v))
    cuts = sorted(rnd.sample(range(1, len(v)), num_layers - 1)) if num_layers > 1 else []
    bounds = []
    lo = 0
    for cut in cuts + [len(v)]:
        bounds.append((lo, cut))
        lo = cut
    part = LayerPartition(tuple(bounds))
    total_sq = math.fsum(n**2 for n in layer_norms(v, part))
    assert total_sq == pytest.approx(norm2(v) ** 2, rel=1e-12, abs=1e-12)
