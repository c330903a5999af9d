import numpy as np
import pytest

from c3cert.semialg import ProductSet, SamplingError, SemiAlgebraicSet, set_difference_as_regions


def test_box_membership_and_sampling_deterministic():
    s = SemiAlgebraicSet.box(["x1", "x2"], [(0, 1), (-1, 1)])
    a = s.sample(500, seed=3)
    b = s.sample(500, seed=3)
    assert np.array_equal(a, b)
    assert s.contains_many(a).all()
    assert not s.contains((2.0, 0.0))


def test_semialgebraic_disc():
    disc = SemiAlgebraicSet.from_strings(["x1", "x2"], ["1 - x1^2 - x2^2"], bbox=[(-1, 1), (-1, 1)])
    pts = disc.sample(300, seed=1)
    assert np.all(np.sum(pts**2, axis=1) <= 1 + 1e-12)


def test_unbounded_sampling_refused():
    s = SemiAlgebraicSet.from_strings(["x1"], ["x1"])
    with pytest.raises(SamplingError):
        s.sample(10, 0)


def test_set_difference_cover():
    X = SemiAlgebraicSet.box(["x1", "x2"], [(-0.75, 1.0), (-0.75, 0.75)], name="X")
    B = SemiAlgebraicSet.box(["x1", "x2"], [(-0.5, 0.5), (-0.5, 0.5)], name="B")
    regions = set_difference_as_regions(X, B)
    pts = X.sample(4000, seed=5)
    outside = ~B.contains_many(pts, tol=-1e-12)
    covered = np.zeros(len(pts), dtype=bool)
    for r in regions:
        covered |= r.contains_many(pts)
        assert not np.any(B.contains_many(r.sample(200, 2), tol=-1e-9))
    assert covered[outside].all()


def test_product_set_sampling_blocks():
    a = SemiAlgebraicSet.box(["x1"], [(0, 1)]).with_prefix("x")
    b = SemiAlgebraicSet.box(["x1"], [(5, 6)]).with_prefix("y")
    pts = ProductSet((a, b)).sample(100, 0)
    assert pts.shape == (100, 2)
    assert np.all(pts[:, 1] >= 5)
