import numpy as np
import pytest

from gstpinn.problems import PdeProblem
from gstpinn.reference import ReferenceSolution
from gstpinn.sampling import SampleCounts, SamplingError, build_grid, sample_sets


def toy_reference(problem, n_x=16, n_t=5):
    (t0, t1), (x0, x1) = problem.bounds
    t = np.linspace(t0, t1, n_t)
    x = np.linspace(x0, x1, n_x)
    return ReferenceSolution(problem, t, x, np.add.outer(t, x))


def test_grid_small():
    g = build_grid(3, 2, ((0, 2), (0, 1)))
    assert g.shape == (6, 2)
    assert set(np.unique(g[:, 1])) == {0.0, 0.5, 1.0}
    assert set(np.unique(g[:, 0])) == {0.0, 2.0}
    # t is the slow index
    assert np.array_equal(g[:3, 0], [0, 0, 0])


def test_grid_corners_and_default_size():
    g = build_grid(2, 2, ((0, 2), (0, 1)))
    assert {tuple(r) for r in g} == {(0, 0), (0, 1), (2, 0), (2, 1)}
    assert build_grid(512, 201, ((0, 2), (0, 1))).shape == (102_912, 2)


def test_grid_errors():
    with pytest.raises(SamplingError):
        build_grid(1, 5, ((0, 1), (0, 1)))
    with pytest.raises(SamplingError):
        build_grid(4, 5, ((1, 1), (0, 1)))


@pytest.mark.parametrize("kind", ["burgers", "sorption"])
def test_sets_geometry_and_sizes(kind):
    prob = PdeProblem.default(kind)
    (t0, t1), (x0, x1) = prob.bounds
    counts = SampleCounts(n_domain=300, n_boundary=402, n_initial=512, n_labeled=10)
    s = sample_sets(prob, counts, 3, toy_reference(prob))
    assert s.domain.shape == (300, 2)
    assert np.all((s.domain[:, 0] > t0) & (s.domain[:, 0] < t1))
    assert np.all((s.domain[:, 1] > x0) & (s.domain[:, 1] < x1))
    assert s.boundary.shape == (402, 2)
    assert np.all(s.boundary_left[:, 1] == x0) and np.all(s.boundary_right[:, 1] == x1)
    assert np.array_equal(s.boundary_left[:, 0], s.boundary_right[:, 0])
    assert s.initial.shape == (512, 2) and np.all(s.initial[:, 0] == t0)
    assert s.labeled.shape == (10, 3)
    # labels come from the reference grid (u = t + x there)
    np.testing.assert_allclose(s.labeled[:, 2], s.labeled[:, 0] + s.labeled[:, 1])
    assert len({tuple(r) for r in s.labeled[:, :2]}) == 10
    g1, g2 = s.gradient_sets
    assert g1 is s.domain and g2 is s.domain


def test_determinism_and_seed_sensitivity():
    prob = PdeProblem.default("burgers")
    c = SampleCounts(n_domain=100, n_initial=50, n_boundary=20)
    a = sample_sets(prob, c, 1)
    assert a.equals(sample_sets(prob, c, 1))
    assert not a.equals(sample_sets(prob, c, 2))
    assert a.labeled.shape == (0, 3)


def test_streams_independent_of_other_counts():
    prob = PdeProblem.default("burgers")
    a = sample_sets(prob, SampleCounts(n_domain=100, n_initial=50), 4)
    b = sample_sets(prob, SampleCounts(n_domain=100, n_initial=80), 4)
    assert np.array_equal(a.domain, b.domain)


def test_separate_gradient_set():
    prob = PdeProblem.default("fisher")
    s = sample_sets(prob, SampleCounts(n_domain=50, n_gradient=30), 0)
    assert s.gradient.shape == (30, 2)
    assert s.gradient_sets[0] is s.gradient


def test_labeled_errors():
    prob = PdeProblem.default("burgers")
    with pytest.raises(SamplingError):
        sample_sets(prob, SampleCounts(n_labeled=5), 0)
    with pytest.raises(SamplingError):
        sample_sets(prob, SampleCounts(n_labeled=1000), 0, toy_reference(prob))
    with pytest.raises(SamplingError):
        SampleCounts(n_boundary=3)
    with pytest.raises(SamplingError):
        SampleCounts(n_domain=-1)


def test_default_set_sizes():
    c = SampleCounts()
    assert (c.n_initial, c.n_boundary) == (512, 402)
