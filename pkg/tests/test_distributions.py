import math

import numpy as np
import pytest

from models.densities import DensitySpec
from models.distributions import (CONSTANT_LABEL, GridShape, MixedPairDistribution, MixedPairVectorDistribution,
                                  OrderedShape, ProductShape, VectorAtom, as_vector, grid_joint,
                                  independent_product, normalize_label, ordered_iid, pair_with_label)
from models.errors import (AtomIndexError, InvalidDistributionError, UndefinedPosteriorError,
                           UnsupportedShapeError)
from services.quadrature import AdaptiveQuadrature


@pytest.fixture
def two_atoms():
    return MixedPairDistribution.from_atoms([
        ('a', 0.25, DensitySpec.uniform(0.0, 1.0)),
        ('b', 0.75, DensitySpec.uniform(0.5, 1.5)),
    ])


def test_labels_are_exact():
    assert normalize_label(3.0) == 3
    assert normalize_label(np.int64(2)) == 2
    assert normalize_label(('a', 1.0)) == ('a', 1)
    with pytest.raises(InvalidDistributionError):
        normalize_label(1.5)
    with pytest.raises(InvalidDistributionError):
        normalize_label(True)


def test_masses_must_sum_to_one():
    with pytest.raises(InvalidDistributionError):
        MixedPairDistribution.from_atoms([('a', 0.5, DensitySpec.uniform(0, 1))])


def test_tail_mass_completes_the_total():
    dist = MixedPairDistribution.from_atoms([('a', 0.9, DensitySpec.uniform(0, 1))], tail_mass=0.1)
    assert dist.tail_mass == pytest.approx(0.1)


def test_duplicate_labels_are_rejected():
    u = DensitySpec.uniform(0, 1)
    with pytest.raises(InvalidDistributionError):
        MixedPairDistribution.from_atoms([(1, 0.5, u), (1.0, 0.5, u)])


def test_zero_mass_atom_is_rejected():
    u = DensitySpec.uniform(0, 1)
    with pytest.raises(InvalidDistributionError):
        MixedPairDistribution.from_atoms([('a', 1.0, u), ('b', 0.0, u)])


def test_marginal_and_posterior(two_atoms):
    assert two_atoms.marginal_density(0.25) == pytest.approx(0.25)
    assert two_atoms.marginal_density(0.75) == pytest.approx(1.0)
    np.testing.assert_allclose(two_atoms.posterior_weights(0.75), [0.25, 0.75])
    np.testing.assert_allclose(two_atoms.posterior_weights(1.25), [0.0, 1.0])


def test_posterior_is_undefined_where_marginal_vanishes(two_atoms):
    with pytest.raises(UndefinedPosteriorError):
        two_atoms.posterior_weights(3.0)


def test_atom_index_out_of_range(two_atoms):
    with pytest.raises(AtomIndexError):
        two_atoms.atom_mass(2)
    with pytest.raises(AtomIndexError):
        two_atoms.index_of('c')
    assert two_atoms.index_of('b') == 1


def test_sampling_is_reproducible(two_atoms):
    a = two_atoms.sample(np.random.default_rng(7), 50)
    b = two_atoms.sample(np.random.default_rng(7), 50)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])
    label, y = two_atoms.sample(np.random.default_rng(7))
    assert label in ('a', 'b')
    assert 0.0 <= y <= 1.5


def test_independent_product_multiplies_masses(two_atoms):
    coin = MixedPairDistribution.from_atoms([(0, 0.5, DensitySpec.uniform(0, 1)),
                                             (1, 0.5, DensitySpec.uniform(0, 1))])
    joint = independent_product(two_atoms, coin)
    assert joint.dimension == 2
    assert sorted(joint.masses) == pytest.approx([0.125, 0.125, 0.375, 0.375])
    point = np.array([[0.75, 0.5]])
    assert joint.joint_density(point)[0] == pytest.approx(two_atoms.marginal_density(0.75) * 1.0)


def test_marginal_groups_atoms_by_projected_label(two_atoms):
    joint = pair_with_label(two_atoms)
    first = joint.marginal([0])
    assert sorted(a.label for a in first.atoms) == [('a',), ('b',)]
    copy = joint.marginal([1])
    np.testing.assert_allclose(copy.joint_density(np.array([[0.5]])), [1.0])


def test_marginal_rejects_bad_coordinates(two_atoms):
    with pytest.raises(AtomIndexError):
        as_vector(two_atoms).marginal([1])


def test_ordered_shape_density_and_marginal():
    shape = OrderedShape(DensitySpec.uniform(0, 1), 2)
    assert shape.pdf(np.array([[0.2, 0.7]]))[0] == pytest.approx(2.0)
    assert shape.pdf(np.array([[0.7, 0.2]]))[0] == 0.0
    with pytest.raises(UnsupportedShapeError):
        shape.marginal([0])
    samples = shape.sample(np.random.default_rng(1), 100)
    assert np.all(np.diff(samples, axis=1) >= 0)


def test_ordered_iid_uses_constant_label():
    dist = ordered_iid(DensitySpec.uniform(0, 1), 3)
    assert dist.atoms[0].label == (CONSTANT_LABEL,) * 3


def test_grid_joint_normalizes_cells():
    edges = (np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0]))
    dist = grid_joint([(('g', 'g'), 1.0, edges, np.array([[1.0], [3.0]]))])
    shape = dist.atoms[0].shape
    assert shape.total_mass() == pytest.approx(1.0)
    marginal = shape.marginal([1])
    np.testing.assert_allclose(marginal.values, [1.0])


def test_grid_marginal_preserves_requested_order():
    edges = (np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 1.0]))
    values = np.array([[1.0, 2.0], [3.0, 4.0]])
    shape = GridShape.normalized(edges, values)
    swapped = shape.marginal([1, 0])
    np.testing.assert_allclose(swapped.values, shape.values.T)


def test_vector_labels_and_shapes_share_dimension():
    with pytest.raises(InvalidDistributionError):
        MixedPairVectorDistribution((VectorAtom(('a',), 1.0, ProductShape((DensitySpec.uniform(0, 1),) * 2)),))


def test_as_vector_keeps_the_marginal(two_atoms):
    vec = as_vector(two_atoms)
    ys = np.linspace(-0.5, 2.0, 11)
    np.testing.assert_allclose(vec.joint_density(ys[:, None]), two_atoms.marginal_density(ys))
    assert math.isclose(vec.masses.sum(), 1.0)


@pytest.fixture
def three_shapes():
    return MixedPairDistribution.from_atoms([
        ('u', 0.2, DensitySpec.uniform(-1.0, 3.0)),
        ('g', 0.5, DensitySpec.gaussian(0.5, 0.25)),
        ('e', 0.3, DensitySpec.exponential(2.0, loc=1.0)),
    ])


def test_conditional_times_mass_is_the_sub_density(three_shapes):
    ys = np.random.default_rng(3).uniform(-2.0, 5.0, 100)
    for i in range(len(three_shapes)):
        rebuilt = three_shapes.atom_mass(i) * three_shapes.conditional_density(i).pdf(ys)
        np.testing.assert_allclose(rebuilt, three_shapes.sub_density(i, ys), rtol=1e-12, atol=1e-300)


def test_marginal_density_integrates_to_one(config, three_shapes):
    quadrature = AdaptiveQuadrature(config)
    value, _ = quadrature.integrate_line(three_shapes.marginal_density, (-math.inf, math.inf),
                                         three_shapes.breakpoints(config.TAIL_MASS))
    assert value == pytest.approx(1.0, abs=1e-7)
