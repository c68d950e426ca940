import numpy as np
import pytest

from gossip_aoi.joint import JointPmf


def test_lookup_outside_box_is_zero():
    j = JointPmf(np.array([[0.5, 0.25], [0.0, 0.25]]), labels=("a", "b"))
    assert j.K == 2 and j.dim == 2
    assert j[(1, 1)] == 0.5 and j[(3, 1)] == 0.0 and j[(0, 1)] == 0.0
    assert dict(j.items()) == {(1, 1): 0.5, (1, 2): 0.25, (2, 2): 0.25}
    assert np.allclose(j.marginal(0), [0.75, 0.25])


def test_total_variation_pads_and_counts_missing_mass():
    small = JointPmf(np.array([[0.5, 0.0], [0.0, 0.25]]))
    big = JointPmf(np.pad(np.array([[0.5, 0.0], [0.0, 0.25]]), (0, 2)))
    assert small.total_variation(big) == pytest.approx(0.0)
    other = JointPmf(np.array([[0.25, 0.25], [0.0, 0.5]]))
    assert other.total_variation(small) == pytest.approx(0.5 * (0.25 + 0.25 + 0.25 + 0.25))
    assert small.missing_mass == pytest.approx(0.25)
