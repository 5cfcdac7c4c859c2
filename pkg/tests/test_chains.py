import json

import numpy as np
import pytest

from coarea_lab.chains import (AllOf, Chain0, Chain1, Complement, Level, Shell, cone, label_breaks,
                               restrict, split_pieces, transversal)
from coarea_lab.geometry import boundary_field


def test_repeated_segment_cancels():
    seg = [[[0, 0], [1, 0]]]
    assert (Chain1(seg) + Chain1(seg)).is_zero()


def test_collinear_overlap_is_symmetric_difference():
    a = Chain1([[[0, 0], [2, 0]]])
    b = Chain1([[[1, 0], [3, 0]]])
    c = a + b
    assert c.mass() == pytest.approx(2.0)
    assert c.equals(Chain1([[[0, 0], [1, 0]], [[2, 0], [3, 0]]]))


def test_reversed_segment_is_same_chain():
    assert Chain1([[[0, 1, 2], [3, 4, 5]]]).equals(Chain1([[[3, 4, 5], [0, 1, 2]]]))


def test_zero_length_segments_dropped():
    assert Chain1([[[0.5, 0.5], [0.5, 0.5]]]).is_zero()


def test_polyline_boundary():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert Chain1.polyline(pts, closed=True).boundary().is_zero()
    bd = Chain1.polyline(pts).boundary()
    assert len(bd) == 2
    assert bd.equals(Chain0([[0, 0], [0, 1]]))


def test_boundary_is_additive(rng):
    """Boundary commutes with mod-2 addition."""
    for _ in range(20):
        a = Chain1.polyline(rng.random((5, 3)))
        b = Chain1.polyline(rng.random((4, 3)))
        assert (a + b).boundary().equals(a.boundary() + b.boundary())


def test_chain0_parity_and_merge_tolerance():
    p = Chain0([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0 + 1e-12]])
    assert p.is_zero()
    assert len(Chain0([[0.2, 0.3]] * 3)) == 1


def test_mass_is_total_length():
    c = Chain1([[[0, 0, 0], [3, 4, 0]], [[1, 1, 1], [1, 1, 2]]])
    assert c.mass() == pytest.approx(6.0)


def test_cone_mass():
    base = Chain0([[1.0, 0.0], [0.0, 2.0]])
    assert cone([0.0, 0.0], base).mass() == pytest.approx(3.0)
    assert cone([0.0, 0.0], Chain0(np.zeros((0, 2)))).is_zero()


def test_split_pieces_preserves_chain():
    tau = Chain1([[[0, 0], [1, 0]], [[0, 1], [0, 2]]])
    pieces, mids, owner = split_pieces(tau, [np.array([0.25, 0.5]), np.array([])])
    assert len(pieces) == 4
    assert owner.tolist() == [0, 0, 0, 1]
    assert Chain1(pieces).equals(tau)
    assert np.allclose(mids[0], [0.125, 0])


def test_restrict_and_complement_partition(rng):
    """A region and its complement split a chain without loss."""
    f = boundary_field(3)
    for _ in range(10):
        tau = Chain1.polyline(rng.random((6, 3)))
        R = Level(f, 0.2, above=True)
        inside, outside = restrict(tau, R), restrict(tau, Complement(R))
        assert (inside + outside).equals(tau)
        assert inside.mass() + outside.mass() == pytest.approx(tau.mass())
        if len(inside):
            assert np.all(f.dist(inside.points()) >= 0.2 - 1e-9)


def test_shell_between_levels():
    f = boundary_field(2)
    tau = Chain1([[[0.0, 0.5], [0.5, 0.5]]])
    shell = restrict(tau, Shell(f, 0.1, 0.3))
    assert shell.mass() == pytest.approx(0.2)
    both = restrict(tau, AllOf([Level(f, 0.1), Complement(Level(f, 0.3))]))
    assert both.equals(shell)


def test_transversality():
    f = boundary_field(2)
    tau = Chain1([[[0.0, 0.5], [0.5, 0.5]]])
    assert transversal(tau, f, 0.2)
    assert not transversal(tau, f, 0.5)


def test_json_roundtrip(rng):
    tau = Chain1.polyline(rng.random((7, 4)))
    assert Chain1.from_json(tau.to_json()).equals(tau, tol=0)
    assert json.loads(tau.to_json())["segments"]
    p = Chain0(rng.random((3, 4)))
    assert Chain0.from_json(p.to_json()).equals(p)


def test_map_points_scales_mass(rng):
    tau = Chain1.polyline(rng.random((5, 3)))
    assert tau.map_points(lambda x: 0.5 * x).mass() == pytest.approx(0.5 * tau.mass())


def test_label_breaks_finds_close_changes():
    """Two label changes inside one sample interval are both located."""
    a, b = np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]])

    def labels(p):
        return [int(x > 0.5) + int(x > 0.52) for x in p[:, 0]]

    t = label_breaks(a, b, labels, spacing=0.25)[0]
    assert t == pytest.approx([0.5, 0.52], abs=1e-9)
