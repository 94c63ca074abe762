import json

import numpy as np
import pytest

from finslerlab.covering import (
    build_whitney_cover,
    containment_factor,
    verify_chain_properties,
    verify_overlap_bound,
    whitney_factor,
)
from finslerlab.errors import ResolutionFloor
from finslerlab.geodesy import distance_field
from finslerlab.grid import Grid2D
from finslerlab.metric import MetricModel

from conftest import B03


def window_cover(m, half, h, **kw):
    df = distance_field(m, (0.0, 0.0), Grid2D.centered((0.0, 0.0), half, h))
    return build_whitney_cover(df, 1.0, **kw)


@pytest.fixture(scope="module")
def euclid_cover():
    return window_cover(MetricModel.euclidean(), 0.01, 2e-4)


@pytest.fixture(scope="module")
def randers_cover():
    return window_cover(MetricModel.randers(B03), 0.001, 1e-5)


def test_factors():
    assert whitney_factor(1.0) == 1000.0
    assert containment_factor(1.0) == 1008.0


def test_central_radius_fixed_point(euclid_cover):
    # r = (1 - r)/1000 at the center
    r = euclid_cover.radii[euclid_cover.central_index]
    assert abs(r - 1 / 1001) <= euclid_cover.grid.h
    np.testing.assert_allclose(euclid_cover.centers[euclid_cover.central_index], [0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("which", ["euclid_cover", "randers_cover"])
def test_disjoint_on_grid(which, request):
    cover = request.getfixturevalue(which)
    seen = np.concatenate([cover.ball_nodes(k) for k in range(len(cover))])
    assert len(seen) == len(np.unique(seen))


@pytest.mark.parametrize("which", ["euclid_cover", "randers_cover"])
def test_dilates_cover_window(which, request):
    cover = request.getfixturevalue(which)
    assert cover.uncovered_fraction <= 1e-3
    hit = np.zeros(cover.grid.nx * cover.grid.ny, dtype=bool)
    for k in range(len(cover)):
        hit[cover.ball_nodes(k, cover.dilation)] = True
    # nodes whose radius would be resolvable are covered
    g = cover.grid
    J, I = np.mgrid[0 : g.ny, 0 : g.nx]
    w = 4 * int(np.ceil(cover.radii.max() / g.h))
    inner = (J >= w) & (J < g.ny - w) & (I >= w) & (I < g.nx - w)
    assert np.mean(~hit.reshape(g.shape)[inner]) <= 1e-3


def test_euclid_chain_properties(euclid_cover):
    rep = verify_chain_properties(euclid_cover)
    d = rep.details
    assert rep.verdict == "consistent"
    assert d["radius_ratio_max"] <= 3.0
    assert d["consecutive_ratio_max"] <= 1.01
    assert d["containment_factor"] == 1008.0
    assert d["containment_usage_max"] < 1
    assert d["adjacency_failures"] == 0
    assert d["chains_start_central"] and d["chains_end_own_ball"]
    assert d["geodesic_margin_min"] >= -euclid_cover.grid.h


def test_randers_chain_properties(randers_cover):
    rep = verify_chain_properties(randers_cover)
    lam = randers_cover.lam
    assert lam == pytest.approx(13 / 7, rel=1e-3)
    assert rep.verdict == "consistent"
    assert rep.details["radius_ratio_max"] <= lam + 2
    assert rep.details["consecutive_ratio_max"] <= 1 + (10 * lam) ** -2
    assert rep.details["adjacency_failures"] == 0


def test_every_chain_starts_central(euclid_cover):
    assert len(euclid_cover.chains) == len(euclid_cover)
    for b, chain in enumerate(euclid_cover.chains):
        assert chain[0] == euclid_cover.central_index and chain[-1] == b


def test_deterministic():
    a = window_cover(MetricModel.randers(B03), 0.0005, 1e-5)
    b = window_cover(MetricModel.randers(B03), 0.0005, 1e-5)
    assert a.to_dict() == b.to_dict()


def test_json_export(euclid_cover, tmp_path):
    p = tmp_path / "cover.json"
    euclid_cover.to_json(p)
    doc = json.loads(p.read_text())
    assert len(doc["radii"]) == len(euclid_cover)
    np.testing.assert_array_equal(np.array(doc["centers"]), euclid_cover.centers)
    assert doc["chains"] == [list(map(int, c)) for c in euclid_cover.chains]


def test_resolution_floor_on_coarse_grid():
    df = distance_field(MetricModel.euclidean(), (0.0, 0.0), Grid2D.centered((0.0, 0.0), 1.1, 0.02))
    with pytest.raises(ResolutionFloor):
        build_whitney_cover(df, 1.0)


def test_overlap_multiplicity_positive(euclid_cover):
    rep = verify_overlap_bound(euclid_cover)
    assert rep.details["min_multiplicity"] >= 1
    assert np.isfinite(rep.empirical_constant)


def test_overlap_stable_under_refinement(euclid_cover):
    fine = window_cover(MetricModel.euclidean(), 0.01, 1e-4)
    a = verify_overlap_bound(euclid_cover).empirical_constant
    b = verify_overlap_bound(fine).empirical_constant
    assert abs(a - b) <= 1


@pytest.mark.xfail(strict=True, reason="on resolvable windows every 200 Lambda^5 dilate spans the whole window, "
                                       "so the count equals the number of balls and scales with Lambda^-6")
def test_overlap_randers_within_factor_four(euclid_cover, randers_cover):
    e = verify_overlap_bound(euclid_cover).empirical_constant
    r = verify_overlap_bound(randers_cover).empirical_constant
    assert r <= 4 * e
