import numpy as np
import pytest
import torch

import oracles
from conftest import max_rel_err
from panoloc.aggregation import DescriptorHead, NetVLAD, compress_normalize, netvlad, soft_assignment


def _params(rng, K, C):
    return (rng.normal(size=(K, C)), rng.normal(size=(K, C)), rng.normal(size=K))


def test_netvlad_matches_oracle(rng):
    feats = rng.normal(size=(2, 7, 5))
    centers, wa, ba = _params(rng, 4, 5)
    got = netvlad(*(torch.from_numpy(a) for a in (feats, centers, wa, ba))).numpy()
    for b in range(2):
        assert max_rel_err(got[b], oracles.netvlad(feats[b], centers, wa, ba)) < 1e-12


def test_single_cluster_is_sum_of_residuals(rng):
    feats = torch.from_numpy(rng.normal(size=(1, 6, 3)))
    c = torch.from_numpy(rng.normal(size=(1, 3)))
    G = netvlad(feats, c, torch.zeros(1, 3, dtype=torch.float64), torch.zeros(1, dtype=torch.float64))
    assert torch.allclose(G[0, 0], (feats[0] - c[0]).sum(dim=0))


def test_feature_equal_to_centre_contributes_nothing():
    c = torch.tensor([[1.0, 2.0], [-1.0, 0.5]], dtype=torch.float64)
    feats = c[:1][None]  # one feature sitting on centre 0, hard-assigned to it
    wa = torch.tensor([[100.0, 0.0], [-100.0, 0.0]], dtype=torch.float64)
    G = netvlad(feats, c, wa, torch.zeros(2, dtype=torch.float64))
    assert G[0, 0].abs().max() < 1e-12


def test_netvlad_permutation_invariant(rng):
    feats = torch.from_numpy(rng.normal(size=(1, 20, 4)))
    p = [torch.from_numpy(a) for a in _params(rng, 3, 4)]
    perm = torch.randperm(20)
    assert torch.allclose(netvlad(feats, *p), netvlad(feats[:, perm], *p), atol=1e-12)


def test_netvlad_input_checks():
    with pytest.raises(ValueError):
        netvlad(torch.zeros(1, 0, 3), torch.zeros(2, 3), torch.zeros(2, 3), torch.zeros(2))
    with pytest.raises(ValueError):
        netvlad(torch.zeros(1, 4, 3), torch.zeros(2, 3), torch.zeros(2, 4), torch.zeros(2))


def test_soft_assignment_rows_sum_to_one(rng):
    a = soft_assignment(*(torch.from_numpy(x) for x in (rng.normal(size=(3, 50, 8)) * 5,
                                                        rng.normal(size=(6, 8)), rng.normal(size=6))))
    assert torch.allclose(a.sum(dim=-1), torch.ones(3, 50, dtype=torch.float64), atol=1e-12)


def test_compress_normalize_matches_oracle(rng):
    G = rng.normal(size=(2, 4, 5))
    fc = rng.normal(size=(6, 20))
    got = compress_normalize(torch.from_numpy(G), torch.from_numpy(fc)).numpy()
    for b in range(2):
        assert max_rel_err(got[b], oracles.compress_normalize(G[b], fc)) < 1e-12


def test_compress_normalize_unit_norm_and_single(rng):
    G = torch.from_numpy(rng.normal(size=(4, 5)))
    v = compress_normalize(G, torch.from_numpy(rng.normal(size=(8, 20))))
    assert v.shape == (8,)
    assert abs(float(v.norm()) - 1.0) < 1e-12


def test_compress_normalize_rejects_all_zero():
    with pytest.raises(ValueError):
        compress_normalize(torch.zeros(1, 4, 5), torch.randn(8, 20))


def test_compress_normalize_dimension_check():
    with pytest.raises(ValueError):
        compress_normalize(torch.randn(1, 4, 5), torch.randn(8, 21))


def test_head_output_is_unit_norm():
    torch.manual_seed(0)
    head = DescriptorHead(16, 8, 32)
    v = head(torch.randn(3, 16, 4, 6))
    assert v.shape == (3, 32)
    assert torch.allclose(v.norm(dim=1), torch.ones(3), atol=1e-6)


def test_kmeans_warm_start_places_centres_on_clusters(rng):
    torch.manual_seed(0)
    blobs = np.concatenate([rng.normal(m, 0.05, size=(50, 2)) for m in ((0, 0), (5, 5), (-5, 5))])
    layer = NetVLAD(2, 3)
    layer.init_from_features(blobs, seed=0)
    centres = sorted(map(tuple, np.round(layer.centers.detach().numpy())))
    assert centres == [(-5.0, 5.0), (0.0, 0.0), (5.0, 5.0)]
    with torch.no_grad():
        a = layer.assignment(torch.tensor([[5.0, 5.0]])[None])
    assert float(a.max()) > 0.99
