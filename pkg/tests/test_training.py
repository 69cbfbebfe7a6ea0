import csv
import json

import numpy as np
import pytest
import torch

from panoloc.config import toy_config
from panoloc.pipeline import synthetic_pairs
from panoloc.training import (CheckpointMismatchError, NonFiniteLossError, PairDataset, embed_images,
                              embed_points, is_monotone_decreasing, load_checkpoint, save_checkpoint,
                              train)
from panoloc.model import CrossModalNet


def tiny_config(**kw):
    base = dict(image_size=(96, 160), image_widths=(4, 8, 8, 16), point_widths=(8, 8, 8, 16, 16),
                num_points=128, clusters=4, descriptor_dim=16, reduction=4, batch_size=4, epochs=1)
    base.update(kw)
    return toy_config(**base)


@pytest.fixture(scope="module")
def tiny_data():
    cfg = tiny_config()
    _, _, pairs = synthetic_pairs(8, 3, cfg)
    return PairDataset.from_pairs(pairs)


def _log_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_one_epoch(tmp_path, tiny_data):
    res = train(tiny_config(), tiny_data, tmp_path)
    rows = _log_rows(tmp_path / "loss_log.csv")
    assert len(rows) == 1 and rows[0]["epoch"] == "1"
    assert (tmp_path / "last.pt").exists() and (tmp_path / "epoch_001.pt").exists()
    assert np.isfinite(res.history[0]["total"])


def test_resume_continues(tmp_path, tiny_data):
    full = train(tiny_config(epochs=2), tiny_data, tmp_path / "full")
    train(tiny_config(epochs=1), tiny_data, tmp_path / "part")
    resumed = train(tiny_config(epochs=2), tiny_data, tmp_path / "part", resume=tmp_path / "part" / "last.pt")
    assert [h["epoch"] for h in resumed.history] == [1, 2]
    assert resumed.history[1]["total"] == pytest.approx(full.history[1]["total"], rel=1e-5)
    assert len(_log_rows(tmp_path / "part" / "loss_log.csv")) == 2
    a = torch.load(tmp_path / "full" / "last.pt", weights_only=False)
    b = torch.load(tmp_path / "part" / "last.pt", weights_only=False)
    assert a["epoch"] == b["epoch"] == 2
    step_a = a["optimizers"][0]["state"][0]["step"]
    step_b = b["optimizers"][0]["state"][0]["step"]
    assert float(step_a) == float(step_b)
    for k, v in a["model"].items():
        assert torch.allclose(v.float(), b["model"][k].float(), atol=1e-5), k


def test_resume_rejects_other_architecture(tmp_path, tiny_data):
    train(tiny_config(), tiny_data, tmp_path)
    with pytest.raises(CheckpointMismatchError):
        train(tiny_config(epochs=2, clusters=8), tiny_data, tmp_path, resume=tmp_path / "last.pt")


def test_load_checkpoint(tmp_path):
    cfg = tiny_config()
    model = CrossModalNet.from_config(cfg)
    save_checkpoint(tmp_path / "c.pt", model, cfg, 3, image_stats=(np.zeros(3), np.ones(3)))
    loaded, state = load_checkpoint(tmp_path / "c.pt", cfg)
    assert state["epoch"] == 3
    with pytest.raises(CheckpointMismatchError, match="attention"):
        load_checkpoint(tmp_path / "c.pt", cfg.replace(attention=False))
    torch.save({"weights": 1}, tmp_path / "other.pt")
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(tmp_path / "other.pt")


def test_non_finite_loss_dumps(tmp_path, tiny_data, monkeypatch):
    import panoloc.training as tr

    real = tr.loss_terms

    def broken(t, w):
        out = real(t, w)
        out["total"] = out["total"] * float("nan")
        return out

    monkeypatch.setattr(tr, "loss_terms", broken)
    with pytest.raises(NonFiniteLossError):
        train(tiny_config(), tiny_data, tmp_path)
    dumps = list(tmp_path.glob("nonfinite_*.json"))
    assert len(dumps) == 1
    info = json.loads(dumps[0].read_text())
    assert info["epoch"] == 0 and info["ids"]


def test_embedding_is_deterministic(tmp_path, tiny_data):
    cfg = tiny_config()
    res = train(cfg, tiny_data, tmp_path)
    mean, std = tiny_data.channel_stats()
    a = embed_images(res.model, tiny_data.images, mean, std)
    b = embed_images(res.model, tiny_data.images[:5], mean, std, batch_size=2)
    assert np.allclose(a[:5], b, atol=1e-6)
    p = embed_points(res.model, tiny_data.points, cfg)
    assert np.array_equal(p, embed_points(res.model, tiny_data.points, cfg))
    assert np.allclose(np.linalg.norm(a, axis=1), 1, atol=1e-6)
    assert np.allclose(np.linalg.norm(p, axis=1), 1, atol=1e-6)


def test_monotone_helper():
    assert is_monotone_decreasing([5, 3, 4, 2, 1], start=2)
    assert not is_monotone_decreasing([5, 3, 4, 2, 1])
    assert not is_monotone_decreasing([3, 2, float("nan")])
