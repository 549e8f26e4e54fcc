import json

import numpy as np
import pytest

from certspn import io
from certspn.learn import LearnConfig, train
from certspn.spn import log_likelihood, structural_equal
from certspn.unlearn import unlearn_batch, unlearn_spn
from certspn.verify import VERIFY_CONFIG, generate


@pytest.fixture
def model():
    ds = generate("categorical", np.random.default_rng(0), 60, 4)
    spn = train(ds, VERIFY_CONFIG)
    unlearn_spn(spn, 7)
    return spn


def test_round_trip_is_bit_identical(model, tmp_path):
    path = tmp_path / "m.json"
    io.save(model, path)
    back = io.load(path)
    assert structural_equal(model, back)[0]
    assert io.dumps(back) == path.read_text()
    assert back.dataset.removed == {7}
    X = model.dataset.values[model.dataset.row_ids]
    assert np.array_equal(log_likelihood(model, X), log_likelihood(back, X))


def test_loaded_model_keeps_unlearning_like_the_original(model):
    back = io.loads(io.dumps(model))
    unlearn_batch(model, [3, 11])
    unlearn_batch(back, [3, 11])
    assert io.dumps(model) == io.dumps(back)


def test_version_and_corruption(model, tmp_path):
    text = io.dumps(model)
    doc = json.loads(text)
    doc["version"] = io.VERSION + 1
    with pytest.raises(io.VersionError):
        io.loads(json.dumps(doc))
    with pytest.raises(io.CorruptModelError):
        io.loads(text[: len(text) // 2])
    with pytest.raises(io.CorruptModelError, match="checksum"):
        io.loads(text.replace('"num_data":', '"num_data":1', 1))
    with pytest.raises(io.CorruptModelError):
        io.loads('{"format": "something-else"}')


def test_failed_write_keeps_previous_file(model, tmp_path, monkeypatch):
    path = tmp_path / "m.json"
    io.save(model, path)
    before = path.read_bytes()

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", boom)
    unlearn_spn(model, 1)
    with pytest.raises(OSError):
        io.save(model, path)
    assert path.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["m.json"]


def test_config_round_trip():
    cfg = LearnConfig(threshold=9, k=3, master_seed=2**63 - 1)
    assert LearnConfig.from_dict(json.loads(io.canonical(cfg.to_dict()))) == cfg
