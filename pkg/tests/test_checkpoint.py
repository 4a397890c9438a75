import json

import numpy as np
import pytest

from metaqa.checkpoint import VERSION, Checkpoint, load_checkpoint, save_checkpoint
from metaqa.errors import CheckpointError
from metaqa.evaluation import evaluate


def test_round_trip_bit_exact(tiny_ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(tiny_ckpt, path)
    back = load_checkpoint(path)
    assert list(back.params) == list(tiny_ckpt.params)
    for name, arr in tiny_ckpt.params.items():
        assert back.params[name].tobytes() == arr.tobytes()
    assert back.to_bytes() == tiny_ckpt.to_bytes()
    assert back.metadata == tiny_ckpt.metadata and back.config == tiny_ckpt.config


def test_header_is_json_line(tiny_ckpt):
    blob = tiny_ckpt.to_bytes()
    head = json.loads(blob[: blob.index(b"\n")])
    assert head["format"] == VERSION
    assert [n for n, _ in head["manifest"]] == list(tiny_ckpt.params)


def test_truncated_file(tiny_ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(tiny_ckpt.to_bytes()[:-9])
    with pytest.raises(CheckpointError, match="payload"):
        load_checkpoint(path)
    path.write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_version_mismatch(tiny_ckpt):
    blob = tiny_ckpt.to_bytes().replace(VERSION.encode(), b"metaqa-ckpt/0", 1)
    with pytest.raises(CheckpointError, match="version"):
        Checkpoint.from_bytes(blob)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "none.ckpt")


def test_reload_evaluates_identically(tiny_ckpt, tiny_bench, tmp_path):
    save_checkpoint(tiny_ckpt, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    a = evaluate(back, tiny_bench["test"]).to_dict()
    b = evaluate(back, tiny_bench["test"]).to_dict()
    assert a == b == evaluate(tiny_ckpt, tiny_bench["test"]).to_dict()


def test_to_model_copies(tiny_ckpt):
    m = tiny_ckpt.to_model()
    m.params["anssel.bias"].data[...] = 99.0
    assert not np.any(tiny_ckpt.params["anssel.bias"] == 99.0)
