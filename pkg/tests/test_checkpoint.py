"""Checkpoint format: bit-exact round trips and corruption diagnostics."""

from __future__ import annotations

import numpy as np
import pytest

from deepfbsde.autodiff import Parameter
from deepfbsde.checkpoint import MAGIC, load_checkpoint, read_manifest, save_checkpoint
from deepfbsde.errors import CheckpointError


def make_params(rng):
    return [Parameter(rng.normal(size=(3, 4)), "layer.W"),
            Parameter(rng.normal(size=(4,)), "layer.b"),
            Parameter(np.array(2.5), "scalar")]


def test_round_trip_is_bit_exact(tmp_path, rng):
    params = make_params(rng)
    originals = [p.value.copy() for p in params]
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, params, meta={"iteration": 7, "note": "x"})

    fresh = [Parameter(np.zeros_like(p.value), p.name) for p in params]
    meta = load_checkpoint(path, fresh)
    assert meta == {"iteration": 7, "note": "x"}
    for orig, p in zip(originals, fresh):
        np.testing.assert_array_equal(orig, p.value)   # bit exact, no tolerance


def test_load_fills_in_place_preserving_references(tmp_path, rng):
    params = make_params(rng)
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, params)
    target = Parameter(np.zeros((3, 4)), "layer.W")
    alias = target.value                 # e.g. an optimizer's view
    load_checkpoint(path, [target, Parameter(np.zeros(4), "layer.b"),
                           Parameter(np.array(0.0), "scalar")])
    assert target.value is alias         # same array object, filled in place
    np.testing.assert_array_equal(alias, params[0].value)


def test_order_independent_matching_by_name(tmp_path, rng):
    params = make_params(rng)
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, params)
    shuffled = [Parameter(np.zeros(4), "layer.b"),
                Parameter(np.array(0.0), "scalar"),
                Parameter(np.zeros((3, 4)), "layer.W")]
    load_checkpoint(path, shuffled)
    np.testing.assert_array_equal(shuffled[0].value, params[1].value)
    np.testing.assert_array_equal(shuffled[2].value, params[0].value)


def test_meta_survives_and_defaults_empty(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    assert read_manifest(path)["meta"] == {}


def test_bad_magic_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    raw = bytearray(open(path, "rb").read())
    raw[:8] = b"NOTMAGIC"
    open(path, "wb").write(bytes(raw))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path, make_params(rng))


def test_missing_parameter_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng)[:2])       # no "scalar" in file
    with pytest.raises(CheckpointError, match="scalar"):
        load_checkpoint(path, make_params(rng))


def test_extra_parameter_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))           # file has all three
    with pytest.raises(CheckpointError, match="not in the net"):
        load_checkpoint(path, make_params(rng)[:2])


def test_shape_mismatch_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    wrong = [Parameter(np.zeros((4, 3)), "layer.W"),
             Parameter(np.zeros(4), "layer.b"),
             Parameter(np.array(0.0), "scalar")]
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_checkpoint(path, wrong)


def test_truncated_data_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:-16])                 # drop the tail
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path, make_params(rng))


def test_truncated_manifest_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:20])
    with pytest.raises(CheckpointError):
        read_manifest(path)


def test_corrupt_manifest_json_rejected(tmp_path, rng):
    path = str(tmp_path / "net.bin")
    save_checkpoint(path, make_params(rng))
    raw = bytearray(open(path, "rb").read())
    raw[16] = ord("?")                                # JSON no longer parses
    open(path, "wb").write(bytes(raw))
    with pytest.raises(CheckpointError, match="manifest"):
        read_manifest(path)


def test_no_tmp_file_left_behind(tmp_path, rng):
    path = tmp_path / "net.bin"
    save_checkpoint(str(path), make_params(rng))
    assert path.exists()
    assert list(tmp_path.glob("*.tmp")) == []


def test_magic_is_eight_bytes():
    assert len(MAGIC) == 8
