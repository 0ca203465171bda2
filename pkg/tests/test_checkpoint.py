"""Checkpoint container: round trips, canonical bytes, corruption handling."""

import numpy as np
import pytest

from cstnet.checkpoint import load_model, save_model
from cstnet.errors import ConfigError, FormatError
from cstnet.io import read_checkpoint, write_checkpoint
from cstnet.model import Cstnet, CstnetConfig


def micro_model(seed=0):
    return Cstnet(CstnetConfig(num_identities=4, clip_len=2, frame_h=16, frame_w=8,
                               stage_channels=(4, 8, 8, 8, 8), embedding_dim=8,
                               csl_channels=4, csl_pool_h=2, csl_pool_w=2,
                               sti_channels=4, sti_pool_h=2, sti_pool_w=1,
                               seed=seed))


def test_container_round_trip(tmp_path, rng):
    state = {"a.weight": rng.standard_normal((3, 4)).astype(np.float32),
             "b.bias": rng.standard_normal(5)}
    config = {"kind": "demo", "n": 3}
    write_checkpoint(tmp_path / "c.ckpt", config, state)
    got_config, got_state = read_checkpoint(tmp_path / "c.ckpt")
    assert got_config == config
    assert set(got_state) == set(state)
    for name in state:
        assert np.array_equal(got_state[name], state[name])
        assert got_state[name].dtype == state[name].dtype


def test_model_round_trip_bit_exact(tmp_path):
    model = micro_model(seed=5)
    save_model(tmp_path / "m.ckpt", model)
    restored = load_model(tmp_path / "m.ckpt")
    assert restored.cfg == model.cfg
    for (na, pa), (nb, pb) in zip(model.named_parameters(), restored.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    for (na, ba), (nb, bb) in zip(model.named_buffers(), restored.named_buffers()):
        assert na == nb and np.array_equal(ba, bb)


def test_identical_states_serialize_to_identical_bytes(tmp_path):
    save_model(tmp_path / "a.ckpt", micro_model(seed=9))
    save_model(tmp_path / "b.ckpt", micro_model(seed=9))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_restored_model_evaluates_identically(tmp_path, rng):
    model = micro_model(seed=1)
    clips = rng.random((3, 2, 3, 16, 8))
    before = model.embed_clips(clips)
    save_model(tmp_path / "m.ckpt", model)
    after = load_model(tmp_path / "m.ckpt").embed_clips(clips)
    assert np.array_equal(before, after)


def test_corrupt_magic(tmp_path):
    save_model(tmp_path / "m.ckpt", micro_model())
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[:4] = b"JUNK"
    (tmp_path / "m.ckpt").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        load_model(tmp_path / "m.ckpt")


def test_truncated_checkpoint(tmp_path):
    save_model(tmp_path / "m.ckpt", micro_model())
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "m.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(FormatError, match="truncated"):
        load_model(tmp_path / "m.ckpt")


def test_state_shape_mismatch_rejected(tmp_path):
    model = micro_model()
    state = model.named_state()
    state["embed.weight"] = np.zeros((2, 2), dtype=np.float32)
    write_checkpoint(tmp_path / "m.ckpt", model.cfg.to_dict(), state)
    with pytest.raises(ConfigError, match="embed.weight"):
        load_model(tmp_path / "m.ckpt")


def test_missing_entry_rejected(tmp_path):
    model = micro_model()
    state = model.named_state()
    state.pop("classify.bias")
    write_checkpoint(tmp_path / "m.ckpt", model.cfg.to_dict(), state)
    with pytest.raises(ConfigError, match="missing"):
        load_model(tmp_path / "m.ckpt")


def test_config_echo_must_describe_model(tmp_path):
    write_checkpoint(tmp_path / "m.ckpt", {"nonsense": True}, {})
    with pytest.raises(FormatError):
        load_model(tmp_path / "m.ckpt")
