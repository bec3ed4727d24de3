"""Tests for checkpoint files and resume."""

import pytest
import torch

from dexterlab.checkpoint import (
    FORMAT_VERSION,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_tensors,
)
from dexterlab.errors import CheckpointError
from dexterlab.ppo import make_optimizer
from dexterlab.trainer import LATEST_CHECKPOINT, Trainer, build_model
from tests.conftest import tiny_config


@pytest.fixture
def trained(small_config) -> Trainer:
    """Provide a trainer after one update, so Adam has state."""
    trainer = Trainer(small_config, quiet=True)
    trainer.update_once()
    return trainer


class TestCodec:
    """Test encoding and decoding."""

    def test_save_load_save_is_byte_identical(self, trained: Trainer):
        """Test that re-encoding a decoded checkpoint reproduces the bytes."""
        blob = encode_checkpoint(trained.checkpoint())
        assert encode_checkpoint(decode_checkpoint(blob)) == blob

    def test_tensors_restore_bitwise(self, trained: Trainer, tmp_path):
        """Test that parameters and Adam moments survive a file round trip."""
        path = trained.save(tmp_path / "ckpt.bin")
        restored = Trainer.from_checkpoint(path, run_dir=tmp_path / "restored", quiet=True)
        for (name, a), b in zip(trained.model.state_dict().items(), restored.model.state_dict().values()):
            assert torch.equal(a, b), name
        old_state = trained.optimizer.state_dict()["state"]
        new_state = restored.optimizer.state_dict()["state"]
        for index in old_state:
            assert torch.equal(old_state[index]["exp_avg"], new_state[index]["exp_avg"])
            assert torch.equal(old_state[index]["exp_avg_sq"], new_state[index]["exp_avg_sq"])
            assert float(old_state[index]["step"]) == float(new_state[index]["step"])
        assert restored.timestep == trained.timestep
        assert restored.curriculum.to_dict() == trained.curriculum.to_dict()

    def test_bad_magic(self):
        """Test that a foreign file is rejected."""
        with pytest.raises(CheckpointError) as info:
            decode_checkpoint(b"not a checkpoint\n12\n{}")
        assert info.value.field == "magic"

    def test_truncated_header(self, trained: Trainer):
        """Test that a cut inside the header names it."""
        blob = encode_checkpoint(trained.checkpoint())
        with pytest.raises(CheckpointError) as info:
            decode_checkpoint(blob[:40])
        assert info.value.field == "header"

    def test_truncated_payload(self, trained: Trainer):
        """Test that a cut inside the tensors names the tensor."""
        blob = encode_checkpoint(trained.checkpoint())
        with pytest.raises(CheckpointError) as info:
            decode_checkpoint(blob[:-10])
        assert info.value.field.startswith("tensors.")

    def test_version_mismatch(self, trained: Trainer):
        """Test that another format version is refused."""
        ckpt = trained.checkpoint()
        ckpt.format_version = FORMAT_VERSION + 1
        with pytest.raises(CheckpointError) as info:
            decode_checkpoint(encode_checkpoint(ckpt))
        assert info.value.field == "format_version"

    def test_width_mismatch(self, trained: Trainer, tmp_path):
        """Test that a checkpoint from another network size is not reshaped."""
        wide = tiny_config(tmp_path, ppo={"hidden": 256})
        model = build_model(wide)
        with pytest.raises(CheckpointError) as info:
            restore_tensors(model, make_optimizer(model, wide.ppo), trained.checkpoint())
        assert "shape mismatch" in str(info.value)

    def test_missing_file(self, tmp_path):
        """Test loading a path that does not exist."""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.ckpt")


class TestResume:
    """Test resume equivalence."""

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        """Test that 5 + 5 updates with a checkpoint in between equal 10 straight."""
        straight = Trainer(tiny_config(tmp_path, output_dir=str(tmp_path / "a")), quiet=True)
        straight.run()
        assert straight.n_updates == 10

        first = Trainer(tiny_config(tmp_path, output_dir=str(tmp_path / "b")), quiet=True)
        first.run(max_updates=5)
        assert first.n_updates == 5
        resumed = Trainer.from_checkpoint(tmp_path / "b" / LATEST_CHECKPOINT, quiet=True)
        resumed.run()
        assert resumed.n_updates == 10

        for (name, a), b in zip(straight.model.state_dict().items(), resumed.model.state_dict().values()):
            assert torch.equal(a, b), name
        updates_a = [r for r in straight.log.read() if r["event"] == "update"]
        updates_b = [r for r in resumed.log.read() if r["event"] == "update"]
        assert updates_a == updates_b

    def test_zero_timesteps_writes_initial_checkpoint(self, tmp_path):
        """Test that a zero-length run exits with a t=0 checkpoint."""
        trainer = Trainer(tiny_config(tmp_path, total_timesteps=0), quiet=True)
        path = trainer.run()
        ckpt = load_checkpoint(path)
        assert ckpt.timestep == 0
        assert ckpt.n_updates == 0
        assert ckpt.optimizer_steps == []
