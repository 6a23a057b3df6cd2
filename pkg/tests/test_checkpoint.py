import json
import struct

import numpy as np
import pytest

from nmst.checkpoint import MAGIC, CheckpointError, ModelCheckpoint, load_checkpoint, save_checkpoint
from nmst.core import Vocabulary
from nmst.net.backbone import Architecture
from nmst.net.lm import HeadSpec, RecurrentLM


@pytest.fixture(params=[("rnn", "va", None, True), ("lstm", "nmst", 1e-4, False), ("lstm", "st", 0.3, True)])
def model(request):
    cell, kind, eps, tie = request.param
    vocab = Vocabulary(("<eos>", "<unk>", "a", "b", "c"))
    arch = Architecture(cell, 5, 6, num_layers=2, tie_weights=tie)
    return RecurrentLM.init(vocab, arch, HeadSpec(kind, eps), np.random.default_rng(0))


def split(blob):
    (hlen,) = struct.unpack("<Q", blob[8:16])
    return json.loads(blob[16:16 + hlen]), blob[16 + hlen:]


def rebuild(header, payload):
    head = json.dumps(header).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


class TestRoundTrip:
    def test_bitwise(self, model, tmp_path):
        ckpt = save_checkpoint(model, tmp_path / "m.ckpt", {"note": "x"})
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.vocab == model.vocab and back.arch == model.arch and back.head == model.head
        assert back.metadata == {"note": "x"}
        for k in ckpt.params:
            assert back.params[k].tobytes() == ckpt.params[k].tobytes()
        assert back.to_bytes() == ckpt.to_bytes()

    def test_float32_rounding_only(self, model):
        ckpt = ModelCheckpoint.from_model(model)
        for k, v in model.params.items():
            np.testing.assert_allclose(ckpt.params[k], v, rtol=1e-7, atol=0)

    def test_same_predictions(self, model):
        back = ModelCheckpoint.from_bytes(ModelCheckpoint.from_model(model).to_bytes()).to_model()
        d0, _ = model.step((2, 3), (4,))
        d1, _ = back.step((2, 3), (4,))
        np.testing.assert_allclose(d0.probs, d1.probs, rtol=1e-5)

    def test_header_manifest(self, model):
        header, payload = split(ModelCheckpoint.from_model(model).to_bytes())
        assert header["format_version"] == 1
        assert sum(t["nbytes"] for t in header["tensors"]) == len(payload) == 4 * model.num_parameters


class TestRejects:
    def test_bad_magic(self, model):
        blob = ModelCheckpoint.from_model(model).to_bytes()
        with pytest.raises(CheckpointError, match="magic"):
            ModelCheckpoint.from_bytes(b"XXXXXXXX" + blob[8:])

    def test_truncated_payload_reports_offset(self, model):
        blob = ModelCheckpoint.from_model(model).to_bytes()
        with pytest.raises(CheckpointError, match=r"truncated payload: tensor .* payload ends at \d+"):
            ModelCheckpoint.from_bytes(blob[:-3])

    def test_truncated_header(self, model):
        blob = ModelCheckpoint.from_model(model).to_bytes()
        with pytest.raises(CheckpointError, match="offset 16"):
            ModelCheckpoint.from_bytes(blob[:40])

    def test_trailing_bytes(self, model):
        with pytest.raises(CheckpointError, match="trailing"):
            ModelCheckpoint.from_bytes(ModelCheckpoint.from_model(model).to_bytes() + b"\0\0\0\0")

    def test_version_mismatch(self, model):
        header, payload = split(ModelCheckpoint.from_model(model).to_bytes())
        header["format_version"] = 2
        with pytest.raises(CheckpointError, match="format_version"):
            ModelCheckpoint.from_bytes(rebuild(header, payload))

    def test_wrong_hidden_size(self, model):
        header, payload = split(ModelCheckpoint.from_model(model).to_bytes())
        header["architecture"]["hidden_size"] = 7
        with pytest.raises(CheckpointError, match="shape"):
            ModelCheckpoint.from_bytes(rebuild(header, payload))

    def test_vocab_mismatch(self, model):
        header, payload = split(ModelCheckpoint.from_model(model).to_bytes())
        header["vocabulary"]["tokens"] = header["vocabulary"]["tokens"][:-1]
        with pytest.raises(CheckpointError):
            ModelCheckpoint.from_bytes(rebuild(header, payload))

    def test_non_finite_params(self, model):
        params = dict(model.params)
        params["embedding"] = params["embedding"].copy()
        params["embedding"][0, 0] = np.nan
        with pytest.raises(CheckpointError, match="non-finite"):
            ModelCheckpoint(model.vocab, model.arch, model.head, params)
