"""Versioned binary container for models, sharing the embedding-store layout.

Version 1 files are embedding stores (see retrieval.write_embeddings);
version 2 files carry a bi-encoder model: the same header and label
section (holding the vocabulary), then a JSON config blob and a section
of named tensors with shapes. One reader dispatches on the version.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .encoder import RESERVED_TOKENS, BiEncoder, EncoderConfig, Vocabulary
from .errors import IngestError
from .retrieval import EMBEDDING_VERSION, MAGIC, EmbeddingMatrix, _read_labels, read_embeddings

MODEL_VERSION = 2


def save_model(path, model: BiEncoder) -> None:
    arrays = model.state_arrays()
    config_blob = json.dumps(
        {"encoder": model.config.as_dict(), "vocab_size": len(model.vocab)},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HII", MODEL_VERSION, len(model.vocab), model.config.dim))
        for token in model.vocab.tokens:
            raw = token.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path) -> BiEncoder:
    kind, payload = read_container(path)
    if kind != "model":
        raise IngestError(f"{path}: not a model file")
    return payload


def read_container(path):
    """Read either container kind: ('embeddings', EmbeddingMatrix) or
    ('model', BiEncoder)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise IngestError(f"{path}: bad magic, not a container file")
        version, count, dim = struct.unpack("<HII", fh.read(10))
        if version == EMBEDDING_VERSION:
            pass  # re-read through the embedding reader below
        elif version == MODEL_VERSION:
            tokens = _read_labels(fh, count)
            if tuple(tokens[:5]) != RESERVED_TOKENS:
                raise IngestError(f"{path}: vocabulary does not start with the reserved tokens")
            (blob_len,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(blob_len).decode("utf-8"))
            config = EncoderConfig.from_dict(meta["encoder"])
            if config.dim != dim or meta.get("vocab_size") != count:
                raise IngestError(f"{path}: header disagrees with the config blob")
            (n_tensors,) = struct.unpack("<I", fh.read(4))
            arrays = {}
            for _ in range(n_tensors):
                (name_len,) = struct.unpack("<H", fh.read(2))
                name = fh.read(name_len).decode("utf-8")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                size = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(size * 4), dtype="<f4")
                if data.size != size:
                    raise IngestError(f"{path}: truncated tensor {name}")
                arrays[name] = data.reshape(shape).astype(np.float32)
            model = BiEncoder(Vocabulary(tokens[5:]), config, seed=0)
            model.load_state_arrays(arrays)
            return "model", model
        else:
            raise IngestError(f"{path}: unsupported container version {version}")
    return "embeddings", read_embeddings(path)


def read_any_embeddings(path) -> EmbeddingMatrix:
    """Embedding matrix from either the binary store or plain-text vectors."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return read_embeddings(path)
    from .retrieval import read_text_vectors

    return read_text_vectors(path)
