"""Prompt construction and the two independent encoder towers.

A phrase is rendered into a prompt such as ``<cls> banana means <mask>
<sep>``, encoded by a small transformer-style stack (learned token and
position embeddings, single-head self-attention plus a position-wise MLP
per layer), and pooled at the mask position. Concepts and properties go
through separate towers that share no parameters; the probability that a
concept has a property is the sigmoid of the inner product of the two
pooled vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import normalize, tokenize
from .errors import InputError

PAD, UNK, CLS, MASK, SEP = "<pad>", "<unk>", "<cls>", "<mask>", "<sep>"
RESERVED_TOKENS = (PAD, UNK, CLS, MASK, SEP)
PAD_ID, UNK_ID, CLS_ID, MASK_ID, SEP_ID = range(5)

DEFAULT_TEMPLATE = "<cls> {X} means <mask> <sep>"


class Vocabulary:
    """Dense token-to-id mapping with reserved special tokens at 0..4."""

    def __init__(self, learned_tokens):
        self.tokens = list(RESERVED_TOKENS) + list(learned_tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise InputError("duplicate tokens in vocabulary")
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, phrases, extra_tokens=()) -> "Vocabulary":
        seen = set()
        for phrase in phrases:
            seen.update(tokenize(phrase))
        seen.update(extra_tokens)
        seen.difference_update(RESERVED_TOKENS)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def to_ids(self, tokens) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]


@dataclass(frozen=True)
class RenderedPrompt:
    ids: tuple[int, ...]
    mask_pos: int | None
    cls_pos: int | None
    sep_pos: int | None

    def __len__(self) -> int:
        return len(self.ids)


class PromptTemplate:
    """A prompt shape: literal words, special markers, and one {X} slot."""

    def __init__(self, spec: str):
        self.spec = spec
        items = spec.split()
        if items.count("{X}") != 1:
            raise InputError(f"template needs exactly one {{X}} slot: {spec!r}")
        self.items = [it if it in (CLS, MASK, SEP, "{X}") else normalize(it) for it in items]
        self.mask_count = self.items.count(MASK)

    def fixed_length(self) -> int:
        return len(self.items) - 1

    def render(self, vocab: Vocabulary, phrase: str, max_len: int = 16) -> RenderedPrompt:
        """Substitute the phrase into the slot and map to token ids.

        The phrase is truncated from the right when the sequence would
        exceed max_len; the template's own tokens are never dropped.
        """
        words = tokenize(phrase)
        if not words:
            raise InputError("cannot render an empty phrase")
        budget = max_len - self.fixed_length()
        if budget < 1:
            raise InputError(
                f"max_len {max_len} leaves no room for the phrase in {self.spec!r}"
            )
        words = words[:budget]
        ids: list[int] = []
        mask_pos = cls_pos = sep_pos = None
        for item in self.items:
            if item == "{X}":
                ids.extend(vocab.to_ids(words))
                continue
            if item == MASK and mask_pos is None:
                mask_pos = len(ids)
            elif item == CLS and cls_pos is None:
                cls_pos = len(ids)
            elif item == SEP and sep_pos is None:
                sep_pos = len(ids)
            ids.append(vocab.id_of(item))
        return RenderedPrompt(tuple(ids), mask_pos, cls_pos, sep_pos)


@dataclass
class EncoderConfig:
    dim: int = 64
    layers: int = 2
    ffn_dim: int = 128
    max_len: int = 16
    pooling: str = "mask"  # "mask" or "mean"
    use_attention: bool = True
    template: str = DEFAULT_TEMPLATE
    concept_template: str | None = None  # per-tower overrides
    property_template: str | None = None
    init_std: float = 0.1

    def resolved_concept_template(self) -> str:
        return self.concept_template or self.template

    def resolved_property_template(self) -> str:
        return self.property_template or self.template

    def as_dict(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "ffn_dim": self.ffn_dim,
            "max_len": self.max_len,
            "pooling": self.pooling,
            "use_attention": self.use_attention,
            "template": self.template,
            "concept_template": self.concept_template,
            "property_template": self.property_template,
            "init_std": self.init_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


class EncoderParams:
    """All trainable weights of one tower, addressable by name."""

    def __init__(self, config: EncoderConfig, vocab_size: int, rng: np.random.Generator):
        self.config = config
        d, f = config.dim, config.ffn_dim
        std = config.init_std

        def init(*shape):
            return T.Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)

        self.tensors: dict[str, T.Tensor] = {}
        self.tensors["token_emb"] = init(vocab_size, d)
        self.tensors["pos_emb"] = init(config.max_len, d)
        for i in range(config.layers):
            if config.use_attention:
                for name in ("wq", "wk", "wv", "wo"):
                    self.tensors[f"layer{i}.{name}"] = init(d, d)
            self.tensors[f"layer{i}.w1"] = init(d, f)
            self.tensors[f"layer{i}.b1"] = T.Tensor(np.zeros(f), requires_grad=True)
            self.tensors[f"layer{i}.w2"] = init(f, d)
            self.tensors[f"layer{i}.b2"] = T.Tensor(np.zeros(d), requires_grad=True)
        self.tensors["head"] = init(d, d)

    def __getitem__(self, name: str) -> T.Tensor:
        return self.tensors[name]

    def named(self):
        return self.tensors.items()

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.tensors.items():
            t.data = np.array(arrays[name], dtype=t.data.dtype)


def encode(params: EncoderParams, ids, mask_pos: int | None) -> T.Tensor:
    """Run one tower over a token-id sequence; returns the pooled vector.

    With mask pooling the output is the final-layer representation at
    mask_pos, passed through the output head; with mean pooling it is the
    mean over all positions. Fully differentiable.
    """
    cfg = params.config
    ids = list(ids)
    if not ids:
        raise InputError("cannot encode an empty sequence")
    if cfg.pooling == "mask":
        if mask_pos is None:
            raise InputError("mask pooling needs a mask position")
        if not 0 <= mask_pos < len(ids):
            raise InputError(f"mask position {mask_pos} out of range for length {len(ids)}")
    x = T.add(
        T.gather_rows(params["token_emb"], ids),
        T.gather_rows(params["pos_emb"], list(range(len(ids)))),
    )
    inv_sqrt_d = 1.0 / math.sqrt(cfg.dim)
    for i in range(cfg.layers):
        if cfg.use_attention:
            q = T.matmul(x, params[f"layer{i}.wq"])
            k = T.matmul(x, params[f"layer{i}.wk"])
            v = T.matmul(x, params[f"layer{i}.wv"])
            att = T.softmax_rows(T.scale(T.matmul(q, T.transpose(k)), inv_sqrt_d))
            x = T.add(x, T.matmul(T.matmul(att, v), params[f"layer{i}.wo"]))
        hidden = T.tanh(T.add(T.matmul(x, params[f"layer{i}.w1"]), params[f"layer{i}.b1"]))
        x = T.add(x, T.add(T.matmul(hidden, params[f"layer{i}.w2"]), params[f"layer{i}.b2"]))
    pooled = T.take_row(x, mask_pos) if cfg.pooling == "mask" else T.mean_rows(x)
    return T.vecmat(pooled, params["head"])


class BiEncoder:
    """The pair of towers plus the vocabulary and prompt templates."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.concept_template = PromptTemplate(config.resolved_concept_template())
        self.property_template = PromptTemplate(config.resolved_property_template())
        if config.pooling == "mask":
            for tpl in (self.concept_template, self.property_template):
                if tpl.mask_count != 1:
                    raise InputError(
                        f"mask pooling needs exactly one <mask> in the template: {tpl.spec!r}"
                    )
        rng = np.random.default_rng(seed)
        # independent towers: separate draws, no shared tensors
        self.concept = EncoderParams(config, len(vocab), rng)
        self.property = EncoderParams(config, len(vocab), rng)

    @classmethod
    def for_dataset(cls, dataset, config: EncoderConfig | None = None, seed: int = 0) -> "BiEncoder":
        """Build vocabulary from a pair dataset's phrases plus template words."""
        config = config or EncoderConfig()
        extra = []
        for spec in (config.resolved_concept_template(), config.resolved_property_template()):
            extra.extend(
                it for it in PromptTemplate(spec).items if it not in (CLS, MASK, SEP, "{X}")
            )
        phrases = list(dataset.concepts()) + list(dataset.properties())
        vocab = Vocabulary.build(phrases, extra_tokens=extra)
        return cls(vocab, config, seed=seed)

    def render_concept(self, phrase: str) -> RenderedPrompt:
        return self.concept_template.render(self.vocab, phrase, self.config.max_len)

    def render_property(self, phrase: str) -> RenderedPrompt:
        return self.property_template.render(self.vocab, phrase, self.config.max_len)

    def concept_tensor(self, phrase: str) -> T.Tensor:
        r = self.render_concept(phrase)
        return encode(self.concept, r.ids, r.mask_pos)

    def property_tensor(self, phrase: str) -> T.Tensor:
        r = self.render_property(phrase)
        return encode(self.property, r.ids, r.mask_pos)

    def concept_vector(self, phrase: str) -> np.ndarray:
        with T.no_grad():
            return self.concept_tensor(phrase).data

    def property_vector(self, phrase: str) -> np.ndarray:
        with T.no_grad():
            return self.property_tensor(phrase).data

    def score_tensor(self, concept: str, property: str) -> T.Tensor:
        return T.sigmoid(T.dot(self.concept_tensor(concept), self.property_tensor(property)))

    def score(self, concept: str, property: str) -> float:
        """Probability in (0,1) that the concept has the property."""
        with T.no_grad():
            return float(self.score_tensor(concept, property).data)

    def named_tensors(self):
        for name, t in self.concept.named():
            yield f"concept.{name}", t
        for name, t in self.property.named():
            yield f"property.{name}", t

    def zero_grads(self) -> None:
        self.concept.zero_grads()
        self.property.zero_grads()

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {f"concept.{k}": v for k, v in self.concept.state_arrays().items()}
        state.update({f"property.{k}": v for k, v in self.property.state_arrays().items()})
        return state

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.concept.load_state_arrays(
            {k.removeprefix("concept."): v for k, v in arrays.items() if k.startswith("concept.")}
        )
        self.property.load_state_arrays(
            {k.removeprefix("property."): v for k, v in arrays.items() if k.startswith("property.")}
        )
