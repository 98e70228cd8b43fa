"""Encoder pair, projection heads, and style classifier.

The content encoder is a two-layer MLP from the joint embedding space to the
representation space. The style encoder keeps the input width for two layers
and adds the raw input back onto the second pre-activation (a skip
connection) before expanding to the representation width:

    content:  g -> Linear(d_in, d_emb) -> ReLU -> Linear(d_emb, d_emb)
    style:    g -> Linear(d_in, d_in)  -> ReLU -> Linear(d_in, d_in)
                 -> (+ g) -> ReLU -> Linear(d_in, d_emb)

Each space has its own projection head Linear -> ReLU -> Linear used only by
the training losses; a single linear classifier predicts the style class from
the style representation. With ``single_layer`` set, each encoder collapses
to one linear map (no skip, no ReLU) and the rest is unchanged.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, FormatError, ShapeError
from .nn import FLOAT, ForwardCache, Linear, Relu, stack_backward, stack_forward


@dataclass(frozen=True)
class ModelConfig:
    """Widths and structure switches for the network.

    ``style_hidden_dim`` defaults to ``input_dim``; any other value is
    rejected because the skip connection adds the raw input onto the second
    style pre-activation, which only typechecks at equal widths.
    """

    input_dim: int = 512
    embed_dim: int = 2048
    n_styles: int = 27
    proj_dim: int = 64
    single_layer: bool = False
    style_hidden_dim: int | None = None

    def __post_init__(self):
        for name in ("input_dim", "embed_dim", "n_styles", "proj_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        hidden = self.input_dim if self.style_hidden_dim is None else self.style_hidden_dim
        if not self.single_layer and hidden != self.input_dim:
            raise ConfigError(
                f"style_hidden_dim={hidden} breaks the skip connection; "
                f"it must equal input_dim={self.input_dim}"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        if not isinstance(data, dict):
            raise ConfigError("model config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown model config key '{unknown[0]}'")
        return cls(**data)


class GoyaModel:
    """Content/style encoder pair with projection heads and style classifier.

    All parameters are float64 in memory. Gradients accumulate on the layers
    across backward calls until ``zero_grad``. Construction from the same
    seed yields identical parameters.
    """

    def __init__(self, config: ModelConfig, rng_seed=0) -> None:
        self.config = config
        if isinstance(rng_seed, np.random.SeedSequence):
            rng = np.random.default_rng(rng_seed)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(int(rng_seed)))
        d_in = config.input_dim
        d_emb = config.embed_dim
        if config.single_layer:
            self._content = [Linear(d_in, d_emb, rng, "content.l1")]
            self._style = [Linear(d_in, d_emb, rng, "style.l1")]
        else:
            self._content = [
                Linear(d_in, d_emb, rng, "content.l1"),
                Relu(),
                Linear(d_emb, d_emb, rng, "content.l2"),
            ]
            self.style_l1 = Linear(d_in, d_in, rng, "style.l1")
            self.style_l2 = Linear(d_in, d_in, rng, "style.l2")
            self.style_l3 = Linear(d_in, d_emb, rng, "style.l3")
            self._style_relu1 = Relu()
            self._style_relu2 = Relu()
        self._proj = {
            "content": [
                Linear(d_emb, d_emb, rng, "proj_c.l1"),
                Relu(),
                Linear(d_emb, config.proj_dim, rng, "proj_c.l2"),
            ],
            "style": [
                Linear(d_emb, d_emb, rng, "proj_s.l1"),
                Relu(),
                Linear(d_emb, config.proj_dim, rng, "proj_s.l2"),
            ],
        }
        self.classifier = Linear(d_emb, config.n_styles, rng, "classifier")

    # ---- forward / backward -------------------------------------------------

    def content_forward(self, g: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        return stack_forward(self._content, g, cache)

    def content_backward(self, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
        return stack_backward(self._content, grad_out, cache)

    def style_forward(self, g: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        if self.config.single_layer:
            return stack_forward(self._style, g, cache)
        a1 = self.style_l1.forward(g, cache)
        r1 = self._style_relu1.forward(a1, cache)
        a2 = self.style_l2.forward(r1, cache)
        s = a2 + g  # skip join; widths validated at construction
        r2 = self._style_relu2.forward(s, cache)
        return self.style_l3.forward(r2, cache)

    def style_backward(self, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
        if self.config.single_layer:
            return stack_backward(self._style, grad_out, cache)
        g_r2 = self.style_l3.backward(grad_out, cache)
        g_s = self._style_relu2.backward(g_r2, cache)
        g_r1 = self.style_l2.backward(g_s, cache)
        g_a1 = self._style_relu1.backward(g_r1, cache)
        g_in = self.style_l1.backward(g_a1, cache)
        return g_in + g_s  # skip branch routes the post-join gradient back

    def project(self, which: str, e: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        return stack_forward(self._projector(which), e, cache)

    def project_backward(self, which: str, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
        return stack_backward(self._projector(which), grad_out, cache)

    def _projector(self, which: str):
        try:
            return self._proj[which]
        except KeyError:
            raise ConfigError(f"unknown projector '{which}', expected 'content' or 'style'") from None

    def classify_style(self, e_style: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        return self.classifier.forward(e_style, cache)

    # ---- parameter access ----------------------------------------------------

    def layers(self) -> list[Linear]:
        """All linear layers in a fixed canonical order."""
        if self.config.single_layer:
            enc = [*self._content, *self._style]
        else:
            enc = [self._content[0], self._content[2], self.style_l1, self.style_l2, self.style_l3]
        proj = [self._proj["content"][0], self._proj["content"][2],
                self._proj["style"][0], self._proj["style"][2]]
        return [*enc, *proj, self.classifier]

    def named_parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers():
            out[f"{layer.name}.weight"] = layer.weight
            out[f"{layer.name}.bias"] = layer.bias
        return out

    def named_gradients(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers():
            out[f"{layer.name}.weight"] = layer.grad_weight
            out[f"{layer.name}.bias"] = layer.grad_bias
        return out

    def zero_grad(self) -> None:
        for layer in self.layers():
            layer.zero_grad()

    # ---- persistence ----------------------------------------------------------

    def to_checkpoint(self, extra_metadata: dict | None = None) -> Checkpoint:
        tensors = {name: p.astype(np.float32) for name, p in self.named_parameters().items()}
        metadata = {"model_config": self.config.to_dict()}
        if extra_metadata:
            metadata.update(extra_metadata)
        return Checkpoint(tensors=tensors, metadata=metadata)

    def save(self, path, extra_metadata: dict | None = None) -> None:
        save_checkpoint(self.to_checkpoint(extra_metadata), path)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "GoyaModel":
        meta = ckpt.metadata.get("model_config")
        if meta is None:
            raise FormatError("checkpoint metadata lacks 'model_config'")
        config = ModelConfig.from_dict(meta)
        model = cls(config, rng_seed=0)
        params = model.named_parameters()
        missing = sorted(set(params) - set(ckpt.tensors))
        if missing:
            raise FormatError(f"checkpoint is missing tensor '{missing[0]}'")
        extra = sorted(set(ckpt.tensors) - set(params))
        if extra:
            raise FormatError(f"checkpoint has unexpected tensor '{extra[0]}'")
        for name, p in params.items():
            stored = ckpt.tensors[name]
            if stored.shape != p.shape:
                raise FormatError(
                    f"checkpoint tensor '{name}' has shape {stored.shape}, expected {p.shape}"
                )
            p[...] = stored.astype(FLOAT)
        return model

    @classmethod
    def load(cls, path) -> "GoyaModel":
        return cls.from_checkpoint(load_checkpoint(path))

    # ---- inference helpers -----------------------------------------------------

    def encode_content(self, g: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Content representations for a matrix of joint embeddings."""
        return _batched(self.content_forward, g, batch_size)

    def encode_style(self, g: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Style representations for a matrix of joint embeddings."""
        return _batched(self.style_forward, g, batch_size)


def _batched(fn, x: np.ndarray, batch_size: int) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {x.shape}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    x = np.asarray(x, dtype=FLOAT)
    chunks = [fn(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    if not chunks:
        return fn(x)
    return np.concatenate(chunks, axis=0)
