"""Multi-head attention deep & cross network.

Data flow for one batch::

    dense (standardized) ─┐
    codes ─> embeddings ──┴─> Z ──> cross stack ───────────────> x_L ─┐
                              ├──> Z + noise ──> MLP ───────────> h_L ─┼─> head ─> y
                              └──> field tokens ──> attention ──> a ───┘

Every layer follows the forward/backward contract of :mod:`madcn.numcore`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .container import read_container, write_container
from .errors import ArgumentError, EncodingError, FormatError, MadcnError, ShapeError
from .features import FeatureSchema, StandardizerStats
from .numcore import DTYPE, glorot_uniform, softmax_backward, softmax_rows

MAGIC = b"MADCN"
VARIANTS = ("madcn", "dnn_only", "dcn_no_attention")


def _batch(x, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ShapeError(f"{name} must be a vector or a batch of vectors, got shape {x.shape}")
    return x, False


# --------------------------------------------------------------------------- layers


class EmbeddingTable:
    def __init__(self, field_name: str, table: np.ndarray):
        self.field_name = field_name
        self.params = {"table": np.asarray(table, dtype=DTYPE)}

    @property
    def table(self) -> np.ndarray:
        return self.params["table"]

    @property
    def cardinality(self) -> int:
        return self.table.shape[0]

    def forward(self, codes):
        codes = np.asarray(codes)
        if not np.issubdtype(codes.dtype, np.integer):
            raise EncodingError(f"{self.field_name}: codes must be integers")
        if codes.size and (codes.min() < 0 or codes.max() >= self.cardinality):
            bad = codes[(codes < 0) | (codes >= self.cardinality)][0]
            raise EncodingError(f"{self.field_name}: code {bad} outside [0, {self.cardinality})")
        return self.table[codes], codes

    def backward(self, codes, grad):
        g = np.zeros_like(self.table)
        np.add.at(g, codes, grad)
        return [None], {"table": g}


def embed_lookup(table: EmbeddingTable, code: int) -> np.ndarray:
    out, _ = table.forward(np.asarray([code]))
    return out[0]


class CrossLayer:
    """x_{l+1} = (w . x_l + b) * x_0 + x_l with a scalar gate per sample."""

    def __init__(self, w: np.ndarray, b: float = 0.0):
        self.params = {"w": np.asarray(w, dtype=DTYPE).ravel(), "b": np.array([b], dtype=DTYPE)}

    @property
    def w(self) -> np.ndarray:
        return self.params["w"]

    @property
    def b(self) -> float:
        return float(self.params["b"][0])

    def forward(self, x0, xl):
        x0 = np.asarray(x0, dtype=DTYPE)
        xl = np.asarray(xl, dtype=DTYPE)
        D = self.w.shape[0]
        if x0.shape != xl.shape or x0.shape[-1] != D:
            raise ShapeError(f"cross layer expects two inputs of width {D}, got {x0.shape} and {xl.shape}")
        s = xl @ self.w + self.params["b"][0]
        return s[..., None] * x0 + xl, (x0, xl, s)

    def backward(self, cache, grad):
        x0, xl, s = cache
        ds = np.sum(grad * x0, axis=-1)
        dx0 = s[..., None] * grad
        dxl = grad + ds[..., None] * self.w
        dw = np.tensordot(ds, xl, axes=(range(ds.ndim), range(ds.ndim)))
        return [dx0, dxl], {"w": dw, "b": np.array([ds.sum()])}


def cross_forward(x0, xl, p: CrossLayer) -> np.ndarray:
    return p.forward(x0, xl)[0]


class DenseLayer:
    def __init__(self, weight: np.ndarray, bias: np.ndarray | None = None, activation: str = "relu"):
        if activation not in ("relu", "identity"):
            raise ArgumentError(f"unknown activation {activation!r}")
        weight = np.asarray(weight, dtype=DTYPE)
        if bias is None:
            bias = np.zeros(weight.shape[0])
        self.activation = activation
        self.params = {"weight": weight, "bias": np.asarray(bias, dtype=DTYPE).ravel()}

    @property
    def weight(self) -> np.ndarray:
        return self.params["weight"]

    @property
    def bias(self) -> np.ndarray:
        return self.params["bias"]

    def forward(self, h):
        h = np.asarray(h, dtype=DTYPE)
        if h.shape[-1] != self.weight.shape[1]:
            raise ShapeError(f"dense layer expects width {self.weight.shape[1]}, got {h.shape[-1]}")
        pre = h @ self.weight.T + self.bias
        out = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return out, (h, pre)

    def backward(self, cache, grad):
        h, pre = cache
        if self.activation == "relu":
            grad = grad * (pre > 0)
        h2 = h.reshape(-1, h.shape[-1])
        g2 = grad.reshape(-1, grad.shape[-1])
        return [grad @ self.weight], {"weight": g2.T @ h2, "bias": g2.sum(axis=0)}


def deep_forward(h, p: DenseLayer) -> np.ndarray:
    return p.forward(h)[0]


@dataclass(frozen=True)
class TokenLayout:
    """Splits Z into one token per field: m dense scalars then n blocks of width d."""

    n_dense: int
    n_sparse: int
    embed_dim: int

    @property
    def width(self) -> int:
        return self.n_dense + self.n_sparse * self.embed_dim

    @property
    def n_tokens(self) -> int:
        return self.n_dense + self.n_sparse


class TokenProjection:
    def __init__(self, layout: TokenLayout, dense_proj: np.ndarray, sparse_proj: np.ndarray):
        self.layout = layout
        dense_proj = np.asarray(dense_proj, dtype=DTYPE)
        sparse_proj = np.asarray(sparse_proj, dtype=DTYPE)
        d_model = dense_proj.shape[-1]
        if dense_proj.shape != (layout.n_dense, d_model) or \
                sparse_proj.shape != (layout.n_sparse, layout.embed_dim, d_model):
            raise ShapeError(f"token projections {dense_proj.shape} / {sparse_proj.shape} do not fit {layout}")
        self.params = {"dense_proj": dense_proj, "sparse_proj": sparse_proj}

    @property
    def d_model(self) -> int:
        return self.params["dense_proj"].shape[1]

    def forward(self, z):
        z = np.asarray(z, dtype=DTYPE)
        L = self.layout
        if z.ndim != 2 or z.shape[1] != L.width:
            raise ShapeError(f"token layout expects Z of width {L.width}, got shape {z.shape}")
        B = z.shape[0]
        dense = z[:, :L.n_dense]
        blocks = z[:, L.n_dense:].reshape(B, L.n_sparse, L.embed_dim)
        tok_dense = dense[:, :, None] * self.params["dense_proj"][None, :, :]
        tok_sparse = (blocks.transpose(1, 0, 2) @ self.params["sparse_proj"]).transpose(1, 0, 2)
        return np.concatenate([tok_dense, tok_sparse], axis=1), (dense, blocks)

    def backward(self, cache, grad):
        dense, blocks = cache
        L = self.layout
        B = dense.shape[0]
        g_dense_tok = grad[:, :L.n_dense, :]
        g_sparse_tok = grad[:, L.n_dense:, :]
        g_dense = np.sum(g_dense_tok * self.params["dense_proj"], axis=-1)
        g_blocks = (g_sparse_tok.transpose(1, 0, 2) @ self.params["sparse_proj"].swapaxes(-1, -2)).transpose(1, 0, 2)
        gz = np.concatenate([g_dense, g_blocks.reshape(B, L.n_sparse * L.embed_dim)], axis=1)
        return [gz], {
            "dense_proj": np.sum(g_dense_tok * dense[:, :, None], axis=0),
            "sparse_proj": blocks.transpose(1, 2, 0) @ g_sparse_tok.transpose(1, 0, 2),
        }


class MultiHeadAttention:
    """Scaled dot-product self-attention over tokens, mean-pooled to one vector.

    Shapes: ``w_q, w_k, w_v`` are (heads, d_model, d_k); ``w_o`` is
    (heads * d_k, d_model).
    """

    def __init__(self, w_q, w_k, w_v, w_o):
        self.params = {k: np.asarray(v, dtype=DTYPE) for k, v in
                       (("w_q", w_q), ("w_k", w_k), ("w_v", w_v), ("w_o", w_o))}
        H, dm, dk = self.params["w_q"].shape
        for k in ("w_k", "w_v"):
            if self.params[k].shape != (H, dm, dk):
                raise ShapeError(f"{k} has shape {self.params[k].shape}, expected {(H, dm, dk)}")
        if self.params["w_o"].shape != (H * dk, dm):
            raise ShapeError(f"w_o has shape {self.params['w_o'].shape}, expected {(H * dk, dm)}")

    @property
    def heads(self) -> int:
        return self.params["w_q"].shape[0]

    @property
    def d_model(self) -> int:
        return self.params["w_q"].shape[1]

    @property
    def d_k(self) -> int:
        return self.params["w_q"].shape[2]

    def forward(self, tokens):
        x = np.asarray(tokens, dtype=DTYPE)
        if x.ndim != 3 or x.shape[2] != self.d_model:
            raise ShapeError(f"attention expects tokens of shape (B, T, {self.d_model}), got {x.shape}")
        B, T, _ = x.shape
        p = self.params
        scale = 1.0 / np.sqrt(self.d_k)
        xh = x[:, None, :, :]
        q = xh @ p["w_q"]
        k = xh @ p["w_k"]
        v = xh @ p["w_v"]
        weights = softmax_rows((q @ k.swapaxes(-1, -2)) * scale)
        heads = weights @ v
        concat = heads.transpose(0, 2, 1, 3).reshape(B, T, -1)
        out = concat @ p["w_o"]
        return out.mean(axis=1), (x, q, k, v, weights, concat)

    def backward(self, cache, grad):
        x, q, k, v, weights, concat = cache
        p = self.params
        B, T, _ = x.shape
        H, dk = self.heads, self.d_k
        scale = 1.0 / np.sqrt(dk)
        g_out = np.broadcast_to(grad[:, None, :] / T, (B, T, grad.shape[-1]))
        g_wo = np.tensordot(concat, g_out, axes=([0, 1], [0, 1]))
        g_heads = (g_out @ p["w_o"].T).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        g_weights = g_heads @ v.swapaxes(-1, -2)
        g_v = weights.swapaxes(-1, -2) @ g_heads
        g_scores = softmax_backward(weights, g_weights) * scale
        g_q = g_scores @ k
        g_k = g_scores.swapaxes(-1, -2) @ q
        g_x = np.zeros_like(x)
        grads = {}
        for name, g in (("w_q", g_q), ("w_k", g_k), ("w_v", g_v)):
            g_x += (g @ p[name].swapaxes(-1, -2)).sum(axis=1)
            # (m, H, k) -> (H, m, k)
            grads[name] = np.tensordot(x, g.transpose(0, 2, 1, 3), axes=([0, 1], [0, 1])).transpose(1, 0, 2)
        grads["w_o"] = g_wo
        return [g_x], grads

    def attention_weights(self, tokens) -> np.ndarray:
        return self.forward(tokens)[1][4]


class FieldAttention:
    """Token projection followed by multi-head attention; consumes Z directly."""

    def __init__(self, tokens: TokenProjection, attention: MultiHeadAttention):
        self.tokens = tokens
        self.attention = attention
        self.params = {f"tokens.{k}": v for k, v in tokens.params.items()}
        self.params.update({f"attn.{k}": v for k, v in attention.params.items()})

    def forward(self, z):
        tok, c1 = self.tokens.forward(z)
        a, c2 = self.attention.forward(tok)
        return a, (c1, c2)

    def backward(self, cache, grad):
        c1, c2 = cache
        (g_tok,), pg2 = self.attention.backward(c2, grad)
        (gz,), pg1 = self.tokens.backward(c1, g_tok)
        grads = {f"tokens.{k}": v for k, v in pg1.items()}
        grads.update({f"attn.{k}": v for k, v in pg2.items()})
        return [gz], grads


def attention_forward(z, p: MultiHeadAttention, tokens: TokenProjection) -> np.ndarray:
    zb, single = _batch(z, "z")
    a = FieldAttention(tokens, p).forward(zb)[0]
    return a[0] if single else a


def assemble_input(dense_std, embeddings: Sequence) -> np.ndarray:
    """Concatenate standardized dense values and embedding vectors, dense first."""
    dense_std = np.asarray(dense_std, dtype=DTYPE)
    parts = [dense_std] + [np.asarray(e, dtype=DTYPE) for e in embeddings]
    lead = dense_std.shape[:-1]
    for e in parts[1:]:
        if e.shape[:-1] != lead:
            raise ShapeError(f"embedding batch shape {e.shape[:-1]} does not match dense {lead}")
    return np.concatenate(parts, axis=-1)


# --------------------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseConfig:
    mu: float = 0.0
    sigma: float = 0.1
    train_only: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ArgumentError(f"noise sigma must be >= 0, got {self.sigma}")

    @property
    def active(self) -> bool:
        return self.sigma > 0 or self.mu != 0


def inject_noise(z, cfg: NoiseConfig, mode: str, rng: np.random.Generator | None) -> np.ndarray:
    """Additive Gaussian perturbation of the deep-branch input.

    Applied in ``train`` mode, or in every mode when ``cfg.train_only`` is
    false.  ``sigma == 0`` shifts by ``mu`` without drawing.
    """
    if mode not in ("train", "infer"):
        raise ArgumentError(f"mode must be 'train' or 'infer', got {mode!r}")
    z = np.asarray(z, dtype=DTYPE)
    if not (mode == "train" or not cfg.train_only) or not cfg.active:
        return z
    if cfg.sigma == 0:
        return z + cfg.mu
    if rng is None:
        raise ArgumentError("noise injection needs a random generator")
    return z + rng.normal(cfg.mu, cfg.sigma, size=z.shape)


# --------------------------------------------------------------------------- model


@dataclass(frozen=True)
class Hyperparams:
    embed_dim: int = 8
    cross_layers: int = 3
    deep_units: tuple[int, ...] = (128, 64)
    heads: int = 4
    d_model: int = 32
    d_k: int = 8
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    variant: str = "madcn"

    def __post_init__(self):
        object.__setattr__(self, "deep_units", tuple(int(u) for u in self.deep_units))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseConfig(**self.noise))
        if self.variant not in VARIANTS:
            raise ArgumentError(f"unknown model variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("embed_dim", "heads", "d_model", "d_k"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be positive")
        if self.cross_layers < 0 or any(u < 1 for u in self.deep_units):
            raise ArgumentError("layer counts must be non-negative and widths positive")

    @property
    def use_cross(self) -> bool:
        return self.variant in ("madcn", "dcn_no_attention")

    @property
    def use_attention(self) -> bool:
        return self.variant == "madcn"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deep_units"] = list(self.deep_units)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "noise" in d:
            d["noise"] = NoiseConfig(**d["noise"])
        return cls(**d)


class MadcnModel:
    """All learned parameters plus the fixed preprocessing needed to run them.

    ``params`` is the flat, ordered name -> array view used by the optimizer
    and the serializer; the layer objects share those arrays.
    """

    def __init__(self, schema: FeatureSchema, hyper: Hyperparams = Hyperparams(), seed: int = 0,
                 standardizer: StandardizerStats | None = None,
                 target_scaler: StandardizerStats | None = None,
                 category_maps: dict[str, list[str]] | None = None,
                 metadata: dict | None = None):
        self.schema = schema
        self.hyper = hyper
        self.seed = int(seed)
        self.standardizer = standardizer or StandardizerStats.identity(schema.dense_names)
        self.target_scaler = target_scaler or StandardizerStats.identity(schema.target_fields)
        self.category_maps = dict(category_maps or {})
        self.metadata = dict(metadata or {})
        if tuple(self.standardizer.names) != schema.dense_names:
            raise ShapeError("standardizer fields do not match the schema's dense fields")
        if tuple(self.target_scaler.names) != schema.target_fields:
            raise ShapeError("target scaler fields do not match the schema's targets")
        self._build(np.random.default_rng(self.seed))

    # construction -------------------------------------------------------

    def _build(self, rng: np.random.Generator) -> None:
        h, s = self.hyper, self.schema
        d = h.embed_dim
        self.layout = TokenLayout(s.m, s.n, d)
        D = self.layout.width
        self.embeddings = [EmbeddingTable(name, glorot_uniform(rng, (card, d), card, d))
                           for name, card in s.sparse_fields]
        self.cross = [CrossLayer(glorot_uniform(rng, (D,), D, 1)) for _ in range(h.cross_layers)] \
            if h.use_cross else []
        self.deep = []
        width = D
        for units in h.deep_units:
            self.deep.append(DenseLayer(glorot_uniform(rng, (units, width), width, units), None, "relu"))
            width = units
        head_in = width + (D if h.use_cross else 0)
        self.attention = None
        if h.use_attention:
            tokens = TokenProjection(
                self.layout,
                glorot_uniform(rng, (s.m, h.d_model), 1, h.d_model),
                glorot_uniform(rng, (s.n, d, h.d_model), d, h.d_model),
            )
            attn = MultiHeadAttention(
                *(glorot_uniform(rng, (h.heads, h.d_model, h.d_k), h.d_model, h.d_k) for _ in range(3)),
                glorot_uniform(rng, (h.heads * h.d_k, h.d_model), h.heads * h.d_k, h.d_model),
            )
            self.attention = FieldAttention(tokens, attn)
            head_in += h.d_model
        self.head = DenseLayer(glorot_uniform(rng, (s.t, head_in), head_in, s.t), None, "identity")
        self._collect_params()

    def _collect_params(self) -> None:
        params: dict[str, np.ndarray] = {}
        for emb in self.embeddings:
            params[f"embed.{emb.field_name}"] = emb.params["table"]
        for i, layer in enumerate(self.cross):
            params[f"cross.{i}.w"] = layer.params["w"]
            params[f"cross.{i}.b"] = layer.params["b"]
        for i, layer in enumerate(self.deep):
            params[f"deep.{i}.weight"] = layer.params["weight"]
            params[f"deep.{i}.bias"] = layer.params["bias"]
        if self.attention is not None:
            params.update(self.attention.params)
        params["head.weight"] = self.head.params["weight"]
        params["head.bias"] = self.head.params["bias"]
        self.params = params

    @property
    def input_width(self) -> int:
        return self.layout.width

    def copy(self) -> "MadcnModel":
        clone = MadcnModel(self.schema, self.hyper, self.seed, self.standardizer, self.target_scaler,
                           self.category_maps, self.metadata)
        clone.load_state(self.state())
        return clone

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise FormatError(f"parameter sets differ: {sorted(missing)}")
        for k, arr in self.params.items():
            if arr.shape != np.shape(state[k]):
                raise FormatError(f"parameter {k} has shape {np.shape(state[k])}, expected {arr.shape}")
            arr[...] = state[k]

    # forward / backward -------------------------------------------------

    def _check_inputs(self, dense_raw, codes):
        dense, single = _batch(dense_raw, "dense")
        codes = np.asarray(codes)
        if codes.ndim == 1:
            codes = codes[None, :]
        if self.schema.m == 0 and dense.size == 0:
            dense = np.zeros((codes.shape[0], 0))
        if self.schema.n == 0 and codes.size == 0:
            codes = np.zeros((dense.shape[0], 0), dtype=np.int64)
        if dense.shape[1] != self.schema.m:
            raise ShapeError(f"input: expected {self.schema.m} dense values, got {dense.shape[1]}")
        if codes.shape != (dense.shape[0], self.schema.n):
            raise ShapeError(f"input: expected codes of shape {(dense.shape[0], self.schema.n)}, got {codes.shape}")
        if codes.dtype.kind == "f":
            if not np.all(codes == np.round(codes)):
                raise EncodingError("input: sparse codes must be whole numbers")
            codes = codes.astype(np.int64)
        return dense, codes, single

    def forward(self, dense_raw, codes, mode: str = "infer", rng: np.random.Generator | None = None):
        dense, codes, _ = self._check_inputs(dense_raw, codes)
        x_std = self.standardizer.transform(dense)
        emb_out, emb_cache = [], []
        for j, emb in enumerate(self.embeddings):
            try:
                e, c = emb.forward(codes[:, j])
            except MadcnError as exc:
                raise type(exc)(f"embedding: {exc}") from None
            emb_out.append(e)
            emb_cache.append(c)
        z = assemble_input(x_std, emb_out)

        parts = []
        cross_cache = []
        x = z
        for layer in self.cross:
            x, c = layer.forward(z, x)
            cross_cache.append(c)
        if self.hyper.use_cross:
            parts.append(x)

        h = inject_noise(z, self.hyper.noise, mode, rng)
        deep_cache = []
        for layer in self.deep:
            h, c = layer.forward(h)
            deep_cache.append(c)
        parts.append(h)

        attn_cache = None
        if self.attention is not None:
            a, attn_cache = self.attention.forward(z)
            parts.append(a)

        z_final = np.concatenate(parts, axis=1)
        out, head_cache = self.head.forward(z_final)
        y = self.target_scaler.inverse(out)
        cache = (emb_cache, cross_cache, deep_cache, attn_cache, head_cache, [p.shape[1] for p in parts])
        return y, cache

    def predict(self, dense_raw, codes) -> np.ndarray:
        y, _ = self.forward(dense_raw, codes, "infer")
        return y

    def backward(self, cache, grad):
        emb_cache, cross_cache, deep_cache, attn_cache, head_cache, widths = cache
        grads: dict[str, np.ndarray] = {}
        g = np.asarray(grad, dtype=DTYPE) * self.target_scaler.safe_sigma
        (g_final,), pg = self.head.backward(head_cache, g)
        grads["head.weight"], grads["head.bias"] = pg["weight"], pg["bias"]
        splits = np.split(g_final, np.cumsum(widths)[:-1], axis=1)
        k = 0
        gz = np.zeros((g.shape[0], self.layout.width))

        if self.hyper.use_cross:
            gx = splits[k]
            k += 1
            for i in reversed(range(len(self.cross))):
                (g0, gx), pg = self.cross[i].backward(cross_cache[i], gx)
                gz += g0
                grads[f"cross.{i}.w"], grads[f"cross.{i}.b"] = pg["w"], pg["b"]
            gz += gx

        gh = splits[k]
        k += 1
        for i in reversed(range(len(self.deep))):
            (gh,), pg = self.deep[i].backward(deep_cache[i], gh)
            grads[f"deep.{i}.weight"], grads[f"deep.{i}.bias"] = pg["weight"], pg["bias"]
        gz += gh

        if self.attention is not None:
            (ga,), pg = self.attention.backward(attn_cache, splits[k])
            gz += ga
            grads.update(pg)

        m, d = self.schema.m, self.hyper.embed_dim
        g_dense = gz[:, :m] * self.standardizer.scale
        for j, emb in enumerate(self.embeddings):
            _, pg = emb.backward(emb_cache[j], gz[:, m + j * d: m + (j + 1) * d])
            grads[f"embed.{emb.field_name}"] = pg["table"]
        return [g_dense, None], {name: grads[name] for name in self.params}

    # persistence --------------------------------------------------------

    def header(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "hyperparams": self.hyper.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "target_scaler": self.target_scaler.to_dict(),
            "seed": self.seed,
            "category_maps": self.category_maps,
            "metadata": self.metadata,
        }


def model_forward(model: MadcnModel, dense_raw, codes, mode: str = "infer",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    single = np.ndim(codes) == 1 and (np.ndim(dense_raw) == 1)
    y, _ = model.forward(dense_raw, codes, mode, rng)
    return y[0] if single else y


def build_model(schema: FeatureSchema, hyper: Hyperparams | None = None, seed: int = 0, **kwargs) -> MadcnModel:
    return MadcnModel(schema, hyper or Hyperparams(), seed, **kwargs)


def save_model(model: MadcnModel, path) -> None:
    write_container(path, MAGIC, model.header(), model.params)


def load_model(path) -> MadcnModel:
    header, arrays = read_container(path, MAGIC)
    try:
        model = MadcnModel(
            FeatureSchema.from_dict(header["schema"]),
            Hyperparams.from_dict(header["hyperparams"]),
            header["seed"],
            StandardizerStats.from_dict(header["standardizer"]),
            StandardizerStats.from_dict(header["target_scaler"]),
            header.get("category_maps"),
            header.get("metadata"),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: incomplete header ({exc})") from None
    model.load_state(arrays)
    return model


def zero_model(model: MadcnModel) -> MadcnModel:
    out = model.copy()
    for arr in out.params.values():
        arr[...] = 0.0
    return out


def with_variant(hyper: Hyperparams, variant: str) -> Hyperparams:
    noise = hyper.noise if variant == "madcn" else NoiseConfig(0.0, 0.0, True)
    return replace(hyper, variant=variant, noise=noise)


# --------------------------------------------------------------------------- gradient suite


def gradient_suite(seed: int = 0, batch: int = 4) -> list[tuple[str, object, list[np.ndarray]]]:
    """Every differentiable transform, at small sizes, with random inputs.

    Returns ``(name, transform, inputs)`` triples ready for ``grad_check``.
    """
    rng = np.random.default_rng(seed)
    schema = FeatureSchema(
        dense_fields=[("a", ""), ("b", ""), ("c", ""), ("flag", "{0,1}")],
        sparse_fields=[("city", 5), ("year", 3)],
        target_fields=["y1", "y2"],
    )
    stats = StandardizerStats(schema.dense_names, rng.normal(size=4), rng.uniform(0.5, 2.0, size=4),
                              np.array([False, False, False, True]))
    target = StandardizerStats(schema.target_fields, rng.normal(size=2), rng.uniform(0.5, 2.0, size=2),
                               np.zeros(2, dtype=bool))
    hyper = Hyperparams(embed_dim=2, cross_layers=2, deep_units=(6, 5), heads=2, d_model=4, d_k=3)
    model = MadcnModel(schema, hyper, seed, stats, target)
    for layer in model.cross:
        layer.params["b"][...] = rng.normal(scale=0.5)
    for layer in model.deep + [model.head]:
        layer.params["bias"][...] = rng.normal(scale=0.1, size=layer.bias.shape)

    dense = rng.normal(size=(batch, schema.m)) * stats.sigma + stats.mu
    codes = np.stack([rng.integers(0, c, size=batch) for c in schema.cardinalities], axis=1)
    D = model.input_width
    z = rng.normal(size=(batch, D))
    tokens = rng.normal(size=(batch, model.layout.n_tokens, hyper.d_model))
    z_final = rng.normal(size=(batch, model.head.weight.shape[1]))

    suite = [
        ("embedding", model.embeddings[0], [codes[:, 0]]),
        ("cross_layer", model.cross[0], [z, rng.normal(size=(batch, D))]),
        ("dense_relu", model.deep[0], [z]),
        ("token_projection", model.attention.tokens, [z]),
        ("multi_head_attention", model.attention.attention, [tokens]),
        ("attention_branch", model.attention, [z]),
        ("output_head", model.head, [z_final]),
        ("madcn_model", model, [dense, codes]),
    ]
    for variant in ("dnn_only", "dcn_no_attention"):
        suite.append((f"{variant}_model", MadcnModel(schema, with_variant(hyper, variant), seed + 1, stats, target),
                      [dense, codes]))
    return suite
