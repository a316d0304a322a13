"""Analytic parameter and multiply-accumulate counts, full vs. PC-LoRA compressed.

FLOP convention: 1 FLOP = 1 MAC; bias additions, norms and softmax are free.
A wrapped linear layer costs ``r * (d_in + d_out) + d_out`` parameters and
``tokens * r * (d_in + d_out)`` MACs once compressed. Attention score and
value products cost ``2 * tokens**2 * d`` per block and only count when the
architecture enables ``attention_macs``. The ViT presets disable it and the
BERT-family presets enable it; that split is what matches the published
GFLOPs columns for both families.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace

LINEAR_KINDS = ("linear", "head", "patch-embed")
KINDS = LINEAR_KINDS + ("embedding", "norm", "attention")
EMBEDDING_KINDS = ("embedding", "patch-embed")


@dataclass(frozen=True)
class LayerSpec:
    """One layer shape, repeated ``count`` times.

    ``d_in``/``d_out`` are the matrix dims for linear kinds, rows/width for
    embeddings, and the width (``d_in``) for norms and attention.
    """

    name: str
    kind: str
    d_in: int
    d_out: int = 0
    wrap: bool = False
    count: int = 1
    tokens: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.d_in < 1 or (self.kind in LINEAR_KINDS + ("embedding",) and self.d_out < 1):
            raise ValueError(f"layer {self.name}: dims must be positive")
        if self.count < 1:
            raise ValueError(f"layer {self.name}: count must be positive")
        if self.wrap and self.kind not in LINEAR_KINDS:
            raise ValueError(f"layer {self.name}: only linear layers can be wrapped")


@dataclass(frozen=True)
class ArchSpec:
    name: str
    layers: tuple[LayerSpec, ...] = ()
    tokens: int | None = None
    n_classes: int | None = None
    attention_macs: bool = True

    def with_tokens(self, tokens: int) -> "ArchSpec":
        """Override the sequence length; layers with their own token count keep it."""
        return replace(self, tokens=tokens)


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    count: int
    wrap: bool
    params_full: int
    params_compressed: int
    macs_full: int
    macs_compressed: int
    beyond_break_even: bool


@dataclass
class CompressionReport:
    arch: str
    rank: int
    params_full: int
    params_compressed: int
    params_full_excl_embeddings: int
    params_compressed_excl_embeddings: int
    macs_full: int
    macs_compressed: int
    layers: list[LayerCost] = field(default_factory=list)

    @staticmethod
    def _pct(compressed: int, full: int) -> float:
        return 100.0 * (1.0 - compressed / full) if full else 0.0

    @property
    def param_reduction_pct(self) -> float:
        return self._pct(self.params_compressed, self.params_full)

    @property
    def param_reduction_excl_embeddings_pct(self) -> float:
        return self._pct(self.params_compressed_excl_embeddings, self.params_full_excl_embeddings)

    @property
    def macs_reduction_pct(self) -> float:
        return self._pct(self.macs_compressed, self.macs_full)

    @property
    def flagged_layers(self) -> list[str]:
        return [l.name for l in self.layers if l.beyond_break_even]


def break_even_rank(d_in: int, d_out: int) -> float:
    return d_in * d_out / (d_in + d_out)


def _layer_params(l: LayerSpec, compressed: bool, r: int) -> int:
    if l.kind in LINEAR_KINDS:
        if compressed and l.wrap:
            return r * (l.d_in + l.d_out) + l.d_out
        return l.d_in * l.d_out + l.d_out
    if l.kind == "embedding":
        return l.d_in * l.d_out
    if l.kind == "norm":
        return 2 * l.d_in
    return 0


def _layer_macs(l: LayerSpec, arch: ArchSpec, compressed: bool, r: int) -> int:
    if l.kind in ("embedding", "norm"):
        return 0
    tokens = l.tokens if l.tokens is not None else arch.tokens
    if tokens is None:
        raise ValueError(f"layer {l.name}: no token count; set the architecture sequence length")
    if l.kind == "attention":
        return 2 * tokens * tokens * l.d_in if arch.attention_macs else 0
    if compressed and l.wrap:
        return tokens * r * (l.d_in + l.d_out)
    return tokens * l.d_in * l.d_out


def _check_mode(mode: str, r: int | None) -> bool:
    if mode not in ("full", "pclora"):
        raise ValueError(f"mode must be 'full' or 'pclora', got {mode!r}")
    if mode == "pclora" and (r is None or r < 1):
        raise ValueError("pclora mode needs a rank >= 1")
    return mode == "pclora"


def count_params(arch: ArchSpec, mode: str = "full", r: int | None = None) -> tuple[int, list[tuple[str, int]]]:
    """Total parameter count and a ``(layer name, params)`` breakdown (count multiplier applied)."""
    comp = _check_mode(mode, r)
    rows = [(l.name, l.count * _layer_params(l, comp, r or 0)) for l in arch.layers]
    return sum(n for _, n in rows), rows


def count_macs(arch: ArchSpec, mode: str = "full", r: int | None = None) -> int:
    comp = _check_mode(mode, r)
    return sum(l.count * _layer_macs(l, arch, comp, r or 0) for l in arch.layers)


def compression_report(arch: ArchSpec, r: int) -> CompressionReport:
    if r < 1:
        raise ValueError("rank must be >= 1")
    layers = []
    pf = pc = pfe = pce = mf = mc = 0
    for l in arch.layers:
        full_p, comp_p = l.count * _layer_params(l, False, r), l.count * _layer_params(l, True, r)
        full_m, comp_m = l.count * _layer_macs(l, arch, False, r), l.count * _layer_macs(l, arch, True, r)
        beyond = l.wrap and r >= break_even_rank(l.d_in, l.d_out)
        layers.append(LayerCost(l.name, l.kind, l.count, l.wrap, full_p, comp_p, full_m, comp_m, beyond))
        pf, pc, mf, mc = pf + full_p, pc + comp_p, mf + full_m, mc + comp_m
        if l.kind not in EMBEDDING_KINDS:
            pfe, pce = pfe + full_p, pce + comp_p
    return CompressionReport(arch.name, r, pf, pc, pfe, pce, mf, mc, layers)


def rank_sweep(arch: ArchSpec, ranks) -> list[CompressionReport]:
    ranks = list(ranks)
    if not ranks:
        raise ValueError("rank sweep needs at least one rank")
    return [compression_report(arch, r) for r in ranks]


SWEEP_COLUMNS = ("rank", "params_full", "params_compressed", "param_reduction_pct",
                 "param_reduction_excl_embeddings_pct", "macs_full", "macs_compressed", "macs_reduction_pct")


def sweep_rows(reports: list[CompressionReport]) -> list[list[str]]:
    return [[str(r.rank), str(r.params_full), str(r.params_compressed), f"{r.param_reduction_pct:.4f}",
             f"{r.param_reduction_excl_embeddings_pct:.4f}", str(r.macs_full), str(r.macs_compressed),
             f"{r.macs_reduction_pct:.4f}"] for r in reports]


# ---------------------------------------------------------------------------
# presets


def _transformer_blocks(d: int, hidden: int, depth: int, fused_qkv: bool) -> list[LayerSpec]:
    if fused_qkv:
        attn = [LayerSpec("attn.qkv", "linear", d, 3 * d, wrap=True, count=depth)]
    else:
        attn = [LayerSpec(f"attn.{p}", "linear", d, d, wrap=True, count=depth) for p in "qkv"]
    return attn + [
        LayerSpec("attn.proj", "linear", d, d, wrap=True, count=depth),
        LayerSpec("attn.scores", "attention", d, count=depth),
        LayerSpec("mlp.fc1", "linear", d, hidden, wrap=True, count=depth),
        LayerSpec("mlp.fc2", "linear", hidden, d, wrap=True, count=depth),
        LayerSpec("norm", "norm", d, count=2 * depth),
    ]


def vit_arch(name: str, d: int, depth: int, mlp_ratio: int = 4, n_classes: int = 10, image: int = 224,
             patch: int = 16, channels: int = 3) -> ArchSpec:
    """timm-style ViT. Patch embedding and head stay full-size."""
    n_patches = (image // patch) ** 2
    layers = [
        LayerSpec("patch_embed", "patch-embed", channels * patch * patch, d, tokens=n_patches),
        LayerSpec("cls_token", "embedding", 1, d),
        LayerSpec("pos_embed", "embedding", n_patches + 1, d),
        *_transformer_blocks(d, mlp_ratio * d, depth, fused_qkv=True),
        LayerSpec("final_norm", "norm", d),
        LayerSpec("head", "head", d, n_classes, tokens=1),
    ]
    return ArchSpec(name, tuple(layers), tokens=n_patches + 1, n_classes=n_classes, attention_macs=False)


def bert_arch(name: str, d: int, depth: int, vocab: int = 30522, max_pos: int = 512, type_vocab: int = 2,
              mlp_ratio: int = 4, n_classes: int = 2, seq_len: int = 512) -> ArchSpec:
    """HuggingFace-style BERT encoder with pooler and classifier, both wrapped."""
    layers = [
        LayerSpec("embed.word", "embedding", vocab, d),
        LayerSpec("embed.position", "embedding", max_pos, d),
        LayerSpec("embed.token_type", "embedding", type_vocab, d),
        LayerSpec("embed.norm", "norm", d),
        *_transformer_blocks(d, mlp_ratio * d, depth, fused_qkv=False),
        LayerSpec("pooler", "linear", d, d, wrap=True, tokens=1),
        LayerSpec("classifier", "head", d, n_classes, wrap=True, tokens=1),
    ]
    return ArchSpec(name, tuple(layers), tokens=seq_len, n_classes=n_classes, attention_macs=True)


PRESETS = {
    "vit_b": lambda: vit_arch("vit_b", 768, 12),
    "vit_s": lambda: vit_arch("vit_s", 384, 12),
    "vit_t": lambda: vit_arch("vit_t", 192, 12),
    "bert_base": lambda: bert_arch("bert_base", 768, 12),
    "bert_medium": lambda: bert_arch("bert_medium", 512, 8),
    "bert_small": lambda: bert_arch("bert_small", 512, 4),
    "roberta_base": lambda: bert_arch("roberta_base", 768, 12, vocab=50265, max_pos=514, type_vocab=1),
}


def preset_arch(name: str) -> ArchSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown architecture preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name]()


def arch_from_model(model) -> ArchSpec:
    """Describe a model-zoo network so the analytic counts can be checked against live tensors."""
    from .models import MLP, TinyTransformer

    if isinstance(model, MLP):
        w = model.spec.widths
        layers = [LayerSpec(f"fc{i}", "linear", w[i], w[i + 1], wrap=True) for i in range(len(w) - 1)]
        return ArchSpec("mlp", tuple(layers), tokens=1, n_classes=w[-1])
    if isinstance(model, TinyTransformer):
        s = model.spec
        layers = [
            LayerSpec("embed.tok", "embedding", s.vocab, s.d_model),
            LayerSpec("embed.pos", "embedding", s.seq_len, s.d_model),
            *_transformer_blocks(s.d_model, s.mlp_ratio * s.d_model, s.depth, fused_qkv=True),
            LayerSpec("final_norm", "norm", s.d_model),
            LayerSpec("head", "head", s.d_model, s.n_classes, wrap=True, tokens=1),
        ]
        return ArchSpec("tiny_transformer", tuple(layers), tokens=s.seq_len, n_classes=s.n_classes)
    raise TypeError(f"no architecture description for {type(model).__name__}")


# ---------------------------------------------------------------------------
# text format


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


_LAYER_KEYS = {"d_in", "d_out", "rows", "dim", "d", "wrap", "count", "tokens"}


def parse_arch(text: str, name: str = "custom") -> ArchSpec:
    """Parse the architecture text format.

    Header lines are ``key: value`` (``name``, ``tokens``, ``classes``,
    ``attention_macs``). Layer lines read ``layer <kind> <name> key=value ...``
    with keys ``d_in``, ``d_out`` (linear kinds), ``rows``, ``dim``
    (embedding), ``d`` (norm, attention), plus optional ``wrap``, ``count``,
    ``tokens``. ``#`` starts a comment.
    """
    header: dict[str, str] = {}
    layers: list[LayerSpec] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("layer "):
            parts = shlex.split(line)
            if len(parts) < 3:
                raise ValueError(f"line {lineno}: expected 'layer <kind> <name> key=value ...'")
            kind, lname = parts[1], parts[2]
            kv = {}
            for tok in parts[3:]:
                if "=" not in tok:
                    raise ValueError(f"line {lineno}: expected key=value, got {tok!r}")
                k, v = tok.split("=", 1)
                if k not in _LAYER_KEYS:
                    raise ValueError(f"line {lineno}: unknown layer key {k!r}")
                kv[k] = v
            try:
                if kind == "embedding":
                    d_in, d_out = int(kv["rows"]), int(kv["dim"])
                elif kind in ("norm", "attention"):
                    d_in, d_out = int(kv["d"]), 0
                else:
                    d_in, d_out = int(kv["d_in"]), int(kv["d_out"])
            except KeyError as exc:
                raise ValueError(f"line {lineno}: missing key {exc.args[0]!r} for {kind} layer") from None
            layers.append(LayerSpec(lname, kind, d_in, d_out,
                                    wrap=_parse_bool(kv.get("wrap", "false")),
                                    count=int(kv.get("count", 1)),
                                    tokens=int(kv["tokens"]) if "tokens" in kv else None))
        elif ":" in line:
            k, v = (p.strip() for p in line.split(":", 1))
            header[k] = v
        else:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}")
    unknown = set(header) - {"name", "tokens", "classes", "attention_macs"}
    if unknown:
        raise ValueError(f"unknown header keys: {', '.join(sorted(unknown))}")
    return ArchSpec(
        header.get("name", name),
        tuple(layers),
        tokens=int(header["tokens"]) if "tokens" in header else None,
        n_classes=int(header["classes"]) if "classes" in header else None,
        attention_macs=_parse_bool(header.get("attention_macs", "true")),
    )


def format_arch(arch: ArchSpec) -> str:
    lines = [f"name: {arch.name}"]
    if arch.tokens is not None:
        lines.append(f"tokens: {arch.tokens}")
    if arch.n_classes is not None:
        lines.append(f"classes: {arch.n_classes}")
    lines.append(f"attention_macs: {str(arch.attention_macs).lower()}")
    for l in arch.layers:
        if l.kind == "embedding":
            dims = f"rows={l.d_in} dim={l.d_out}"
        elif l.kind in ("norm", "attention"):
            dims = f"d={l.d_in}"
        else:
            dims = f"d_in={l.d_in} d_out={l.d_out}"
        extra = f" wrap={str(l.wrap).lower()} count={l.count}"
        if l.tokens is not None:
            extra += f" tokens={l.tokens}"
        lines.append(f"layer {l.kind} {l.name} {dims}{extra}")
    return "\n".join(lines) + "\n"


def load_arch(path_or_name: str) -> ArchSpec:
    if path_or_name in PRESETS:
        return preset_arch(path_or_name)
    with open(path_or_name) as fh:
        return parse_arch(fh.read(), name=path_or_name)
