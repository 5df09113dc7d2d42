"""Network variants: residual-scaling policies, graph construction, forward.

Three variants share one dataflow idea: two stem convolutions produce a
basic feature map (BFM) that is re-concatenated deeper in the network,
residual blocks carry a per-stage scaling factor, and the multitask
variant runs a sigmoid-activated binary branch whose output is fed into
the main branch as guidance.

- block84_multitask: 24 shared blocks (stages 1-24), 36 binary-branch
  blocks (25-60), 24 main-branch blocks; 84 blocks total.
- block84_singletask: one chain of 84 relu blocks with the same BFM
  concatenation points, no binary branch.
- edge: 32 relu blocks, 32 channels for stages 1-28 and 16 for 29-32,
  no binary branch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor4

VARIANTS = ("block84_multitask", "block84_singletask", "edge")

# Hook applied to every layer output during forward; used for activation
# quantization and calibration. Identity when None.
ActHook = Callable[[str, Tensor4], Tensor4]


@dataclass(frozen=True)
class ScalingPolicy:
    kind: str = "proposed"  # "proposed" | "all_positive"
    alpha: int = 24

    def __post_init__(self):
        if self.kind not in ("proposed", "all_positive"):
            raise ValueError(f"unknown scaling policy kind {self.kind!r}")


def epsilon(policy: ScalingPolicy, stage: int) -> float:
    """Residual scaling factor for one stage.

    Decays by 0.01 per stage from 0.01*alpha. Under the proposed policy
    the value 0 is skipped: where the linear rule would give exactly 0
    (stage == alpha), 0.01 is subtracted, so the factor is positive up to
    stage alpha-1 and negative from stage alpha on.
    """
    if stage < 1:
        raise ValueError(f"stage must be >= 1, got {stage}")
    e = (policy.alpha - stage) / 100.0
    if policy.kind == "proposed" and e == 0.0:
        e -= 0.01
    return e


@dataclass(frozen=True)
class BlockSpec:
    name: str
    stage: int
    channels: int
    activation: str  # "relu" | "sigmoid"
    epsilon: float
    scope: str  # "shared" | "binary" | "main"


class Outputs(NamedTuple):
    binary: Optional[Tensor4]
    main: Tensor4


class ModelGraph:
    """Parameter registry plus the static structure of one variant."""

    def __init__(self, variant: str, policy: ScalingPolicy, base_channels: int,
                 dtype=np.float64):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if base_channels < 8:
            raise ValueError(f"base_channels must be >= 8, got {base_channels}")
        self.variant = variant
        self.policy = policy
        self.base_channels = base_channels
        self.dtype = dtype
        self.params: dict[str, Tensor4] = {}
        self.phase1_names: set[str] = set()
        self.blocks: list[BlockSpec] = []
        self._layer_in_out: dict[str, tuple[int, int]] = {}

    # -- construction ------------------------------------------------------

    def _add_conv(self, name: str, cin: int, cout: int, rng: np.random.Generator,
                  init: str, phase1: bool) -> None:
        fan_in = cin * 9
        if init == "kaiming":
            std = float(np.sqrt(2.0 / fan_in))
        elif init == "xavier":
            std = float(np.sqrt(2.0 / (fan_in + cout * 9)))
        else:
            raise ValueError(init)
        w = rng.normal(0.0, std, size=(cout, cin, 3, 3))
        self.params[f"{name}.w"] = Tensor4(w, requires_grad=True, dtype=self.dtype)
        self.params[f"{name}.b"] = Tensor4(np.zeros((1, cout, 1, 1)),
                                           requires_grad=True, dtype=self.dtype)
        self._layer_in_out[name] = (cin, cout)
        if phase1:
            self.phase1_names.update({f"{name}.w", f"{name}.b"})

    def _add_block(self, spec: BlockSpec, rng: np.random.Generator, phase1: bool) -> None:
        init = "xavier" if spec.activation == "sigmoid" else "kaiming"
        self._add_conv(f"{spec.name}.conv1", spec.channels, spec.channels, rng, init, phase1)
        self._add_conv(f"{spec.name}.conv2", spec.channels, spec.channels, rng, init, phase1)
        self.blocks.append(spec)

    # -- introspection ------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def layer_breakdown(self) -> list[tuple[str, tuple, int]]:
        return [(name, p.shape, p.data.size) for name, p in self.params.items()]

    def trainable_names(self, phase: int) -> set[str]:
        if phase == 1:
            return set(self.phase1_names)
        return set(self.params)


def build(variant: str, policy: ScalingPolicy, base_channels: int = 64,
          seed: int = 0, dtype=np.float64) -> ModelGraph:
    g = ModelGraph(variant, policy, base_channels, dtype)
    rng = np.random.default_rng(seed)
    c = base_channels

    if variant == "block84_multitask":
        g._add_conv("stem1", 1, c, rng, "kaiming", phase1=True)
        g._add_conv("stem2", c, c, rng, "kaiming", phase1=True)
        for s in range(1, 25):
            g._add_block(BlockSpec(f"shared.s{s:02d}", s, c, "relu",
                                   epsilon(policy, s), "shared"), rng, phase1=True)
        for s in range(25, 61):
            g._add_block(BlockSpec(f"binary.s{s:02d}", s, c, "sigmoid",
                                   epsilon(policy, s), "binary"), rng, phase1=True)
        g._add_conv("binary_bfm_adapter", 2 * c, c, rng, "kaiming", phase1=True)
        g._add_conv("binary_head", c, 1, rng, "xavier", phase1=True)
        g._add_conv("main_in_adapter", c + 1, c, rng, "kaiming", phase1=False)
        # with alpha=85 every stage stays positive only if the main branch
        # is numbered after the binary branch (61-84); other policies use 25-48
        start = 61 if (policy.kind == "all_positive" and policy.alpha == 85) else 25
        for s in range(start, start + 24):
            g._add_block(BlockSpec(f"main.s{s:02d}", s, c, "relu",
                                   epsilon(policy, s), "main"), rng, phase1=False)
        g._add_conv("main_bfm_adapter", 2 * c, c, rng, "kaiming", phase1=False)
        g._add_conv("main_head", c, 1, rng, "xavier", phase1=False)

    elif variant == "block84_singletask":
        g._add_conv("stem1", 1, c, rng, "kaiming", phase1=False)
        g._add_conv("stem2", c, c, rng, "kaiming", phase1=False)
        for s in range(1, 61):
            g._add_block(BlockSpec(f"main.s{s:02d}", s, c, "relu",
                                   epsilon(policy, s), "main"), rng, phase1=False)
        g._add_conv("mid_bfm_adapter", 2 * c, c, rng, "kaiming", phase1=False)
        for s in range(61, 85):
            g._add_block(BlockSpec(f"main.s{s:02d}", s, c, "relu",
                                   epsilon(policy, s), "main"), rng, phase1=False)
        g._add_conv("main_bfm_adapter", 2 * c, c, rng, "kaiming", phase1=False)
        g._add_conv("main_head", c, 1, rng, "xavier", phase1=False)

    else:  # edge
        c2 = c // 2
        g._add_conv("stem1", 1, c, rng, "kaiming", phase1=False)
        g._add_conv("stem2", c, c, rng, "kaiming", phase1=False)
        for s in range(1, 29):
            g._add_block(BlockSpec(f"main.s{s:02d}", s, c, "relu",
                                   epsilon(policy, s), "main"), rng, phase1=False)
        g._add_conv("transition", c, c2, rng, "kaiming", phase1=False)
        for s in range(29, 33):
            g._add_block(BlockSpec(f"main.s{s:02d}", s, c2, "relu",
                                   epsilon(policy, s), "main"), rng, phase1=False)
        g._add_conv("main_bfm_adapter", c + c2, c2, rng, "kaiming", phase1=False)
        g._add_conv("main_head", c2, 1, rng, "xavier", phase1=False)

    return g


# ---------------------------------------------------------------------------
# forward

def _act(kind: Optional[str], x: Tensor4) -> Tensor4:
    if kind == "relu":
        return T.relu(x)
    if kind == "sigmoid":
        return T.sigmoid(x)
    return x


def _unit(g: ModelGraph, name: str, x: Tensor4, act: Optional[str],
          hook: Optional[ActHook]) -> Tensor4:
    out = T.conv2d(x, g.params[f"{name}.w"], g.params[f"{name}.b"])
    out = _act(act, out)
    return hook(name, out) if hook else out


def _res_block(g: ModelGraph, spec: BlockSpec, x: Tensor4,
               hook: Optional[ActHook]) -> Tensor4:
    h = T.conv2d(x, g.params[f"{spec.name}.conv1.w"], g.params[f"{spec.name}.conv1.b"])
    h = _act(spec.activation, h)
    if hook:
        h = hook(f"{spec.name}.conv1", h)
    h = T.conv2d(h, g.params[f"{spec.name}.conv2.w"], g.params[f"{spec.name}.conv2.b"])
    if hook:
        h = hook(f"{spec.name}.conv2", h)
    out = T.scaled_residual_add(x, h, spec.epsilon)
    return hook(f"{spec.name}.out", out) if hook else out


def forward(g: ModelGraph, noisy: Tensor4, inference: bool = False,
            binary_only: bool = False, hook: Optional[ActHook] = None) -> Outputs:
    """Run a variant. Returns (binary, main); binary is None for
    single-output variants, main is None when binary_only."""
    if noisy.shape[1] != 1:
        raise T.ShapeMismatchError(f"expected 1 input channel, got {noisy.shape}")
    blocks = {b.name: b for b in g.blocks}

    h = _unit(g, "stem1", noisy, "relu", hook)
    bfm = _unit(g, "stem2", h, "relu", hook)

    if g.variant == "block84_multitask":
        s = bfm
        for b in g.blocks:
            if b.scope == "shared":
                s = _res_block(g, b, s, hook)
        bb = s
        for b in g.blocks:
            if b.scope == "binary":
                bb = _res_block(g, b, bb, hook)
        bb = T.concat_channels([bb, bfm])
        bb = _unit(g, "binary_bfm_adapter", bb, "relu", hook)
        binary_out = _unit(g, "binary_head", bb, "sigmoid", hook)
        if binary_only:
            return Outputs(binary_out, None)
        m = T.concat_channels([s, binary_out])
        m = _unit(g, "main_in_adapter", m, "relu", hook)
        for b in g.blocks:
            if b.scope == "main":
                m = _res_block(g, b, m, hook)
        m = T.concat_channels([m, bfm])
        m = _unit(g, "main_bfm_adapter", m, "relu", hook)
        main = _unit(g, "main_head", m, None, hook)
        if inference:
            main = T.clamp01(main)
        return Outputs(binary_out, main)

    if binary_only:
        raise ValueError(f"{g.variant} has no binary branch")

    if g.variant == "block84_singletask":
        m = bfm
        for s in range(1, 61):
            m = _res_block(g, blocks[f"main.s{s:02d}"], m, hook)
        m = T.concat_channels([m, bfm])
        m = _unit(g, "mid_bfm_adapter", m, "relu", hook)
        for s in range(61, 85):
            m = _res_block(g, blocks[f"main.s{s:02d}"], m, hook)
        m = T.concat_channels([m, bfm])
        m = _unit(g, "main_bfm_adapter", m, "relu", hook)
        main = _unit(g, "main_head", m, None, hook)
    else:  # edge
        m = bfm
        for s in range(1, 29):
            m = _res_block(g, blocks[f"main.s{s:02d}"], m, hook)
        m = _unit(g, "transition", m, "relu", hook)
        for s in range(29, 33):
            m = _res_block(g, blocks[f"main.s{s:02d}"], m, hook)
        m = T.concat_channels([m, bfm])
        m = _unit(g, "main_bfm_adapter", m, "relu", hook)
        main = _unit(g, "main_head", m, None, hook)

    if inference:
        main = T.clamp01(main)
    return Outputs(None, main)


# ---------------------------------------------------------------------------
# binary weight container
#
# layout: magic, u32 version, u32 header length, JSON header, then the raw
# little-endian array payloads in header order.

_MAGIC = b"RGNTWT01"
_VERSION = 1


def _dtype_tag(dt) -> str:
    return np.dtype(dt).newbyteorder("<").str


def serialize_arrays(header_extra: dict, arrays: dict[str, np.ndarray]) -> bytes:
    header = dict(header_extra)
    header["arrays"] = [
        {"name": k, "shape": list(v.shape), "dtype": _dtype_tag(v.dtype)}
        for k, v in arrays.items()
    ]
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    out = [_MAGIC, struct.pack("<II", _VERSION, len(hb)), hb]
    for v in arrays.values():
        out.append(np.ascontiguousarray(v, dtype=np.dtype(v.dtype).newbyteorder("<")).tobytes())
    return b"".join(out)


def deserialize_arrays(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if blob[:8] != _MAGIC:
        raise ValueError("not a model container (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    off = 16 + hlen
    for meta in header["arrays"]:
        dt = np.dtype(meta["dtype"])
        n = int(np.prod(meta["shape"])) if meta["shape"] else 1
        nb = n * dt.itemsize
        if off + nb > len(blob):
            raise ValueError("truncated model container")
        arrays[meta["name"]] = np.frombuffer(blob, dtype=dt, count=n,
                                             offset=off).reshape(meta["shape"]).copy()
        off += nb
    if off != len(blob):
        raise ValueError("trailing bytes in model container")
    return header, arrays


def save_weights(g: ModelGraph) -> bytes:
    header = {
        "kind": "weights",
        "variant": g.variant,
        "policy": {"kind": g.policy.kind, "alpha": g.policy.alpha},
        "base_channels": g.base_channels,
    }
    return serialize_arrays(header, {k: v.data for k, v in g.params.items()})


def load_weights(blob: bytes, expect_variant: Optional[str] = None) -> ModelGraph:
    header, arrays = deserialize_arrays(blob)
    if header.get("kind") != "weights":
        raise ValueError(f"container holds {header.get('kind')!r}, not weights")
    variant = header["variant"]
    if expect_variant is not None and variant != expect_variant:
        raise ValueError(f"variant mismatch: file has {variant}, expected {expect_variant}")
    policy = ScalingPolicy(header["policy"]["kind"], header["policy"]["alpha"])
    dtype = np.dtype(header["arrays"][0]["dtype"]) if header["arrays"] else np.float64
    g = build(variant, policy, header["base_channels"], seed=0, dtype=dtype)
    if set(arrays) != set(g.params):
        raise ValueError("parameter names do not match the declared variant")
    for name, arr in arrays.items():
        if tuple(arr.shape) != g.params[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        g.params[name] = Tensor4(arr, requires_grad=True, dtype=arr.dtype)
    return g


def write_weights(g: ModelGraph, path: str | Path) -> None:
    Path(path).write_bytes(save_weights(g))


def read_weights(path: str | Path, expect_variant: Optional[str] = None) -> ModelGraph:
    return load_weights(Path(path).read_bytes(), expect_variant)
