"""The seven benchmark architectures, parameter counting and checkpoints."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kan import KANLinear, KanConfig, kan_init
from .nn import Conv2d, Flatten, Layer, Linear, MaxPool2, ReLU
from .tensor import ShapeError, Tensor, as_tensor

MODEL_NAMES = (
    "TwoLayerConvNet",
    "TwoLayerConvNetPlus",
    "SingleLayerLinearNet",
    "FourLayerConvNet",
    "TwoLayerConvKAN",
    "FourLayerConvKAN",
    "ThreeLayerConvTwoLayerKAN",
)

# name -> (conv channel sequence, head type)
ARCHITECTURES = {
    "TwoLayerConvNet": ((5, 5), "linear"),
    "TwoLayerConvNetPlus": ((5, 25), "mlp_plus"),
    "SingleLayerLinearNet": ((), "linear"),
    "FourLayerConvNet": ((8, 16, 32, 64), "mlp"),
    "TwoLayerConvKAN": ((5, 5), "kan"),
    "FourLayerConvKAN": ((8, 16, 32, 64), "kan"),
    "ThreeLayerConvTwoLayerKAN": ((8, 16, 32), "kan2"),
}


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple[int, int, int] = (1, 64, 64)
    n_classes: int = 6
    kan: KanConfig = field(default_factory=KanConfig)
    plus_hidden: int = 128
    fc_hidden: int = 256
    kan_hidden: int = 64

    def __post_init__(self):
        if self.name not in ARCHITECTURES:
            raise ValueError(f"unknown model {self.name!r}; choose from {', '.join(MODEL_NAMES)}")
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValueError(f"input_shape must be (channels, H, W) with positive sizes, got {self.input_shape}")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be positive, got {self.n_classes}")
        if isinstance(self.kan, dict):
            kan = dict(self.kan)
            kan["grid_range"] = tuple(kan.get("grid_range", (-1.0, 1.0)))
            self.kan = KanConfig(**kan)

    @property
    def n_pools(self) -> int:
        return len(ARCHITECTURES[self.name][0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["kan"]["grid_range"] = list(self.kan.grid_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class Model:
    def __init__(self, spec: ModelSpec, seed: int, layers: list[Layer]):
        self.spec = spec
        self.seed = seed
        self.layers = layers

    @property
    def kinds(self) -> list[str]:
        return [layer.kind for layer in self.layers]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{i}.{name}", t) for i, layer in enumerate(self.layers) for name, t in layer.parameters()]

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.named_parameters() if t.requires_grad]

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{name}", a) for i, layer in enumerate(self.layers) for name, a in layer.buffers()]

    def kan_layers(self) -> list[tuple[int, KANLinear]]:
        return [(i, layer) for i, layer in enumerate(self.layers) if isinstance(layer, KANLinear)]

    def __call__(self, images) -> Tensor:
        return forward_classify(self, images)

    def __repr__(self):
        return f"Model({self.spec.name}, layers={self.layers})"


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    convs, head = ARCHITECTURES[spec.name]
    c, H, W = spec.input_shape
    div = 2 ** len(convs)
    if H % div or W % div:
        raise ValueError(
            f"{spec.name}: input {H}x{W} must be divisible by {div} ({len(convs)} pooling stages)"
        )
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    ch = c
    for width in convs:
        layers += [Conv2d(ch, width, rng), ReLU(), MaxPool2()]
        ch = width
    layers.append(Flatten())
    flat = ch * (H // div) * (W // div)
    K = spec.n_classes
    grid = spec.kan.grid()
    base = spec.kan.base_term
    if head == "linear":
        layers.append(Linear(flat, K, rng))
    elif head == "mlp_plus":
        layers += [Linear(flat, spec.plus_hidden, rng), ReLU(), Linear(spec.plus_hidden, K, rng)]
    elif head == "mlp":
        layers += [Linear(flat, spec.fc_hidden, rng), ReLU(), Linear(spec.fc_hidden, K, rng)]
    elif head == "kan":
        layers.append(kan_init(flat, K, grid, rng, base))
    elif head == "kan2":
        layers += [kan_init(flat, spec.kan_hidden, grid, rng, base), kan_init(spec.kan_hidden, K, grid, rng, base)]
    return Model(spec, seed, layers)


def param_count(model: Model) -> int:
    """Total number of learnable scalars."""
    return sum(t.size for _, t in model.trainable())


def forward_classify(model: Model, images) -> Tensor:
    x = as_tensor(images)
    if x.ndim != 4 or tuple(x.shape[1:]) != model.spec.input_shape:
        raise ShapeError(
            "forward_classify", f"expected images [batch, {', '.join(map(str, model.spec.input_shape))}], got {x.shape}"
        )
    for layer in model.layers:
        x = layer(x)
    return x


# checkpoint layout: MAGIC | u64 LE header length | UTF-8 JSON header | float64 LE blobs in header order
MAGIC = b"KANCKPT1"


def checkpoint_bytes(model: Model, extra: dict | None = None) -> bytes:
    entries = [(n, "param", t.data) for n, t in model.named_parameters()]
    entries += [(n, "buffer", a) for n, a in model.named_buffers()]
    header = {
        "format": "kandefect-checkpoint",
        "version": 1,
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "tensors": [{"name": n, "kind": kind, "shape": list(a.shape)} for n, kind, a in entries],
    }
    if extra:
        header["extra"] = extra
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, _, a in entries)
    return MAGIC + struct.pack("<Q", len(head)) + head + blobs


def save_checkpoint(model: Model, path, extra: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, extra))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a kandefect checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(raw[start : start + n].decode("utf-8"))
    offset = start + n
    arrays = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = raw[offset : offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"{path}: truncated tensor {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def load_checkpoint(path) -> Model:
    header, arrays = read_checkpoint(path)
    model = build_model(ModelSpec.from_dict(header["spec"]), header["seed"])
    for name, t in model.named_parameters():
        t.data[...] = arrays[name]
    for name, a in model.named_buffers():
        a[...] = arrays[name]
    return model
