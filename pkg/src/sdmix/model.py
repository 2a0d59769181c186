"""Two-block 1-D CNN (conv -> maxpool -> batchnorm -> relu, twice) with a linear classifier."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor

POOL_WIDTH = 2
POOL_STRIDE = 2
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

PARAM_ORDER = (
    "conv1.weight", "conv1.bias", "bn1.scale", "bn1.shift",
    "conv2.weight", "conv2.bias", "bn2.scale", "bn2.shift",
    "fc.weight", "fc.bias",
)
BUFFER_ORDER = ("bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var")

CHECKPOINT_MAGIC = b"SDMXCKPT"
CHECKPOINT_VERSION = 1


class ArchError(ValueError):
    pass


def conv_extent(length: int, kernel: int, stride: int = 1) -> int:
    return (length - kernel) // stride + 1 if length >= kernel else 0


def pool_extent(length: int, width: int = POOL_WIDTH, stride: int = POOL_STRIDE) -> int:
    return (length - width) // stride + 1 if length >= width else 0


@dataclass(frozen=True)
class ArchSpec:
    input_shape: tuple[int, int, int]  # (channels, 1, window_len)
    kernel_width: int
    channels_per_block: tuple[int, int] = (16, 32)
    num_classes: int = 2

    def extents(self) -> list[tuple[str, int]]:
        """Temporal extent after every layer, in forward order."""
        _, _, length = self.input_shape
        out = []
        for block in (1, 2):
            length = conv_extent(length, self.kernel_width)
            out.append((f"conv{block}", length))
            length = pool_extent(length)
            out.append((f"pool{block}", length))
        return out

    @property
    def feature_dim(self) -> int:
        return self.channels_per_block[1] * self.extents()[-1][1]

    def validate(self) -> None:
        c, h, length = self.input_shape
        if h != 1:
            raise ArchError(f"input height must be 1, got {h}")
        if c < 1 or length < 1 or self.kernel_width < 1 or self.num_classes < 2:
            raise ArchError(f"invalid architecture {self}")
        if min(self.channels_per_block) < 1:
            raise ArchError(f"channels_per_block must be positive, got {self.channels_per_block}")
        for layer, extent in self.extents():
            if extent < 1:
                raise ArchError(
                    f"layer {layer} has zero output extent (window_len={length}, "
                    f"kernel_width={self.kernel_width})"
                )


class ActivityNet:
    """Parameters plus batchnorm running statistics for the activity network.

    ``params`` holds every trainable array by name; ``buffers`` holds the
    running statistics, which are updated by training-mode forwards.
    """

    def __init__(self, arch: ArchSpec, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]):
        self.arch = arch
        self.params = params
        self.buffers = buffers

    # -- construction -----------------------------------------------------

    @classmethod
    def init(cls, arch: ArchSpec, seed: int) -> ActivityNet:
        arch.validate()
        rng = np.random.default_rng(np.random.Philox(seed))
        cin = arch.input_shape[0]
        c1, c2 = arch.channels_per_block
        k = arch.kernel_width

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        params = {
            "conv1.weight": uniform((c1, cin, 1, k), cin * k),
            "conv1.bias": uniform((c1,), cin * k),
            "bn1.scale": np.ones(c1),
            "bn1.shift": np.zeros(c1),
            "conv2.weight": uniform((c2, c1, 1, k), c1 * k),
            "conv2.bias": uniform((c2,), c1 * k),
            "bn2.scale": np.ones(c2),
            "bn2.shift": np.zeros(c2),
            "fc.weight": uniform((arch.num_classes, arch.feature_dim), arch.feature_dim),
            "fc.bias": uniform((arch.num_classes,), arch.feature_dim),
        }
        buffers = {
            "bn1.running_mean": np.zeros(c1), "bn1.running_var": np.ones(c1),
            "bn2.running_mean": np.zeros(c2), "bn2.running_var": np.ones(c2),
        }
        return cls(arch, params, buffers)

    def copy(self) -> ActivityNet:
        return ActivityNet(
            self.arch,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    # -- forward ------------------------------------------------------------

    def bind(self, tape: Tape | None) -> dict[str, Tensor]:
        """Parameters as tensors; registered as leaves when ``tape`` is given."""
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.leaf(v) for k, v in self.params.items()}

    def _check_input(self, x) -> None:
        shape = x.shape if isinstance(x, Tensor) else np.shape(x)
        if len(shape) != 4 or tuple(shape[1:]) != tuple(self.arch.input_shape):
            raise ad.ShapeError(
                f"features: input shape {tuple(shape)} does not match (N, {self.arch.input_shape})"
            )

    def features(self, x, *, training: bool = False, bound: dict[str, Tensor] | None = None,
                 update_stats: bool = True) -> Tensor:
        """Flattened block-2 output, shape (N, feature_dim)."""
        self._check_input(x)
        p = bound if bound is not None else self.bind(None)
        h = x
        for block in (1, 2):
            h = ad.conv_h1(h, p[f"conv{block}.weight"], p[f"conv{block}.bias"])
            h = ad.maxpool_h1(h, POOL_WIDTH, POOL_STRIDE)
            if training and update_stats:
                self._update_running(block, h.value)
            h = ad.batchnorm(
                h, p[f"bn{block}.scale"], p[f"bn{block}.shift"], training=training,
                running_mean=self.buffers[f"bn{block}.running_mean"],
                running_var=self.buffers[f"bn{block}.running_var"], eps=BN_EPS,
            )
            h = ad.relu(h)
        return ad.reshape(h, (h.shape[0], -1))

    def classify(self, z, bound: dict[str, Tensor] | None = None) -> Tensor:
        p = bound if bound is not None else self.bind(None)
        return ad.linear(z, p["fc.weight"], p["fc.bias"])

    def logits(self, x, *, training: bool = False, bound: dict[str, Tensor] | None = None) -> Tensor:
        return self.classify(self.features(x, training=training, bound=bound), bound)

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        out = [self.logits(x[i : i + batch_size]).value.argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def _update_running(self, block: int, h: np.ndarray) -> None:
        axes = (0, 2, 3)
        n = h.shape[0] * h.shape[2] * h.shape[3]
        mean = h.mean(axis=axes)
        var = h.var(axis=axes) * (n / (n - 1) if n > 1 else 1.0)
        rm, rv = f"bn{block}.running_mean", f"bn{block}.running_var"
        self.buffers[rm] = (1 - BN_MOMENTUM) * self.buffers[rm] + BN_MOMENTUM * mean
        self.buffers[rv] = (1 - BN_MOMENTUM) * self.buffers[rv] + BN_MOMENTUM * var

    # -- input gradients ----------------------------------------------------

    def class_score_input_gradients(self, x: np.ndarray, classes) -> list[np.ndarray]:
        """``d logits[c] / d x`` for a single window, using running batchnorm statistics."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape == tuple(self.arch.input_shape):
            x = x[None]
        if x.shape[0] != 1:
            raise ad.ShapeError(f"class_score_input_gradients expects one window, got shape {x.shape}")
        grads = self.batch_input_gradients(x, classes)
        return [g[0] for g in grads]

    def batch_input_gradients(self, x: np.ndarray, classes) -> list[np.ndarray]:
        """Per-sample input gradients of each requested class score, one array per class.

        Inference-mode batchnorm makes samples independent, so the gradient of
        the batch sum of ``logits[:, c]`` is the stack of per-sample gradients.
        """
        C = self.arch.num_classes
        for c in classes:
            if not 0 <= c < C:
                raise IndexError(f"class index {c} out of range for {C} classes")
        out = []
        cache: dict[int, np.ndarray] = {}
        for c in classes:
            if c not in cache:
                tape = Tape()
                xt = tape.leaf(x)
                scores = self.logits(xt, training=False)
                onehot = np.zeros(C)
                onehot[c] = 1.0
                cache[c] = ad.input_gradient(ad.total(ad.scale(scores, onehot)), xt)
            out.append(cache[c].copy())
        return out

    # -- checkpoint ------------------------------------------------------------

    def to_bytes(self) -> bytes:
        a = self.arch
        header = CHECKPOINT_MAGIC + struct.pack(
            "<I7q", CHECKPOINT_VERSION, *a.input_shape, a.kernel_width, *a.channels_per_block, a.num_classes
        )
        arrays = [self.params[k] for k in PARAM_ORDER] + [self.buffers[k] for k in BUFFER_ORDER]
        flat = np.concatenate([np.ravel(v) for v in arrays]).astype("<f8")
        return header + struct.pack("<q", flat.size) + flat.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> ActivityNet:
        if blob[:8] != CHECKPOINT_MAGIC:
            raise ValueError("not an ActivityNet checkpoint")
        version, c, h, length, k, c1, c2, n_cls = struct.unpack_from("<I7q", blob, 8)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        arch = ArchSpec((c, h, length), k, (c1, c2), n_cls)
        offset = 8 + struct.calcsize("<I7q")
        (count,) = struct.unpack_from("<q", blob, offset)
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset + 8).astype(np.float64)
        template = cls.init(arch, 0)
        pos = 0
        params, buffers = {}, {}
        for name in PARAM_ORDER + BUFFER_ORDER:
            ref = template.params.get(name, template.buffers.get(name))
            chunk = flat[pos : pos + ref.size].reshape(ref.shape)
            (params if name in template.params else buffers)[name] = chunk.copy()
            pos += ref.size
        if pos != count:
            raise ValueError(f"checkpoint holds {count} values, architecture needs {pos}")
        return cls(arch, params, buffers)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> ActivityNet:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
