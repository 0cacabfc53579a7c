"""Forward-only 3D neural cellular automaton generators.

Architecture: three convolutions applied to the full interior grid,
spatial dims preserved end to end:

* layer 1: 3x3x3 kernel, stride 1, zero padding 1, ReLU;
* layer 2: 1x1x1 kernel, ReLU;
* layer 3: 1x1x1 kernel, sigmoid.

Hidden width 32. Input channels: one per placeable tile, plus four
fixed-structure channels for door tasks (entrance foot/head and exit
foot/head, marking the interior cells adjacent to the openings). Output
channels: one per placeable tile; the new tile at each voxel is the
argmax over channels (ties resolve to the lowest channel index).

Parameter vector layout (version 1): layer-1 weights with C-order shape
(hidden, in, 3, 3, 3), then layer-1 bias, layer-2 weights (hidden,
hidden), bias, layer-3 weights (out, hidden), bias. Genomes are float32;
forward passes compute in float64.

Params file format: magic ``VXNCA`` + version byte, uint32 LE header
length, JSON header (channel counts, hidden width, layout version), then
the raw little-endian float32 vector. Optional metadata travels in a
``<file>.json`` sidecar.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .level import Level
from .tasks import TaskSpec

HIDDEN_DEFAULT = 32
KERNEL = 3
LAYOUT_VERSION = 1
_MAGIC = b"VXNCA\x01"
_OFFSETS = [(i, j, k) for i in range(KERNEL) for j in range(KERNEL) for k in range(KERNEL)]


class NcaError(ValueError):
    pass


@dataclass(frozen=True)
class NcaArchitecture:
    in_channels: int
    out_channels: int
    hidden: int = HIDDEN_DEFAULT


def arch_for_task(spec: TaskSpec, hidden: int = HIDDEN_DEFAULT) -> NcaArchitecture:
    out = len(spec.action_tiles)
    extra = 4 if spec.has_doors else 0
    return NcaArchitecture(out + extra, out, hidden)


def param_count(arch: NcaArchitecture) -> int:
    k3 = KERNEL ** 3
    h = arch.hidden
    return (
        arch.in_channels * k3 * h + h
        + h * h + h
        + h * arch.out_channels + arch.out_channels
    )


@dataclass
class GeneratorParams:
    arch: NcaArchitecture
    theta: np.ndarray  # float32, length param_count(arch)
    _prep: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float32)
        if self.theta.ndim != 1 or len(self.theta) != param_count(self.arch):
            raise NcaError(
                f"theta length {self.theta.shape} != param_count {param_count(self.arch)}"
            )

    def layers(self):
        """(W1, b1, W2, b2, W3, b3) float64 arrays in the documented layout."""
        a = self.arch
        k3 = KERNEL ** 3
        t = self.theta.astype(np.float64)
        i = 0
        w1 = t[i : i + a.hidden * a.in_channels * k3].reshape(
            a.hidden, a.in_channels, KERNEL, KERNEL, KERNEL
        )
        i += w1.size
        b1 = t[i : i + a.hidden]
        i += a.hidden
        w2 = t[i : i + a.hidden * a.hidden].reshape(a.hidden, a.hidden)
        i += w2.size
        b2 = t[i : i + a.hidden]
        i += a.hidden
        w3 = t[i : i + a.out_channels * a.hidden].reshape(a.out_channels, a.hidden)
        i += w3.size
        b3 = t[i : i + a.out_channels]
        return w1, b1, w2, b2, w3, b3

    def prepared(self):
        """Weights rearranged for the channels-last matmul pipeline."""
        if self._prep is None:
            w1, b1, w2, b2, w3, b3 = self.layers()
            w1mat = np.ascontiguousarray(
                w1.transpose(2, 3, 4, 1, 0).reshape(-1, self.arch.hidden)
            )
            self._prep = (w1mat, b1, np.ascontiguousarray(w2.T), b2,
                          np.ascontiguousarray(w3.T), b3)
        return self._prep


def encode_nca_input(level: Level, spec: TaskSpec) -> np.ndarray:
    """One-hot encode a level for the generator, channels first:
    placeable-tile channels plus door-marker channels for door tasks."""
    w, h, d = level.dims
    tiles = level.tiles
    channels = [tiles == int(t) for t in spec.action_tiles]
    for marker in _door_markers(level, spec):
        channels.append(marker)
    return np.stack(channels).astype(np.float64)


def _door_markers(level: Level, spec: TaskSpec) -> list[np.ndarray]:
    if not spec.has_doors:
        return []
    if level.doors is None:
        raise NcaError("door task level has no doors")
    w, h, d = level.dims
    out = []
    for door in level.doors:
        ax, ay, az = door.foot
        foot = np.zeros((w, h, d), dtype=bool)
        head = np.zeros((w, h, d), dtype=bool)
        foot[ax, ay, az] = True
        head[ax, ay + 1, az] = True
        out.extend((foot, head))
    return out


def _im2col(padded_cl: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Channels-last padded grid (b, W+2, H+2, D+2, c) -> patch matrix
    (b*W*H*D, 27*c) with columns ordered (offset, channel)."""
    b, wp, hp, dp, c = padded_cl.shape
    w, h, d = wp - 2, hp - 2, dp - 2
    n = b * w * h * d
    if out is None:
        out = np.empty((n, len(_OFFSETS) * c))
    windows = np.lib.stride_tricks.sliding_window_view(
        padded_cl, (KERNEL, KERNEL, KERNEL), axis=(1, 2, 3)
    )  # (b, w, h, d, c, 3, 3, 3)
    np.copyto(
        out.reshape(b, w, h, d, KERNEL, KERNEL, KERNEL, c),
        np.moveaxis(windows, 4, 7),
    )
    return out


def nca_forward(params: GeneratorParams, x: np.ndarray) -> np.ndarray:
    """Pre-argmax sigmoid activations, shape (out, W, H, D). ``x`` is
    channel-first and may carry a leading batch axis (then the result
    does too)."""
    batched = x.ndim == 5
    xb = x if batched else x[None]
    if xb.shape[1] != params.arch.in_channels:
        raise NcaError(
            f"input has {xb.shape[1]} channels, arch expects {params.arch.in_channels}"
        )
    b, cin, w, h, d = xb.shape
    xcl = np.ascontiguousarray(np.moveaxis(xb, 1, 4))
    padded = np.zeros((b, w + 2, h + 2, d + 2, cin))
    padded[:, 1:-1, 1:-1, 1:-1, :] = xcl
    out = _mlp(params, _im2col(padded)).reshape(b, w, h, d, -1)
    out = np.moveaxis(out, 4, 1)
    return out if batched else out[0]


def _mlp(params: GeneratorParams, patches: np.ndarray, bufs=None) -> np.ndarray:
    w1mat, b1, w2t, b2, w3t, b3 = params.prepared()
    if bufs is None:
        n = patches.shape[0]
        bufs = (
            np.empty((n, params.arch.hidden)),
            np.empty((n, params.arch.hidden)),
            np.empty((n, params.arch.out_channels)),
        )
    h1, h2, z = bufs
    np.matmul(patches, w1mat, out=h1)
    h1 += b1
    np.maximum(h1, 0.0, out=h1)
    np.matmul(h1, w2t, out=h2)
    h2 += b2
    np.maximum(h2, 0.0, out=h2)
    np.matmul(h2, w3t, out=z)
    z += b3
    expit(z, out=z)
    return z


def nca_step(params: GeneratorParams, level: Level, spec: TaskSpec) -> Level:
    """One generator step: encode, forward, argmax-decode. Doors (frame
    structure) are carried over unchanged."""
    acts = nca_forward(params, encode_nca_input(level, spec))
    choice = np.argmax(acts, axis=0)
    lut = np.array([int(t) for t in spec.action_tiles], dtype=np.int8)
    return Level(level.dims, lut[choice], level.doors)


class _Stepper:
    """Buffered batched rollout engine; numerically identical to
    ``nca_step`` applied per level."""

    def __init__(self, params: GeneratorParams, levels: list[Level], spec: TaskSpec):
        self.params = params
        self.spec = spec
        self.levels = levels
        b = len(levels)
        w, h, d = levels[0].dims
        self.dims = (w, h, d)
        n_tiles = len(spec.action_tiles)
        self.n_tiles = n_tiles
        cin = params.arch.in_channels
        if cin != n_tiles + (4 if spec.has_doors else 0):
            raise NcaError("params arch does not match task channel layout")
        self.padded = np.zeros((b, w + 2, h + 2, d + 2, cin))
        if spec.has_doors:
            fixed = np.stack(
                [np.stack(_door_markers(lv, spec), axis=-1) for lv in levels]
            ).astype(np.float64)
            self.padded[:, 1:-1, 1:-1, 1:-1, n_tiles:] = fixed
        n = b * w * h * d
        self.patches = np.empty((n, 27 * cin))
        self.bufs = (
            np.empty((n, params.arch.hidden)),
            np.empty((n, params.arch.hidden)),
            np.empty((n, params.arch.out_channels)),
        )
        # Tile value -> channel index (tasks use a prefix of the tile enum).
        lut_inv = np.zeros(8, dtype=np.int64)
        for i, t in enumerate(spec.action_tiles):
            lut_inv[int(t)] = i
        self.codes = np.stack([lut_inv[lv.tiles] for lv in levels])
        self.lut = np.array([int(t) for t in spec.action_tiles], dtype=np.int8)

    def run(self, steps: int) -> np.ndarray:
        b = len(self.levels)
        w, h, d = self.dims
        arange = np.arange(self.n_tiles)
        for _ in range(steps):
            onehot = (self.codes[..., None] == arange).astype(np.float64)
            self.padded[:, 1:-1, 1:-1, 1:-1, : self.n_tiles] = onehot
            acts = _mlp(self.params, _im2col(self.padded, self.patches), self.bufs)
            self.codes = np.argmax(acts.reshape(b, w, h, d, -1), axis=4)
        return self.codes

    def decode(self) -> list[Level]:
        return [
            Level(lv.dims, self.lut[self.codes[i]], lv.doors)
            for i, lv in enumerate(self.levels)
        ]


def rollout_batch(
    params: GeneratorParams, levels: list[Level], spec: TaskSpec, steps: int = 50
) -> list[Level]:
    """Iterate the generator on each level for ``steps`` steps (batched)."""
    if not levels:
        return []
    if steps == 0:
        return [lv.copy() for lv in levels]
    stepper = _Stepper(params, levels, spec)
    stepper.run(steps)
    return stepper.decode()


def rollout(params: GeneratorParams, level: Level, spec: TaskSpec, steps: int = 50) -> Level:
    """Iterate ``nca_step`` feeding each output back as input."""
    return rollout_batch(params, [level], spec, steps)[0]


# ---------------------------------------------------------------------------
# Params file I/O

def save_params(path, params: GeneratorParams, metadata: dict | None = None) -> None:
    header = json.dumps(
        {
            "in_channels": params.arch.in_channels,
            "hidden": params.arch.hidden,
            "out_channels": params.arch.out_channels,
            "layout": LAYOUT_VERSION,
        },
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(params.theta.astype("<f4").tobytes())
    if metadata is not None:
        with open(f"{path}.json", "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_params(path) -> GeneratorParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise NcaError(f"{path}: not a params file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header.get("layout") != LAYOUT_VERSION:
            raise NcaError(f"unsupported layout version {header.get('layout')}")
        arch = NcaArchitecture(header["in_channels"], header["out_channels"], header["hidden"])
        theta = np.frombuffer(fh.read(), dtype="<f4").copy()
    return GeneratorParams(arch, theta)
