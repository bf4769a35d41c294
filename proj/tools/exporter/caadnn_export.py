"""Export PyTorch sequential models to the caadnn model JSON format (version 1).

Weights are written as exact hexadecimal floats. Tensors are converted to the
channel-last layout the engine expects: conv kernels become
[kh, kw, c_in, c_out], and a dense layer that follows a flatten of a
[c, h, w] activation has its columns permuted to [h, w, c] order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn


class UnsupportedLayer(ValueError):
    pass


def hex_float(x: float) -> str:
    """Shortest C99 hex float for x, e.g. 0.1875 -> '0x1.8p-3'."""
    x = float(x)
    if x == 0.0:
        return "-0x0p+0" if np.signbit(x) else "0x0p+0"
    h = x.hex()  # '0x1.8000000000000p-3'
    mant, exp = h.split("p")
    if "." in mant:
        mant = mant.rstrip("0").rstrip(".")
    sign = "-" if exp.startswith("-") else "+"
    return f"{mant}p{sign}{exp.lstrip('+-')}"


def tensor(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)  # float32 widens exactly
    return {"shape": list(arr.shape), "data": [hex_float(v) for v in arr.reshape(-1)]}


@dataclass
class ExportManifest:
    source: str
    layers: list = field(default_factory=list)  # (source layer, exported tag)
    checksum: str = ""
    path: str = ""


def _activation_shape(layer, shape):
    """Shape after `layer` in PyTorch's channel-first convention."""
    if isinstance(layer, nn.Linear):
        return shape[:-1] + [layer.out_features]
    if isinstance(layer, nn.Conv2d):
        c, h, w = shape
        kh, kw = layer.kernel_size
        sh, sw = layer.stride
        if layer.padding == "same":
            return [layer.out_channels, -(-h // sh), -(-w // sw)]
        return [layer.out_channels, (h - kh) // sh + 1, (w - kw) // sw + 1]
    if isinstance(layer, (nn.MaxPool2d, nn.AvgPool2d)):
        c, h, w = shape
        k = layer.kernel_size if isinstance(layer.kernel_size, tuple) else (layer.kernel_size,) * 2
        s = layer.stride if isinstance(layer.stride, tuple) else (layer.stride,) * 2
        return [c, (h - k[0]) // s[0] + 1, (w - k[1]) // s[1] + 1]
    if isinstance(layer, nn.Flatten):
        return [int(np.prod(shape))]
    return shape


def export_model(model: nn.Sequential, input_shape, name: str, path: str | Path | None = None):
    """Returns (document, manifest); writes the JSON when `path` is given.

    `input_shape` uses PyTorch's convention ([c, h, w] for images); the
    exported model declares the channel-last equivalent.
    """
    if not isinstance(model, nn.Sequential):
        raise UnsupportedLayer(f"non-sequential topology: {type(model).__name__}")
    model = model.eval()
    layers = []
    manifest = ExportManifest(source=name)
    shape = list(input_shape)
    pending_flatten_from = None  # [c, h, w] shape flattened just before
    for idx, layer in enumerate(model):
        src = f"{idx}:{type(layer).__name__}"
        if isinstance(layer, nn.Linear):
            w = layer.weight.detach().cpu().numpy()
            if pending_flatten_from is not None and len(pending_flatten_from) == 3:
                c, h, ww = pending_flatten_from
                w = w.reshape(w.shape[0], c, h, ww).transpose(0, 2, 3, 1).reshape(w.shape[0], -1)
            pending_flatten_from = None
            b = layer.bias.detach().cpu().numpy() if layer.bias is not None else np.zeros(w.shape[0], np.float32)
            entry = {"type": "dense", "weights": tensor(w), "bias": tensor(b)}
        elif isinstance(layer, nn.Conv2d):
            if layer.groups != 1 or layer.dilation != (1, 1):
                raise UnsupportedLayer(f"{src}: grouped or dilated convolution")
            if layer.padding not in ("same", "valid", (0, 0)):
                raise UnsupportedLayer(f"{src}: explicit padding {layer.padding}")
            k = layer.weight.detach().cpu().numpy().transpose(2, 3, 1, 0)
            b = layer.bias.detach().cpu().numpy() if layer.bias is not None else np.zeros(k.shape[3], np.float32)
            entry = {
                "type": "conv2d",
                "kernel": tensor(k),
                "bias": tensor(b),
                "stride": list(layer.stride),
                "padding": "same" if layer.padding == "same" else "valid",
            }
        elif isinstance(layer, (nn.MaxPool2d, nn.AvgPool2d)):
            k = layer.kernel_size if isinstance(layer.kernel_size, tuple) else (layer.kernel_size,) * 2
            s = layer.stride if isinstance(layer.stride, tuple) else (layer.stride,) * 2
            pad = layer.padding if isinstance(layer.padding, tuple) else (layer.padding,) * 2
            if pad != (0, 0):
                raise UnsupportedLayer(f"{src}: padded pooling")
            tag = "maxpool2d" if isinstance(layer, nn.MaxPool2d) else "avgpool2d"
            entry = {"type": tag, "pool": list(k), "stride": list(s)}
        elif isinstance(layer, (nn.BatchNorm1d, nn.BatchNorm2d)):
            entry = {
                "type": "batchnorm",
                "gamma": tensor(layer.weight.detach().cpu().numpy()),
                "beta": tensor(layer.bias.detach().cpu().numpy()),
                "moving_mean": tensor(layer.running_mean.detach().cpu().numpy()),
                "moving_var": tensor(layer.running_var.detach().cpu().numpy()),
                "epsilon": hex_float(layer.eps),
            }
        elif isinstance(layer, nn.ReLU):
            entry = {"type": "relu"}
        elif isinstance(layer, nn.Sigmoid):
            entry = {"type": "sigmoid"}
        elif isinstance(layer, nn.Tanh):
            entry = {"type": "tanh"}
        elif isinstance(layer, nn.Softmax):
            entry = {"type": "softmax", "axis": -1}
        elif isinstance(layer, nn.Flatten):
            pending_flatten_from = list(shape)
            entry = {"type": "flatten"}
        elif isinstance(layer, nn.Dropout):
            entry = {"type": "dropout", "rate": hex_float(layer.p)}
        else:
            raise UnsupportedLayer(f"unsupported layer {src}")
        layers.append(entry)
        manifest.layers.append((src, entry["type"]))
        shape = _activation_shape(layer, shape)

    declared = list(input_shape)
    if len(declared) == 3:
        declared = [declared[1], declared[2], declared[0]]
    doc = {"format_version": 1, "name": name, "input_shape": declared, "layers": layers}
    text = json.dumps(doc, separators=(",", ":")) + "\n"
    manifest.checksum = hashlib.sha256(text.encode()).hexdigest()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
        manifest.path = str(path)
    return doc, manifest


def tensor_file(values, shape, value_range=None) -> dict:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    doc = {"shape": list(shape), "data": [hex_float(v) for v in arr]}
    if value_range is not None:
        doc["range"] = [hex_float(value_range[0]), hex_float(value_range[1])]
    return doc
