#!/usr/bin/env python3
"""Train and export the committed fixture networks.

Produces, with pinned seeds:
  fixtures/digits/model.json        784-880-16-10 ReLU MLP with softmax (~0.7M parameters)
  fixtures/digits/inputs/*.json     the most confident test image of each class
  fixtures/pendulum/model.json      2-16-16-1 tanh MLP, linear output
  fixtures/pendulum/input.json      one state with the global range [-6, 6]
  fixtures/micro/*.json             small models covering every layer type

The digits data is the 8x8 scikit-learn set, upsampled (nearest) to 28x28 and
scaled to integer grey levels 0..240. The exported network takes those
integers directly; the 2^-8 training scale is folded into the first layer.

Usage: python3 tools/make_fixtures.py [--out fixtures]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split
from torch import nn

sys.path.insert(0, str(Path(__file__).resolve().parent / "exporter"))
from caadnn_export import export_model, tensor_file  # noqa: E402

SEED = 20240607
DIGITS_KEEP = (16, 12)
DIGITS_L1 = 3e-4


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def digits_images():
    data = load_digits()
    x = torch.tensor(data.images, dtype=torch.float32).unsqueeze(1)  # [n, 1, 8, 8], 0..16
    x = F.interpolate(x, size=(28, 28), mode="nearest") * 15.0  # grey levels 0..240
    return x.reshape(len(x), -1).numpy(), data.target


def to_bfloat16_(layer: nn.Linear) -> None:
    with torch.no_grad():
        layer.weight.copy_(layer.weight.to(torch.bfloat16).float())
        layer.bias.copy_(layer.bias.to(torch.bfloat16).float())


def make_digits(out: Path) -> None:
    """Sparse MLP with bfloat16 parameters.

    Both wide layers keep only the largest DIGITS_KEEP[i] weights of each
    row after a dense warm-up, then train on with the mask fixed. An L1
    penalty keeps row norms small. Parameters are rounded to 8 significant
    bits, so they are exact at every precision the analysis covers.
    """
    torch.manual_seed(SEED)
    pixels, labels = digits_images()
    x_tr, x_te, y_tr, y_te = train_test_split(pixels, labels, test_size=0.2, random_state=SEED, stratify=labels)
    # Inputs are scaled by 2^-8 for training; the factor folds exactly into W1.
    xt = torch.tensor(x_tr / 256.0, dtype=torch.float32)
    yt = torch.tensor(y_tr)
    net = nn.Sequential(nn.Linear(784, 880), nn.ReLU(), nn.Linear(880, 16), nn.ReLU(), nn.Linear(16, 10))
    dense = (net[0], net[2], net[4])
    masks: list[torch.Tensor | None] = [None, None]

    def train(epochs: int) -> None:
        opt = torch.optim.Adam(net.parameters(), lr=1e-3)
        for _ in range(epochs):
            perm = torch.randperm(len(xt))
            for i in range(0, len(xt), 64):
                idx = perm[i : i + 64]
                opt.zero_grad()
                l1 = sum(layer.weight.abs().sum() for layer in dense)
                loss = F.cross_entropy(net(xt[idx]), yt[idx]) + DIGITS_L1 * l1
                loss.backward()
                opt.step()
                with torch.no_grad():
                    for layer, mask in zip(dense, masks):
                        if mask is not None:
                            layer.weight.mul_(mask)

    train(30)
    with torch.no_grad():
        for j, keep in enumerate(DIGITS_KEEP):
            w = dense[j].weight
            threshold = w.abs().topk(keep, dim=1).values[:, -1:]
            masks[j] = (w.abs() >= threshold).float()
            w.mul_(masks[j])
    train(30)
    for layer in dense:
        to_bfloat16_(layer)
    net.eval()
    with torch.no_grad():
        logits = net(torch.tensor(x_te / 256.0, dtype=torch.float32))
        acc = (logits.argmax(1).numpy() == y_te).mean()
        net[0].weight.mul_(1.0 / 256.0)
    nonzero = sum(int((layer.weight != 0).sum()) for layer in dense)
    print(f"digits: test accuracy {acc:.4f}, {nonzero} nonzero weights")

    export = nn.Sequential(*list(net), nn.Softmax(dim=-1))
    _, manifest = export_model(export, [784], "digits-mlp", out / "digits" / "model.json")
    n_params = sum(p.numel() for p in net.parameters())
    print(f"digits: {n_params} parameters, sha256 {manifest.checksum[:16]}")

    with torch.no_grad():
        probs = export(torch.tensor(x_te, dtype=torch.float32)).numpy()
    # The most confident test image of each class.
    for cls in range(10):
        idx = np.where(y_te == cls)[0]
        i = idx[probs[idx, cls].argmax()]
        write_json(out / "digits" / "inputs" / f"class_{cls}.json", tensor_file(x_te[i], [784]))
        print(f"digits: class {cls} test image {i}, p = {probs[i][cls]:.4f}, predicted {probs[i].argmax()}")


def make_pendulum(out: Path) -> None:
    torch.manual_seed(SEED + 1)
    # Damped-pendulum feedback law: torque from angle and angular velocity.
    theta = torch.empty(4096, 1).uniform_(-6, 6)
    omega = torch.empty(4096, 1).uniform_(-6, 6)
    x = torch.cat([theta, omega], dim=1)
    y = torch.tanh(-1.5 * torch.sin(theta) - 0.4 * omega)
    net = nn.Sequential(nn.Linear(2, 16), nn.Tanh(), nn.Linear(16, 16), nn.Tanh(), nn.Linear(16, 1))
    opt = torch.optim.Adam(net.parameters(), lr=1e-2)
    for step in range(3000):
        opt.zero_grad()
        loss = F.mse_loss(net(x), y)
        loss.backward()
        opt.step()
    print(f"pendulum: final mse {loss.item():.5f}")
    export_model(net, [2], "pendulum-tanh-mlp", out / "pendulum" / "model.json")
    write_json(out / "pendulum" / "input.json", tensor_file([0.5, -1.25], [2], (-6.0, 6.0)))


def make_micro(out: Path) -> None:
    torch.manual_seed(SEED + 2)
    identity = {
        "format_version": 1,
        "name": "identity",
        "input_shape": [1],
        "layers": [{"type": "dense", "weights": {"shape": [1, 1], "data": ["0x1p+0"]},
                    "bias": {"shape": [1], "data": ["0x0p+0"]}}],
    }
    write_json(out / "micro" / "identity.json", identity)

    conv = nn.Sequential(
        nn.Conv2d(2, 3, 3, padding="same"),
        nn.BatchNorm2d(3),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(3, 2, 2),
        nn.Sigmoid(),
        nn.AvgPool2d(1),
        nn.Flatten(),
        nn.Linear(2 * 2 * 2, 4),
        nn.Tanh(),
        nn.Linear(4, 3),
        nn.Softmax(dim=-1),
    )
    with torch.no_grad():
        bn = conv[1]
        bn.running_mean.uniform_(-0.5, 0.5)
        bn.running_var.uniform_(0.5, 2.0)
        bn.weight.uniform_(0.5, 1.5)
        bn.bias.uniform_(-0.2, 0.2)
    export_model(conv, [2, 6, 6], "micro-conv", out / "micro" / "conv.json")
    rng = np.random.default_rng(SEED)
    write_json(out / "micro" / "conv_input.json", tensor_file(rng.uniform(-1, 1, 72), [6, 6, 2], (-1.0, 1.0)))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    ap.add_argument("--only", choices=["digits", "pendulum", "micro"])
    args = ap.parse_args()
    torch.use_deterministic_algorithms(True)
    if args.only in (None, "digits"):
        make_digits(args.out)
    if args.only in (None, "pendulum"):
        make_pendulum(args.out)
    if args.only in (None, "micro"):
        make_micro(args.out)


if __name__ == "__main__":
    main()
