"""Train the small LeNet used by the end-to-end tests and write it to assets/.

Needs torch and mlxtend (``pip install mlxtend``); neither is a runtime
dependency of the package.  Data: the 5000-image MNIST subset bundled with
mlxtend, split 4300 train / 500 validation / 200 test with a fixed seed.

    python3 scripts/train_lenet.py [--epochs 12] [--out assets]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import torch
from mlxtend.data import mnist_data
from torch import nn

from securenet.ir.modelio import save_model


class LeNetSmall(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 5)
        self.conv2 = nn.Conv2d(8, 16, 5)
        self.fc1 = nn.Linear(256, 64)
        self.fc2 = nn.Linear(64, 10)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):  # x: N,1,28,28
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        x = x.permute(0, 2, 3, 1).flatten(1)  # flatten in HWC order like the native format
        x = torch.relu(self.fc1(x))
        return self.fc2(x)


def graph() -> dict:
    t = lambda name, dims: {"name": name, "dims": dims}  # noqa: E731
    return {
        "tensors": [
            t("image", [1, 28, 28, 1]),
            t("conv1_w", [5, 5, 1, 8]),
            t("conv1_b", [8]),
            t("conv2_w", [5, 5, 8, 16]),
            t("conv2_b", [16]),
            t("fc1_w", [256, 64]),
            t("fc1_b", [64]),
            t("fc2_w", [64, 10]),
            t("fc2_b", [10]),
        ],
        "nodes": [
            {"op": "Conv", "inputs": ["image", "conv1_w"], "output": "c1", "attrs": {"strides": [1, 1], "padding": "VALID"}},
            {"op": "MatAdd", "inputs": ["c1", "conv1_b"], "output": "c1b"},
            {"op": "ReLU", "inputs": ["c1b"], "output": "r1"},
            {"op": "MaxPool", "inputs": ["r1"], "output": "p1", "attrs": {"pool": [2, 2]}},
            {"op": "Conv", "inputs": ["p1", "conv2_w"], "output": "c2", "attrs": {"strides": [1, 1], "padding": "VALID"}},
            {"op": "MatAdd", "inputs": ["c2", "conv2_b"], "output": "c2b"},
            {"op": "ReLU", "inputs": ["c2b"], "output": "r2"},
            {"op": "MaxPool", "inputs": ["r2"], "output": "p2", "attrs": {"pool": [2, 2]}},
            {"op": "Flatten", "inputs": ["p2"], "output": "flat"},
            {"op": "MatMul", "inputs": ["flat", "fc1_w"], "output": "f1"},
            {"op": "MatAdd", "inputs": ["f1", "fc1_b"], "output": "f1b"},
            {"op": "ReLU", "inputs": ["f1b"], "output": "r3"},
            {"op": "MatMul", "inputs": ["r3", "fc2_w"], "output": "f2"},
            {"op": "MatAdd", "inputs": ["f2", "fc2_b"], "output": "logits"},
            {"op": "ArgMax", "inputs": ["logits"], "output": "label"},
        ],
        "input": "image",
        "output": "label",
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "assets"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(args.seed)
    x, y = mnist_data()
    x = (x.astype(np.float32) / 255.0).reshape(-1, 28, 28, 1)
    order = np.random.default_rng(args.seed).permutation(len(y))
    x, y = x[order], y[order].astype(np.int64)
    splits = {"train": slice(0, 4300), "val": slice(4300, 4800), "test": slice(4800, 5000)}

    xt = torch.from_numpy(x[splits["train"]]).permute(0, 3, 1, 2)
    yt = torch.from_numpy(y[splits["train"]])
    model = LeNetSmall()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(len(yt))
        for lo in range(0, len(yt), 64):
            idx = perm[lo : lo + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            xv = torch.from_numpy(x[splits["val"]]).permute(0, 3, 1, 2)
            acc = (model(xv).argmax(1).numpy() == y[splits["val"]]).mean()
        print(f"epoch {epoch}: loss {loss.item():.4f} val acc {acc:.3f}")

    sd = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    weights = {
        "conv1_w": sd["conv1.weight"].transpose(2, 3, 1, 0),
        "conv1_b": sd["conv1.bias"],
        "conv2_w": sd["conv2.weight"].transpose(2, 3, 1, 0),
        "conv2_b": sd["conv2.bias"],
        "fc1_w": sd["fc1.weight"].T,
        "fc1_b": sd["fc1.bias"],
        "fc2_w": sd["fc2.weight"].T,
        "fc2_b": sd["fc2.bias"],
    }
    save_model(graph(), weights, out / "lenet_small.json", out / "lenet_small.weights")
    for name in ("val", "test"):
        np.savez_compressed(out / f"mnist_{name}.npz", images=x[splits[name]], labels=y[splits[name]])
    x[splits["test"]].astype("<f4").tofile(out / "mnist_test_images.f32")
    print("wrote", sorted(p.name for p in out.iterdir()))


if __name__ == "__main__":
    main()
