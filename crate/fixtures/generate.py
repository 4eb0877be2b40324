"""Train the toy fixture models and write them in rdprune's on-disk format.

Produces, next to this script:
  mlp_toy/model.json, model.bin, calib.bin
  cnn_toy/model.json, model.bin, calib.bin

Both models are trained on small synthetic classification tasks so that
their weights have the structure of a trained network. Run once; the
outputs are committed. Requires numpy and torch (CPU).
"""

import hashlib
import json
import os
import struct

import numpy as np
import torch
from torch import nn

HERE = os.path.dirname(os.path.abspath(__file__))
CALIB_MAGIC = b"RDPCALIB"
CALIB_COUNT = 256


def blob_ref(blob, array):
    data = np.ascontiguousarray(array, dtype="<f4").tobytes()
    ref = {
        "shape": list(array.shape),
        "offset": len(blob),
        "length": int(array.size),
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    blob.extend(data)
    return ref


def write_model(out_dir, name, input_shape, layers):
    """layers: list of dicts with 'kind' and optional numpy 'weight'/'bias'."""
    os.makedirs(out_dir, exist_ok=True)
    blob = bytearray()
    entries = []
    total = 0
    for layer in layers:
        entry = {"kind": layer["kind"]}
        if "weight" in layer:
            entry["weight"] = blob_ref(blob, layer["weight"])
            total += layer["weight"].size
        if layer.get("bias") is not None:
            entry["bias"] = blob_ref(blob, layer["bias"])
        for key in ("stride", "padding", "kernel", "source"):
            if key in layer:
                entry[key] = layer[key]
        entries.append(entry)
    manifest = {
        "format": "rdprune-model",
        "version": 1,
        "name": name,
        "input_shape": list(input_shape),
        "blob": "model.bin",
        "total_prunable": int(total),
        "layers": entries,
    }
    with open(os.path.join(out_dir, "model.bin"), "wb") as f:
        f.write(bytes(blob))
    with open(os.path.join(out_dir, "model.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def write_calib(path, samples):
    samples = np.ascontiguousarray(samples, dtype="<f4")
    count, shape = samples.shape[0], samples.shape[1:]
    body = bytearray(CALIB_MAGIC)
    body += struct.pack("<II", count, len(shape))
    body += struct.pack("<%dI" % len(shape), *shape)
    body += samples.tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as f:
        f.write(bytes(body))


def train(model, x, y, steps, lr=3e-3, batch=128, seed=0):
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(steps):
        idx = torch.randint(0, x.shape[0], (batch,), generator=gen)
        opt.zero_grad()
        loss = loss_fn(model(x[idx]), y[idx])
        loss.backward()
        opt.step()
    with torch.no_grad():
        acc = (model(x).argmax(1) == y).float().mean().item()
    return acc


def np32(t):
    return t.detach().cpu().numpy().astype(np.float32)


def mlp_toy():
    rng = np.random.default_rng(1)
    # Labels from a fixed random teacher network.
    t1 = rng.standard_normal((32, 48)) / np.sqrt(32)
    t2 = rng.standard_normal((48, 10)) / np.sqrt(48)
    x = rng.standard_normal((16384 + CALIB_COUNT, 32)).astype(np.float32)
    y = np.argmax(np.maximum(x @ t1, 0) @ t2, axis=1)
    xt, yt = torch.from_numpy(x[:16384]), torch.from_numpy(y[:16384])

    torch.manual_seed(1)
    dims = [32, 64, 64, 64, 64, 32, 10]
    mods = []
    for i in range(len(dims) - 1):
        mods.append(nn.Linear(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            mods.append(nn.ReLU())
    net = nn.Sequential(*mods)
    acc = train(net, xt, yt, steps=4000)
    print("mlp_toy train accuracy %.3f" % acc)

    layers = []
    for m in net:
        if isinstance(m, nn.Linear):
            layers.append({"kind": "dense", "weight": np32(m.weight), "bias": np32(m.bias)})
        else:
            layers.append({"kind": "relu"})
    out = os.path.join(HERE, "mlp_toy")
    write_model(out, "mlp_toy", [32], layers)
    write_calib(os.path.join(out, "calib.bin"), x[16384:])
    write_reference(out, net, x[16384:16392])


def pattern_images(rng, count):
    """8x8 single-channel images: one of ten bar/corner patterns at a random
    offset, plus Gaussian noise."""
    imgs = np.zeros((count, 1, 8, 8), dtype=np.float32)
    labels = rng.integers(0, 10, size=count)
    for n, c in enumerate(labels):
        p, q = rng.integers(1, 6, size=2)
        img = imgs[n, 0]
        if c == 0:
            img[p, 1:7] = 1.0
        elif c == 1:
            img[1:7, p] = 1.0
        elif c == 2:
            for k in range(1, 7):
                img[k, k] = 1.0
        elif c == 3:
            for k in range(1, 7):
                img[k, 7 - k] = 1.0
        elif c == 4:
            img[p, 1:7] = 1.0
            img[1:7, q] = 1.0
        elif c == 5:
            img[p:p + 3, q:q + 3] = 1.0
        elif c == 6:
            img[p, 1:7] = 1.0
            img[min(p + 2, 7), 1:7] = 1.0
        elif c == 7:
            img[1:7, p] = 1.0
            img[1:7, min(p + 2, 7)] = 1.0
        elif c == 8:
            img[p, q:] = 1.0
            img[p:, q] = 1.0
        else:
            img[::2, ::2] = 1.0
    imgs += 0.3 * rng.standard_normal(imgs.shape).astype(np.float32)
    return imgs, labels


class ResidualCnn(nn.Module):
    """conv stem, two residual blocks, two dense layers."""

    def __init__(self, width=16):
        super().__init__()
        self.stem = nn.Conv2d(1, width, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.blocks = nn.ModuleList(
            [nn.ModuleList([nn.Conv2d(width, width, 3, padding=1), nn.Conv2d(width, width, 3, padding=1)])
             for _ in range(2)]
        )
        self.avg = nn.AvgPool2d(2)
        self.fc1 = nn.Linear(width * 4, 32)
        self.fc2 = nn.Linear(32, 10)

    def forward(self, x):
        h = self.pool(torch.relu(self.stem(x)))
        for a, b in self.blocks:
            h = torch.relu(b(torch.relu(a(h))) + h)
        h = self.avg(h).flatten(1)
        return self.fc2(torch.relu(self.fc1(h)))


def cnn_toy():
    rng = np.random.default_rng(2)
    x, y = pattern_images(rng, 8192 + CALIB_COUNT)
    xt, yt = torch.from_numpy(x[:8192]), torch.from_numpy(y[:8192])
    torch.manual_seed(2)
    net = ResidualCnn()
    acc = train(net, xt, yt, steps=3000)
    print("cnn_toy train accuracy %.3f" % acc)

    def conv(m):
        return {"kind": "conv2d", "weight": np32(m.weight), "bias": np32(m.bias), "stride": 1, "padding": 1}

    layers = [conv(net.stem), {"kind": "relu"}, {"kind": "maxpool2d", "kernel": 2, "stride": 2}]
    for a, b in net.blocks:
        block_input = len(layers) - 1
        layers += [conv(a), {"kind": "relu"}, conv(b), {"kind": "add_skip", "source": block_input}, {"kind": "relu"}]
    layers += [
        {"kind": "avgpool2d", "kernel": 2, "stride": 2},
        {"kind": "flatten"},
        {"kind": "dense", "weight": np32(net.fc1.weight), "bias": np32(net.fc1.bias)},
        {"kind": "relu"},
        {"kind": "dense", "weight": np32(net.fc2.weight), "bias": np32(net.fc2.bias)},
    ]
    out = os.path.join(HERE, "cnn_toy")
    write_model(out, "cnn_toy", [1, 8, 8], layers)
    write_calib(os.path.join(out, "calib.bin"), x[8192:])
    write_reference(out, net, x[8192:8200])


def write_reference(out_dir, net, inputs):
    """Framework outputs on the first calibration samples, for engine parity."""
    with torch.no_grad():
        ref = net(torch.from_numpy(inputs)).numpy().astype(np.float32)
    with open(os.path.join(out_dir, "reference.json"), "w") as f:
        json.dump({"samples": len(inputs), "outputs": ref.tolist()}, f)
        f.write("\n")


if __name__ == "__main__":
    torch.set_num_threads(1)
    mlp_toy()
    cnn_toy()
