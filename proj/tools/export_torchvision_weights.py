#!/usr/bin/env python3
"""Convert torchvision ImageNet weights into .pdw archives.

    export_torchvision_weights.py --out DIR [--arch resnet34 ...]

With --parity, models are randomly initialised instead (no download), their
BatchNorm statistics are randomised, and a reference input plus the
feature output (classification layer removed) are written next to the
weights for the C++ parity test.

Exit code 77 means torch/torchvision are not importable.
"""

import argparse
import json
import os
import struct
import sys

ARCHS = ["resnet34", "resnet50", "vgg16", "efficientnet_b0", "mobilenet_v2", "tiny_test_net"]


def write_archive(path, metadata, tensors):
    meta = json.dumps(metadata, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(b"PDNSARCH")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)
        f.write(struct.pack("<Q", len(tensors)))
        for name, t in tensors:
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            for d in t.shape:
                f.write(struct.pack("<q", d))
            f.write(t.detach().to("cpu").double().contiguous().numpy().astype("<f8").tobytes())


def strip_head(torch, arch, model):
    identity = torch.nn.Identity()
    if arch.startswith("resnet"):
        model.fc = identity
    elif arch == "vgg16":
        model.classifier[6] = identity
    else:  # mobilenet_v2, efficientnet_b0: keep dropout, drop the linear layer
        model.classifier[1] = identity
    return model


def head_keys(arch):
    if arch.startswith("resnet"):
        return ("fc.",)
    if arch == "vgg16":
        return ("classifier.6.",)
    return ("classifier.1.",)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--arch", action="append", choices=[a for a in ARCHS if a != "tiny_test_net"])
    ap.add_argument("--parity", action="store_true")
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    try:
        import torch
        import torchvision
    except ImportError:
        print("torch/torchvision not available", file=sys.stderr)
        return 77

    torch.manual_seed(args.seed)
    os.makedirs(args.out, exist_ok=True)
    for arch in args.arch or [a for a in ARCHS if a != "tiny_test_net"]:
        ctor = getattr(torchvision.models, arch)
        model = ctor(weights=None if args.parity else "DEFAULT")
        if args.parity:
            for m in model.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.running_mean.uniform_(-0.2, 0.2)
                    m.running_var.uniform_(0.5, 1.5)
                    m.weight.data.uniform_(0.5, 1.5)
                    m.bias.data.uniform_(-0.2, 0.2)
        model = model.double().eval()
        state = [(k, v) for k, v in model.state_dict().items() if not k.startswith(head_keys(arch))]
        write_archive(os.path.join(args.out, arch + ".pdw"), {"kind": "weights", "architecture": arch}, state)
        if args.parity:
            x = torch.rand(2, 3, args.size, args.size, dtype=torch.float64) * 4 - 2
            with torch.no_grad():
                y = strip_head(torch, arch, model)(x)
            write_archive(os.path.join(args.out, arch + ".parity.pdw"), {"kind": "parity", "architecture": arch},
                          [("input", x), ("features", y)])
        print(f"{arch}: {len(state)} tensors", flush=True)
        del model
    return 0


if __name__ == "__main__":
    sys.exit(main())
