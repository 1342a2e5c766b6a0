"""Reference direction-classifier architecture (training graph).

Three conv/BN/ReLU/pool stages then two fully connected layers, with
dropout between them; batch norm and dropout exist only here — the
export path folds batch norm into the conv parameters and drops
dropout, producing the plain conv/pool/fc stack the simulator's
inference code runs.
"""

import torch
from torch import nn


class ReferenceNet(nn.Module):
    def __init__(self, in_channels, dropout=0.5):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, 16, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(16)
        self.conv2 = nn.Conv2d(16, 32, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(32)
        self.conv3 = nn.Conv2d(32, 64, 3, padding=1, bias=False)
        self.bn3 = nn.BatchNorm2d(64)
        self.pool = nn.MaxPool2d(2)
        self.fc1 = nn.Linear(64 * 8 * 8, 256)
        self.dropout = nn.Dropout(dropout)
        self.fc2 = nn.Linear(256, 4)

    def forward(self, x):
        x = self.pool(torch.relu(self.bn1(self.conv1(x))))
        x = self.pool(torch.relu(self.bn2(self.conv2(x))))
        x = self.pool(torch.relu(self.bn3(self.conv3(x))))
        x = torch.flatten(x, 1)
        x = self.dropout(torch.relu(self.fc1(x)))
        return self.fc2(x)


def fold_batchnorm(conv, bn):
    """Fold an eval-mode batch norm into conv weight and bias arrays.

    Returns (weight (out,in,3,3), bias (out,)) float32 numpy arrays
    computing conv+bn exactly (up to float rounding) with running
    statistics.
    """
    with torch.no_grad():
        scale = bn.weight / torch.sqrt(bn.running_var + bn.eps)
        weight = conv.weight * scale[:, None, None, None]
        bias = bn.bias - bn.running_mean * scale
        if conv.bias is not None:
            bias = bias + conv.bias * scale
    return (weight.detach().cpu().numpy().astype("float32"),
            bias.detach().cpu().numpy().astype("float32"))


def export_layers(net):
    """The trained net as plain (descriptor, arrays) inference layers.

    Layer order and descriptor fields follow the EXHW manifest schema;
    batch norm is folded, dropout dropped.
    """
    layers = []
    for conv, bn in ((net.conv1, net.bn1), (net.conv2, net.bn2),
                     (net.conv3, net.bn3)):
        weight, bias = fold_batchnorm(conv, bn)
        layers.append(({"kind": "conv", "in_ch": conv.in_channels,
                        "out_ch": conv.out_channels, "relu": True},
                       weight, bias))
        layers.append(({"kind": "maxpool"}, None, None))
    layers.append(({"kind": "flatten"}, None, None))
    with torch.no_grad():
        layers.append(({"kind": "fc", "in_features": net.fc1.in_features,
                        "out_features": net.fc1.out_features, "relu": True},
                       net.fc1.weight.cpu().numpy().astype("float32"),
                       net.fc1.bias.cpu().numpy().astype("float32")))
        layers.append(({"kind": "fc", "in_features": net.fc2.in_features,
                        "out_features": net.fc2.out_features, "relu": False},
                       net.fc2.weight.cpu().numpy().astype("float32"),
                       net.fc2.bias.cpu().numpy().astype("float32")))
    return layers


def folded_module(layers):
    """A plain torch module running exported layers (for self-checks)."""
    mods = []
    for desc, weight, bias in layers:
        if desc["kind"] == "conv":
            conv = nn.Conv2d(desc["in_ch"], desc["out_ch"], 3, padding=1)
            with torch.no_grad():
                # .copy() because weights read from a file are views of
                # an immutable buffer, which torch cannot wrap directly.
                conv.weight.copy_(torch.from_numpy(weight.copy()))
                conv.bias.copy_(torch.from_numpy(bias.copy()))
            mods.append(conv)
            if desc.get("relu", True):
                mods.append(nn.ReLU())
        elif desc["kind"] == "maxpool":
            mods.append(nn.MaxPool2d(2))
        elif desc["kind"] == "flatten":
            mods.append(nn.Flatten())
        elif desc["kind"] == "fc":
            fc = nn.Linear(desc["in_features"], desc["out_features"])
            with torch.no_grad():
                fc.weight.copy_(torch.from_numpy(weight.copy()))
                fc.bias.copy_(torch.from_numpy(bias.copy()))
            mods.append(fc)
            if desc.get("relu", False):
                mods.append(nn.ReLU())
        else:
            raise ValueError(f"unknown layer kind {desc['kind']!r}")
    return nn.Sequential(*mods).eval()
