"""Network architectures: two-layer BiLSTM head and ResNet-style CNNs."""

from __future__ import annotations

import numpy as np

from ..nn import (
    BatchNorm2d,
    BiLSTM,
    BiLstmReadout,
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool2d,
    MaxPool2d,
    ReLU,
    ResidualBlock,
    Sequential,
)

RESNET34_BLOCKS = (3, 4, 6, 3)
LITE_BLOCKS = (1, 1, 1, 1)
CNN_IN_CHANNELS = 3
MIN_CNN_INPUT = 64


def build_lstm_net(n_features=128, hidden=128, dropout=0.5, n_classes=8, seed=0):
    rng = np.random.default_rng(seed)
    return Sequential(
        ("lstm1", BiLSTM(n_features, hidden, rng=rng)),
        ("lstm2", BiLSTM(2 * hidden, hidden, rng=rng)),
        ("readout", BiLstmReadout()),
        ("dropout", Dropout(dropout, rng=np.random.default_rng([seed, 1]))),
        ("fc", Dense(2 * hidden, n_classes, rng=rng)),
    )


def lstm_param_count(n_features, hidden, n_classes=8):
    """Closed form: per direction 4h*(d + h + 1), two directions per layer, plus the head."""
    layer1 = 2 * 4 * hidden * (n_features + hidden + 1)
    layer2 = 2 * 4 * hidden * (2 * hidden + hidden + 1)
    return layer1 + layer2 + (2 * hidden * n_classes + n_classes)


def build_resnet(blocks=LITE_BLOCKS, base_width=16, n_classes=8, in_channels=CNN_IN_CHANNELS, seed=0):
    """Stem conv 7x7/2 + max-pool, four residual stages, global average pool, linear head.

    Layer names follow the torchvision ResNet convention (``conv1``,
    ``layer2.0.downsample.0.weight``, ``fc.bias`` ...), so converted
    checkpoints map one-to-one.
    """
    rng = np.random.default_rng(seed)
    layers = [
        ("conv1", Conv2d(in_channels, base_width, 7, 2, 3, rng=rng, input_grad=False)),
        ("bn1", BatchNorm2d(base_width)),
        ("relu", ReLU()),
        ("maxpool", MaxPool2d(3, 2, 1)),
    ]
    in_ch = base_width
    for stage, n_blocks in enumerate(blocks):
        out_ch = base_width * 2 ** stage
        stride = 1 if stage == 0 else 2
        stage_blocks = []
        for b in range(n_blocks):
            stage_blocks.append((str(b), ResidualBlock(in_ch, out_ch, stride if b == 0 else 1, rng=rng)))
            in_ch = out_ch
        layers.append((f"layer{stage + 1}", Sequential(*stage_blocks)))
    layers.append(("avgpool", GlobalAvgPool2d()))
    layers.append(("fc", Dense(in_ch, n_classes, rng=rng)))
    return Sequential(*layers)


def stage_block_counts(net) -> list[int]:
    return [len(list(net[f"layer{i}"])) for i in range(1, 5)]
