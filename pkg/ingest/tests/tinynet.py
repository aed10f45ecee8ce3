"""A small image classifier used as the checkpoint fixture.

Lives in its own module so pickled checkpoints can re-import the class.
"""

import torch.nn as nn


class TinyNet(nn.Module):
    def __init__(self, num_classes: int = 5):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.embed = nn.Flatten()
        self.head = nn.Linear(16, num_classes)

    def forward(self, x):
        return self.head(self.embed(self.features(x)))
