"""End-to-end grounding network and batch preparation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tensor
from .baca import BacaParams, baca_forward
from .dggf import DGGFBlock
from .head import HeadNet, HeadOutput, Targets, build_targets, head_forward
from .layers import Module
from .pillars import FPN, Backbone, GridSpec, PillarEncoder, PillarSet, pillarize
from .scenes import Scene, prompt_corpus, with_pointclouds
from .text import TextEncoder, Vocabulary


@dataclass(frozen=True)
class ModelConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    pillar_channels: int = 32
    agent_size: tuple[int, int] = (12, 12)
    graph_steps: tuple[int, int, int] = (8, 4, 2)
    gate_pool: str = "max"
    graph_mode: str = "dynamic"
    anchor_mode: str = "edge"
    merge: str = "sum"
    use_pe: bool = True
    head_hidden: int | None = None
    seed: int = 0

    @classmethod
    def reduced(cls, **kw) -> "ModelConfig":
        """C3 = 16 on a 40x40 stage-3 grid; 6x6 agents so every stage keeps l < L."""
        base = cls(grid=GridSpec.reduced(), pillar_channels=16, agent_size=(6, 6))
        return replace(base, **kw)

    @property
    def text_width(self) -> int:
        return self.grid.stage_channels[0]


@dataclass
class Batch:
    lidar: list[PillarSet]
    radar: list[PillarSet]
    tokens: np.ndarray  # (N, 30)
    targets: list[Targets] | None = None

    def __len__(self) -> int:
        return len(self.lidar)


def default_vocabulary() -> Vocabulary:
    return Vocabulary.from_corpus(prompt_corpus())


class GroundingNet(Module):
    def __init__(self, config: ModelConfig, vocab: Vocabulary | None = None):
        self.config = config
        rng = np.random.default_rng(config.seed)
        g = config.grid
        chans = g.stage_channels
        self.text = TextEncoder(vocab or default_vocabulary(), config.text_width, rng)
        self.lidar_pillars = PillarEncoder("lidar", config.pillar_channels, rng)
        self.radar_pillars = PillarEncoder("radar", config.pillar_channels, rng)
        self.lidar_backbone = Backbone(config.pillar_channels, chans, rng)
        self.radar_backbone = Backbone(config.pillar_channels, chans, rng)
        self.fusion = [BacaParams(c, rng, config.agent_size, config.use_pe, config.merge) for c in chans]
        self.dggf = [DGGFBlock(config.text_width, c, k, rng, config.gate_pool, config.graph_mode)
                     for c, k in zip(chans, config.graph_steps)]
        self.fpn = FPN(chans, rng)
        self.head = HeadNet(self.fpn.out_channels, config.head_hidden or self.fpn.out_channels, rng)

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = super().parameters(prefix)
        out.update(self.text.parameters())
        return out

    def forward(self, batch: Batch) -> HeadOutput:
        g = self.config.grid
        f_t = self.text.embed(batch.tokens)
        fl = self.lidar_backbone(self.lidar_pillars(batch.lidar, g))
        fr = self.radar_backbone(self.radar_pillars(batch.radar, g))
        lc = []
        for a, b, fuse, block in zip(fl, fr, self.fusion, self.dggf):
            lr = baca_forward(a, b, fuse)
            lc.append(block(f_t, lr))
        return head_forward(self.fpn(lc), self.head)


def prepare_batch(scenes: list[Scene], config: ModelConfig, vocab: Vocabulary,
                  with_targets: bool = True) -> Batch:
    g = config.grid
    lidar, radar, tokens, targets = [], [], [], []
    for s in scenes:
        s = with_pointclouds(s)
        lidar.append(pillarize(s.lidar, g, "lidar", seed=s.seed))
        radar.append(pillarize(s.radar, g, "radar", seed=s.seed))
        tokens.append(vocab.tokenize(s.prompt))
        if with_targets:
            targets.append(build_targets(s.referred_boxes(), g, config.anchor_mode))
    return Batch(lidar, radar, np.stack(tokens), targets if with_targets else None)
