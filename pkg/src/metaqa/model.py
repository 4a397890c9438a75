"""The full answer selector: encoder + agent-selection heads + answer-selection head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as E
from .assembly import Batch, EncoderInput, assemble, collate
from .data import Example, Vocab
from .heads import agsen_scores, anssel_logits, init_heads
from .tensor import Tensor


@dataclass
class ModelOutput:
    agsen_probs: Tensor  # [B, k]
    logits: Tensor  # [B, k], absent slots -inf
    hidden: Tensor | None = None


@dataclass
class MetaQAModel:
    config: E.EncoderConfig
    agents: tuple[str, ...]
    agent_domains: dict[str, str]
    vocab: Vocab
    params: dict[str, Tensor] = field(default_factory=dict)
    disable_conf_emb: bool = False

    @classmethod
    def create(
        cls,
        config: E.EncoderConfig,
        agents,
        agent_domains: dict[str, str],
        vocab: Vocab,
        rng: np.random.Generator,
        disable_conf_emb: bool = False,
    ) -> "MetaQAModel":
        params = E.init_encoder(config, rng)
        params.update(init_heads(config.hidden, len(agents), rng, config.init_std))
        return cls(config, tuple(agents), dict(agent_domains), vocab, params, disable_conf_emb)

    @property
    def k(self) -> int:
        return len(self.agents)

    def assemble(self, example: Example) -> EncoderInput:
        return assemble(example, self.vocab, self.config.max_len)

    def forward(
        self,
        batch: Batch,
        dropout_rng: np.random.Generator | None = None,
        keep_hidden: bool = False,
        agsen_feature: np.ndarray | None = None,
    ) -> ModelOutput:
        """``agsen_feature`` replaces the (detached) scores fed to answer selection.

        Holding it fixed makes the function seen by finite differences match the
        stop-gradient graph that backpropagation differentiates.
        """
        h0 = E.embed(batch, self.params, disable_conf=self.disable_conf_emb)
        hl = E.encode(h0, batch, self.params, self.config, rng=dropout_rng)
        cls_vec, ans = E.extract(hl, batch)
        probs = agsen_scores(cls_vec, self.params)
        feat = probs if agsen_feature is None else Tensor(agsen_feature)
        logits = anssel_logits(ans, feat, batch.present, self.params)
        return ModelOutput(probs, logits, hl if keep_hidden else None)

    def predict(self, inputs: list[EncoderInput]) -> ModelOutput:
        """Dropout-free forward; gradients are not tracked for the result."""
        out = self.forward(collate(inputs))
        return ModelOutput(out.agsen_probs.detach(), out.logits.detach())

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}
