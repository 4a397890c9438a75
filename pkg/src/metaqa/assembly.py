"""Encoder input layout: ``[CLS] question [SEP] [ANS] ans_1 ... [ANS] ans_k``.

Absent (nulled) candidates contribute no tokens. Each present candidate's
span covers its ``[ANS]`` token plus its answer tokens, and every position in
the span carries that candidate's confidence; all other positions carry 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ANS_ID, CLS_ID, PAD_ID, SEP_ID, Example, Vocab, tokenize
from .errors import AssemblyError

MIN_MAX_LEN = 8


@dataclass(frozen=True, eq=False)
class EncoderInput:
    token_ids: np.ndarray
    position_ids: np.ndarray
    segment_ids: np.ndarray
    confidence_values: np.ndarray
    attention_mask: np.ndarray
    cls_index: int
    ans_spans: tuple[tuple[int, int] | None, ...]  # per slot [start, end) or None
    length: int
    max_len: int

    @property
    def k(self) -> int:
        return len(self.ans_spans)

    @property
    def present(self) -> list[bool]:
        return [s is not None for s in self.ans_spans]

    def same_as(self, other: "EncoderInput") -> bool:
        arrays = ("token_ids", "position_ids", "segment_ids", "confidence_values", "attention_mask")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and (self.cls_index, self.ans_spans, self.length, self.max_len)
            == (other.cls_index, other.ans_spans, other.length, other.max_len)
        )


def _truncate(answers: list[list[int] | None], budget: int) -> None:
    """Drop trailing tokens from the longest answer until the total fits."""
    total = sum(len(a) for a in answers if a is not None)
    while total > budget:
        j = max(
            (i for i, a in enumerate(answers) if a),
            key=lambda i: (len(answers[i]), -i),
        )
        answers[j].pop()
        total -= 1


def assemble(example: Example, vocab: Vocab, max_len: int) -> EncoderInput:
    if max_len < MIN_MAX_LEN:
        raise AssemblyError(f"max_len must be >= {MIN_MAX_LEN}, got {max_len}")
    if not example.candidates:
        raise AssemblyError(f"{example.qid}: no candidates")
    q = vocab.encode(tokenize(example.question))
    head = 2 + len(q)
    if head > max_len:
        raise AssemblyError(
            f"{example.qid}: question needs {head} positions, max_len is {max_len}"
        )
    answers = [
        vocab.encode(tokenize(c.answer)) if c.present else None for c in example.candidates
    ]
    n_present = sum(a is not None for a in answers)
    if head + n_present > max_len:
        raise AssemblyError(
            f"{example.qid}: no room for {n_present} [ANS] tokens after the question"
        )
    _truncate(answers, max_len - head - n_present)

    tokens = [CLS_ID, *q, SEP_ID]
    conf = [0.0] * len(tokens)
    spans: list[tuple[int, int] | None] = []
    for cand, ans in zip(example.candidates, answers):
        if ans is None:
            spans.append(None)
            continue
        start = len(tokens)
        tokens += [ANS_ID, *ans]
        conf += [cand.confidence] * (len(ans) + 1)
        spans.append((start, len(tokens)))

    length = len(tokens)
    pad = max_len - length
    segments = [0] * head + [1] * (length - head) + [0] * pad
    return EncoderInput(
        token_ids=np.array(tokens + [PAD_ID] * pad, dtype=np.int64),
        position_ids=np.arange(max_len, dtype=np.int64),
        segment_ids=np.array(segments, dtype=np.int64),
        confidence_values=np.array(conf + [0.0] * pad, dtype=np.float64),
        attention_mask=np.array([1] * length + [0] * pad, dtype=np.int64),
        cls_index=0,
        ans_spans=tuple(spans),
        length=length,
        max_len=max_len,
    )


def ans_index_map(inp: EncoderInput) -> dict[int, list[int]]:
    """Slot -> positions covered by ``[ANS] answer`` (present slots only)."""
    return {j: list(range(*s)) for j, s in enumerate(inp.ans_spans) if s is not None}


@dataclass(frozen=True, eq=False)
class Batch:
    """Stacked inputs trimmed to the longest live length in the batch."""

    token_ids: np.ndarray  # [B, T]
    position_ids: np.ndarray
    segment_ids: np.ndarray
    confidence_values: np.ndarray
    attention_mask: np.ndarray
    cls_index: np.ndarray  # [B]
    ans_pos: np.ndarray  # [B, k]; 0 for absent slots
    present: np.ndarray  # [B, k] bool

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def collate(inputs: list[EncoderInput]) -> Batch:
    if not inputs:
        raise AssemblyError("cannot collate an empty batch")
    T = max(i.length for i in inputs)
    k = inputs[0].k
    ans_pos = np.zeros((len(inputs), k), dtype=np.int64)
    present = np.zeros((len(inputs), k), dtype=bool)
    for b, inp in enumerate(inputs):
        for j, span in enumerate(inp.ans_spans):
            if span is not None:
                ans_pos[b, j] = span[0]
                present[b, j] = True
    return Batch(
        token_ids=np.stack([i.token_ids[:T] for i in inputs]),
        position_ids=np.stack([i.position_ids[:T] for i in inputs]),
        segment_ids=np.stack([i.segment_ids[:T] for i in inputs]),
        confidence_values=np.stack([i.confidence_values[:T] for i in inputs]),
        attention_mask=np.stack([i.attention_mask[:T] for i in inputs]),
        cls_index=np.array([i.cls_index for i in inputs], dtype=np.int64),
        ans_pos=ans_pos,
        present=present,
    )
