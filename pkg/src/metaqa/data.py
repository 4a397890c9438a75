"""Examples, vocabulary, tokenizer and the agent-prediction JSONL format.

File layout (UTF-8, one JSON object per line)::

    {"format": "metaqa-preds/1", "agents": ["a1", "a2"], ...optional header keys}
    {"qid": ..., "question": ..., "dataset": ..., "gold_answers": [...],
     "candidates": [{"agent": "a2", "answer": ..., "confidence": ...}, ...]}

Optional header keys: ``split``, ``agent_domains`` (agent id -> the dataset id
it was trained on; defaults to the agent id itself) and ``metrics`` (dataset
id -> metric name). A candidate with ``"answer": null`` is a nulled
prediction.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import ConfigError, DataError

FORMAT = "metaqa-preds/1"

PAD, UNK, CLS, SEP, ANS = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[ANS]"
SPECIALS = (PAD, UNK, CLS, SEP, ANS)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, ANS_ID = range(5)

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase; words split on whitespace; each punctuation mark is its own token."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class AnswerCandidate:
    agent_id: str
    answer: str
    confidence: float
    present: bool = True

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1] for {self.agent_id}")
        if not self.present and (self.answer or self.confidence):
            raise DataError(f"absent candidate of {self.agent_id} must be empty with confidence 0")

    @classmethod
    def absent(cls, agent_id: str) -> "AnswerCandidate":
        return cls(agent_id, "", 0.0, present=False)


@dataclass(frozen=True)
class Example:
    qid: str
    question: str
    dataset_id: str
    gold_answers: tuple[str, ...]
    candidates: tuple[AnswerCandidate, ...]

    def __post_init__(self):
        if not self.gold_answers:
            raise DataError(f"{self.qid}: gold_answers must be nonempty")

    @property
    def present(self) -> list[bool]:
        return [c.present for c in self.candidates]

    def ablate(self, agent_ids: Iterable[str]) -> "Example":
        drop = set(agent_ids)
        if not drop:
            return self
        cands = tuple(
            AnswerCandidate.absent(c.agent_id) if c.agent_id in drop else c
            for c in self.candidates
        )
        return replace(self, candidates=cands)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIALS:
            raise ConfigError("vocab must start with the five special tokens")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise ConfigError("vocab tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocab:
    if max_size <= len(SPECIALS):
        raise ConfigError(f"max_size must exceed {len(SPECIALS)}")
    counts = Counter(tok for text in corpus for tok in tokenize(text))
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocab(SPECIALS + tuple(ranked[: max_size - len(SPECIALS)]))


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    agents: tuple[str, ...]
    split: str = "test"
    agent_domains: Mapping[str, str] = field(default_factory=dict)
    metrics: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[str] = set()
        for ex in self.examples:
            if ex.qid in seen:
                raise DataError(f"duplicate qid {ex.qid!r} in split {self.split!r}")
            seen.add(ex.qid)
            if tuple(c.agent_id for c in ex.candidates) != self.agents:
                raise DataError(f"{ex.qid}: candidates do not follow agent order {self.agents}")
        doms = {a: self.agent_domains.get(a, a) for a in self.agents}
        object.__setattr__(self, "agent_domains", doms)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def k(self) -> int:
        return len(self.agents)

    def home_domain(self, agent: str) -> str:
        return self.agent_domains[agent]

    def subset(self, indices: Sequence[int], split: str | None = None) -> "Dataset":
        return replace(
            self, examples=tuple(self.examples[i] for i in indices), split=split or self.split
        )

    def ablate(self, agent_ids: Iterable[str]) -> "Dataset":
        drop = set(agent_ids)
        return replace(self, examples=tuple(ex.ablate(drop) for ex in self.examples))

    def dataset_ids(self) -> list[str]:
        return sorted({ex.dataset_id for ex in self.examples})


def _header(ds: Dataset) -> dict:
    return {
        "format": FORMAT,
        "agents": list(ds.agents),
        "split": ds.split,
        "agent_domains": dict(ds.agent_domains),
        "metrics": dict(ds.metrics),
    }


def example_to_json(ex: Example) -> dict:
    return {
        "qid": ex.qid,
        "question": ex.question,
        "dataset": ex.dataset_id,
        "gold_answers": list(ex.gold_answers),
        "candidates": [
            {
                "agent": c.agent_id,
                "answer": c.answer if c.present else None,
                "confidence": c.confidence,
            }
            for c in ex.candidates
        ],
    }


def dumps_predictions(ds: Dataset) -> str:
    lines = [json.dumps(_header(ds), ensure_ascii=False)]
    lines.extend(json.dumps(example_to_json(ex), ensure_ascii=False) for ex in ds)
    return "\n".join(lines) + "\n"


def save_predictions(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_predictions(ds), encoding="utf-8")


def _parse_example(obj: dict, agents: tuple[str, ...], where: str) -> Example:
    try:
        qid = str(obj["qid"])
        question = str(obj["question"])
        dataset_id = str(obj["dataset"])
        golds = obj["gold_answers"]
        raw = obj["candidates"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{where}: missing field {exc}") from None
    if not isinstance(golds, list) or not golds:
        raise DataError(f"{where}: gold_answers must be a nonempty list")
    by_agent: dict[str, AnswerCandidate] = {}
    for c in raw:
        try:
            agent = str(c["agent"])
            answer = c.get("answer")
            conf = float(c.get("confidence", 0.0))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"{where}: bad candidate entry {c!r} ({exc})") from None
        if agent not in agents:
            raise DataError(f"{where}: candidate from unregistered agent {agent!r}")
        if agent in by_agent:
            raise DataError(f"{where}: two candidates from agent {agent!r}")
        if not 0.0 <= conf <= 1.0:
            raise DataError(f"{where}: confidence {conf} of agent {agent!r} outside [0, 1]")
        if answer is None:
            if conf != 0.0:
                raise DataError(f"{where}: nulled candidate of {agent!r} has confidence {conf}")
            by_agent[agent] = AnswerCandidate.absent(agent)
        else:
            by_agent[agent] = AnswerCandidate(agent, str(answer), conf)
    missing = [a for a in agents if a not in by_agent]
    if missing:
        raise DataError(f"{where}: no candidate for agent(s) {missing}")
    return Example(
        qid, question, dataset_id, tuple(str(g) for g in golds),
        tuple(by_agent[a] for a in agents),
    )


def parse_predictions(lines: Iterable[str], source: str = "<predictions>") -> Dataset:
    it = iter(enumerate(lines, 1))
    try:
        _, first = next(it)
    except StopIteration:
        raise DataError(f"{source}: empty file, expected a header line") from None
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}:1: header is not JSON ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise DataError(f"{source}:1: header must declare format {FORMAT!r}")
    agents = header.get("agents")
    if not isinstance(agents, list) or not agents or len(set(agents)) != len(agents):
        raise DataError(f"{source}:1: header needs a nonempty list of distinct agents")
    agents_t = tuple(str(a) for a in agents)
    domains = header.get("agent_domains") or {}
    unknown = set(domains) - set(agents_t)
    if unknown:
        raise DataError(f"{source}:1: agent_domains names unknown agents {sorted(unknown)}")

    examples: list[Example] = []
    seen: set[str] = set()
    for lineno, line in it:
        if not line.strip():
            continue
        where = f"{source}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: not JSON ({exc})") from None
        ex = _parse_example(obj, agents_t, where)
        if ex.qid in seen:
            raise DataError(f"{where}: duplicate qid {ex.qid!r}")
        seen.add(ex.qid)
        examples.append(ex)
    return Dataset(
        tuple(examples),
        agents_t,
        split=str(header.get("split", "test")),
        agent_domains={str(k): str(v) for k, v in domains.items()},
        metrics={str(k): str(v) for k, v in (header.get("metrics") or {}).items()},
    )


def load_predictions(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"prediction file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        return parse_predictions(fh, source=str(path))
