"""Synthetic multi-domain benchmarks with simulated expert agents.

Every domain owns a private pseudo-word vocabulary (question style words and
answer words) generated from its ``vocab_seed``, so questions from different
domains are distinguishable by surface statistics. Each question embeds a cue
word chosen by hashing its gold answer. Agents answer correctly with a
per-domain probability and report a confidence from a logistic calibration
model; each (agent, question) pair draws from its own random stream, so
nulling or adding one agent never shifts another agent's outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import rng as R
from .data import AnswerCandidate, Dataset, Example, save_predictions
from .errors import ConfigError
from .heads import LabelConfig, make_labels

SPLITS = ("train", "dev", "test")
_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")


@dataclass(frozen=True)
class DomainSpec:
    id: str
    template: tuple[str, ...] = ("what",)  # wh-words the domain's questions open with
    vocab_seed: int = 0
    answer_len: tuple[float, ...] = (0.3, 0.3, 0.2, 0.1, 0.05, 0.05)  # P(len = 1..6)
    sizes: Mapping[str, int] = field(default_factory=lambda: {"train": 100, "dev": 20, "test": 20})
    n_style_words: int = 40
    n_answer_words: int = 200
    filler_len: tuple[int, int] = (3, 6)

    def __post_init__(self):
        if not self.template:
            raise ConfigError(f"domain {self.id}: empty template")
        if len(self.answer_len) != 6 or any(p < 0 for p in self.answer_len) or sum(self.answer_len) <= 0:
            raise ConfigError(f"domain {self.id}: answer_len needs 6 nonnegative weights")


@dataclass(frozen=True)
class Calibration:
    slope: float = 2.0
    bias: float = 0.0
    jitter: float = 0.1


@dataclass(frozen=True)
class AgentProfile:
    id: str
    home: str
    accuracy: Mapping[str, float]
    boundary_noise: float = 0.0
    calibration: Calibration = Calibration()

    def __post_init__(self):
        probs = list(self.accuracy.values()) + [self.boundary_noise]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError(f"agent {self.id}: probabilities must lie in [0, 1]")

    def confidence(self, correct: bool, u: float) -> float:
        """``sigmoid(slope * z + bias) + jitter * u`` clamped to [0, 1]; ``u`` in [-1, 1]."""
        z = 1.0 if correct else -1.0
        base = 1.0 / (1.0 + np.exp(-(self.calibration.slope * z + self.calibration.bias)))
        return float(min(1.0, max(0.0, base + self.calibration.jitter * u)))


@dataclass(frozen=True)
class BenchmarkSpec:
    domains: tuple[DomainSpec, ...]
    agents: tuple[AgentProfile, ...]
    metrics: Mapping[str, str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        ids = [d.id for d in self.domains]
        if len(set(ids)) != len(ids):
            raise ConfigError("domain ids must be unique")
        agent_ids = [a.id for a in self.agents]
        if len(set(agent_ids)) != len(agent_ids):
            raise ConfigError("agent ids must be unique")
        for a in self.agents:
            if a.home not in ids:
                raise ConfigError(f"agent {a.id}: home domain {a.home!r} is not a benchmark domain")

    @property
    def agent_domains(self) -> dict[str, str]:
        return {a.id: a.home for a in self.agents}

    def to_dict(self) -> dict:
        d = asdict(self)
        for dom in d["domains"]:
            dom["sizes"] = dict(dom["sizes"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "BenchmarkSpec":
        try:
            domains = tuple(
                DomainSpec(
                    **{
                        **dom,
                        "template": tuple(dom.get("template", ("what",))),
                        "answer_len": tuple(dom.get("answer_len", DomainSpec.answer_len)),
                        "filler_len": tuple(dom.get("filler_len", DomainSpec.filler_len)),
                        "sizes": dict(dom.get("sizes", {"train": 100, "dev": 20, "test": 20})),
                    }
                )
                for dom in d["domains"]
            )
            agents = tuple(
                AgentProfile(
                    id=a["id"],
                    home=a["home"],
                    accuracy=dict(a["accuracy"]),
                    boundary_noise=float(a.get("boundary_noise", 0.0)),
                    calibration=Calibration(**a.get("calibration", {})),
                )
                for a in d["agents"]
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad benchmark spec: {exc}") from None
        return cls(domains, agents, dict(d.get("metrics", {})), int(d.get("seed", 0)))

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not JSON ({exc})") from None


def _word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))


@dataclass(frozen=True)
class DomainPool:
    """Materialized vocabulary of one domain."""

    spec: DomainSpec
    style_words: tuple[str, ...]
    answer_words: tuple[str, ...]

    @classmethod
    def build(cls, spec: DomainSpec) -> "DomainPool":
        rng = np.random.default_rng(R.derive_seed(spec.vocab_seed, "domain", spec.id))

        def unique(n: int, syl: int, taken: set[str]) -> tuple[str, ...]:
            words: list[str] = []
            while len(words) < n:
                w = _word(rng, syl)
                if w not in taken:
                    taken.add(w)
                    words.append(w)
            return tuple(words)

        taken: set[str] = set()
        # style words are 2 syllables, answer words 3, so the two sets never collide
        return cls(spec, unique(spec.n_style_words, 2, taken), unique(spec.n_answer_words, 3, taken))

    def sample_answer(self, rng: np.random.Generator, exclude: Sequence[str] = ()) -> list[str]:
        p = np.asarray(self.spec.answer_len, dtype=np.float64)
        n = int(rng.choice(6, p=p / p.sum())) + 1
        pool = [w for w in self.answer_words if w not in set(exclude)] if exclude else self.answer_words
        return [str(w) for w in rng.choice(pool, size=n, replace=False)]

    def question(self, rng: np.random.Generator, gold: str) -> str:
        lo, hi = self.spec.filler_len
        n = int(rng.integers(lo, hi + 1))
        wh = str(rng.choice(self.spec.template))
        fillers = [str(w) for w in rng.choice(self.style_words, size=n)]
        h = int.from_bytes(hashlib.sha256(gold.encode()).digest()[:4], "big")
        cue = self.style_words[h % len(self.style_words)]
        return " ".join([wh, *fillers, cue]) + " ?"


def simulate_agent(
    profile: AgentProfile,
    example: Example,
    rng: np.random.Generator,
    pool: DomainPool,
) -> AnswerCandidate:
    """One agent's (answer, confidence) for ``example``.

    With probability ``accuracy[domain]`` the agent returns the gold answer,
    which with probability ``boundary_noise`` loses or gains one token at an
    edge. Otherwise it returns a same-domain distractor sharing no token with
    the gold. The calibration sign follows the branch taken, so a boundary
    error keeps the confidence of a correct answer.
    """
    try:
        acc = profile.accuracy[example.dataset_id]
    except KeyError:
        raise ConfigError(
            f"agent {profile.id} has no accuracy for domain {example.dataset_id!r}"
        ) from None
    gold = example.gold_answers[0].split()
    correct = bool(rng.random() < acc)
    if correct:
        tokens = list(gold)
        if rng.random() < profile.boundary_noise:
            if len(tokens) > 1 and rng.random() < 0.5:
                tokens = tokens[1:] if rng.random() < 0.5 else tokens[:-1]
            else:
                extra = str(rng.choice(pool.answer_words))
                tokens = [extra, *tokens] if rng.random() < 0.5 else [*tokens, extra]
    else:
        tokens = pool.sample_answer(rng, exclude=gold)
    u = float(rng.uniform(-1.0, 1.0))
    return AnswerCandidate(profile.id, " ".join(tokens), profile.confidence(correct, u))


def generate_split(spec: BenchmarkSpec, split: str, seed: int) -> Dataset:
    if not spec.domains:
        raise ConfigError("benchmark has no domains")
    pools = {d.id: DomainPool.build(d) for d in spec.domains}
    raw: list[tuple[str, str, str, str]] = []
    for dom in spec.domains:
        q_rng = R.stream(seed, "questions", split, dom.id)
        for i in range(int(dom.sizes.get(split, 0))):
            gold = " ".join(pools[dom.id].sample_answer(q_rng))
            question = pools[dom.id].question(q_rng, gold)
            raw.append((f"{split}-{dom.id}-{i:06d}", question, dom.id, gold))
    order = R.stream(seed, "order", split).permutation(len(raw))

    examples = []
    for idx in order:
        qid, question, dom_id, gold = raw[idx]
        stub = Example(qid, question, dom_id, (gold,), ())
        cands = tuple(
            simulate_agent(a, stub, R.stream(seed, "agent", a.id, qid), pools[dom_id])
            for a in spec.agents
        )
        examples.append(Example(qid, question, dom_id, (gold,), cands))
    return Dataset(
        tuple(examples),
        tuple(a.id for a in spec.agents),
        split=split,
        agent_domains=spec.agent_domains,
        metrics=dict(spec.metrics),
    )


def generate_benchmark(
    spec: BenchmarkSpec,
    seed: int | None = None,
    out_dir: str | Path | None = None,
) -> dict[str, Dataset]:
    """Generate train/dev/test splits; optionally write ``<split>.jsonl`` files."""
    seed = spec.seed if seed is None else seed
    sim_seed = R.derive_seed(seed, "simulator")
    splits = {s: generate_split(spec, s, sim_seed) for s in SPLITS}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, ds in splits.items():
            save_predictions(ds, out / f"{name}.jsonl")
        (out / "benchmark.json").write_text(
            json.dumps({**spec.to_dict(), "seed": seed}, indent=2) + "\n", encoding="utf-8"
        )
    return splits


def describe_oracle(dataset: Dataset, theta: float = 0.7) -> dict[str, float]:
    """Per dataset id: fraction of examples where no candidate is labeled correct."""
    cfg = LabelConfig(theta)
    totals: dict[str, int] = {}
    unsolved: dict[str, int] = {}
    for ex in dataset:
        lab = make_labels(ex, dataset.agent_domains, cfg)
        totals[ex.dataset_id] = totals.get(ex.dataset_id, 0) + 1
        unsolved[ex.dataset_id] = unsolved.get(ex.dataset_id, 0) + int(lab.anssel.sum() == 0)
    return {d: unsolved[d] / totals[d] for d in sorted(totals)}


def unsolvable_rate(dataset: Dataset, theta: float = 0.7) -> float:
    cfg = LabelConfig(theta)
    n = sum(int(make_labels(ex, dataset.agent_domains, cfg).anssel.sum() == 0) for ex in dataset)
    return n / len(dataset) if len(dataset) else 0.0


# -- stock benchmarks ---------------------------------------------------------


def standard_benchmark(
    train_per_domain: int = 5000,
    dev_per_domain: int = 250,
    test_per_domain: int = 500,
    seed: int = 0,
) -> BenchmarkSpec:
    """Four domains, four in-domain experts at 0.9, one weak minority-domain expert.

    ``film`` is the minority domain: its own agent is right 40% of the time
    while the ``news`` agent, positively calibrated, is right 70% of the time
    there. The ``trivia`` agent is overconfident everywhere, which misleads a
    plain confidence argmax.
    """
    sizes = {"train": train_per_domain, "dev": dev_per_domain, "test": test_per_domain}
    domains = (
        DomainSpec("wiki", ("what", "which", "who"), vocab_seed=11, sizes=sizes),
        DomainSpec("news", ("who", "what", "where"), vocab_seed=12, sizes=sizes),
        DomainSpec("trivia", ("which", "this", "what"), vocab_seed=13, sizes=sizes),
        DomainSpec("film", ("who", "whom"), vocab_seed=14, sizes=sizes),
    )
    good = Calibration(slope=2.0, bias=0.0, jitter=0.1)
    agents = (
        AgentProfile("wiki_agent", "wiki",
                     {"wiki": 0.9, "news": 0.3, "trivia": 0.3, "film": 0.2}, 0.1, good),
        AgentProfile("news_agent", "news",
                     {"wiki": 0.3, "news": 0.9, "trivia": 0.2, "film": 0.7}, 0.1, good),
        AgentProfile("trivia_agent", "trivia",
                     {"wiki": 0.3, "news": 0.2, "trivia": 0.9, "film": 0.2}, 0.1,
                     Calibration(slope=0.4, bias=2.0, jitter=0.05)),
        AgentProfile("film_agent", "film",
                     {"wiki": 0.2, "news": 0.2, "trivia": 0.2, "film": 0.4}, 0.1, good),
    )
    return BenchmarkSpec(domains, agents, {d.id: "f1" for d in domains}, seed)


def separable_benchmark(train_per_domain: int = 150, test_per_domain: int = 50, seed: int = 0) -> BenchmarkSpec:
    """Two domains, perfectly calibrated agents: right in-domain, wrong elsewhere."""
    sizes = {"train": train_per_domain, "dev": test_per_domain, "test": test_per_domain}
    domains = (
        DomainSpec("alpha", ("what",), vocab_seed=1, sizes=sizes),
        DomainSpec("beta", ("who",), vocab_seed=2, sizes=sizes),
    )
    cal = Calibration(slope=3.0, bias=0.0, jitter=0.0)
    agents = (
        AgentProfile("alpha_agent", "alpha", {"alpha": 1.0, "beta": 0.0}, 0.0, cal),
        AgentProfile("beta_agent", "beta", {"alpha": 0.0, "beta": 1.0}, 0.0, cal),
    )
    return BenchmarkSpec(domains, agents, {}, seed)
