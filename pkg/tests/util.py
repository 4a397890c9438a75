"""Small constructors shared by the test modules."""

from metaqa.data import AnswerCandidate, Dataset, Example


def example(qid, cands, gold=("x",), question="who won", dataset="d0"):
    """``cands`` is a list of (agent, answer, conf) or (agent, None) for absent."""
    out = []
    for c in cands:
        if c[1] is None:
            out.append(AnswerCandidate.absent(c[0]))
        else:
            out.append(AnswerCandidate(c[0], c[1], c[2]))
    return Example(qid, question, dataset, tuple(gold), tuple(out))


def dataset(examples, agents, domains=None, split="test", metrics=None):
    return Dataset(tuple(examples), tuple(agents), split, domains or {}, metrics or {})
