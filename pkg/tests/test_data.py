import json

import pytest
from hypothesis import given, strategies as st

from metaqa.data import (
    FORMAT, SPECIALS, AnswerCandidate, Vocab, build_vocab, dumps_predictions, load_predictions,
    parse_predictions, save_predictions, tokenize,
)
from metaqa.errors import ConfigError, DataError
from util import dataset, example

HEADER = json.dumps({"format": FORMAT, "agents": ["a1", "a2"]})


def line(qid="q1", cands=(("a1", "rocky", 0.9), ("a2", "apollo", 0.2))):
    return json.dumps({
        "qid": qid, "question": "who won", "dataset": "d0", "gold_answers": ["rocky"],
        "candidates": [{"agent": a, "answer": t, "confidence": c} for a, t, c in cands],
    })


def test_tokenize_examples():
    assert tokenize("Tony Gazzo") == ["tony", "gazzo"]
    assert tokenize("") == []
    assert tokenize("Mr Chips, 2002") == ["mr", "chips", ",", "2002"]


@given(st.text(max_size=40))
def test_tokenize_idempotent_on_joined_output(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


def test_build_vocab_examples():
    v = build_vocab(["a a b"], 8)
    assert (v.id("a"), v.id("b")) == (5, 6)
    assert build_vocab([], 8).tokens == SPECIALS
    assert build_vocab(["x y"], 6).tokens[5:] == ("x",)
    assert v.id("never seen") == 1


def test_vocab_specials_fixed():
    v = build_vocab(["q"], 10)
    assert [v.id(t) for t in ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[ANS]")] == [0, 1, 2, 3, 4]
    with pytest.raises(ConfigError):
        build_vocab(["q"], 5)
    with pytest.raises(ConfigError):
        Vocab(("x",) + SPECIALS)


@given(st.lists(st.text(alphabet="abcde ,.", max_size=12), max_size=10), st.integers(6, 30))
def test_vocab_is_bijection(corpus, size):
    v = build_vocab(corpus, size)
    assert len(v) <= size
    assert sorted(v.index.values()) == list(range(len(v)))
    assert all(v.tokens[v.index[t]] == t for t in v.tokens)


def test_candidate_invariants():
    with pytest.raises(DataError):
        AnswerCandidate("a", "x", 1.2)
    with pytest.raises(DataError):
        AnswerCandidate("a", "x", 0.0, present=False)
    c = AnswerCandidate.absent("a")
    assert (c.answer, c.confidence, c.present) == ("", 0.0, False)


def test_parse_in_header_order():
    ds = parse_predictions([HEADER, line(cands=(("a2", "apollo", 0.2), ("a1", "rocky", 0.9)))])
    (ex,) = ds.examples
    assert [c.agent_id for c in ex.candidates] == ["a1", "a2"]
    assert [c.confidence for c in ex.candidates] == [0.9, 0.2]
    assert ds.agent_domains == {"a1": "a1", "a2": "a2"}


@pytest.mark.parametrize(
    "bad, msg",
    [
        (line(cands=(("a1", "rocky", 1.2), ("a2", "x", 0.1))), "outside"),
        (line(cands=(("a1", "rocky", 0.5),)), "no candidate"),
        (line(cands=(("a1", "r", 0.5), ("a2", "x", 0.1), ("ghost", "y", 0.3))), "unregistered"),
        ("{not json", "not JSON"),
    ],
)
def test_parse_errors_name_the_line(bad, msg):
    with pytest.raises(DataError, match=rf"f\.jsonl:3: .*{msg}"):
        parse_predictions([HEADER, line("q0"), bad], source="f.jsonl")


def test_duplicate_qid_rejected():
    with pytest.raises(DataError, match="duplicate"):
        parse_predictions([HEADER, line("q1"), line("q1")])


def test_bad_header():
    with pytest.raises(DataError):
        parse_predictions([json.dumps({"format": "other/9", "agents": ["a"]})])
    with pytest.raises(DataError):
        parse_predictions([])


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_predictions(tmp_path / "nope.jsonl")


confs = st.floats(0, 1, allow_nan=False)
answers = st.one_of(st.none(), st.text(max_size=10))


@given(st.lists(st.tuples(answers, confs, answers, confs), min_size=0, max_size=6))
def test_round_trip_property(rows):
    exs = []
    for i, (t1, c1, t2, c2) in enumerate(rows):
        exs.append(example(
            f"q{i}", [("a1", t1, c1) if t1 is not None else ("a1", None),
                      ("a2", t2, c2) if t2 is not None else ("a2", None)],
            gold=("g", "h"), question="q é ?",
        ))
    ds = dataset(exs, ("a1", "a2"), {"a1": "d0"}, split="dev", metrics={"d0": "em"})
    text = dumps_predictions(ds)
    back = parse_predictions(text.split("\n"))
    assert back == ds
    assert dumps_predictions(back) == text
    assert all(len(ex.candidates) == 2 for ex in back)


def test_file_round_trip_bit_exact(tmp_path):
    ex = example("q", [("a1", "x", 0.1 + 0.2), ("a2", "y", 1 / 3)])
    ds = dataset([ex], ("a1", "a2"))
    save_predictions(ds, tmp_path / "p.jsonl")
    back = load_predictions(tmp_path / "p.jsonl")
    assert back.examples[0].candidates[0].confidence == 0.1 + 0.2
    save_predictions(back, tmp_path / "q.jsonl")
    assert (tmp_path / "p.jsonl").read_bytes() == (tmp_path / "q.jsonl").read_bytes()


def test_dataset_invariants():
    e = example("q", [("a1", "x", 0.1), ("a2", "y", 0.2)])
    with pytest.raises(DataError):
        dataset([e, e], ("a1", "a2"))
    with pytest.raises(DataError):
        dataset([e], ("a2", "a1"))


def test_ablate_nulls_candidates():
    ds = dataset([example("q", [("a1", "x", 0.1), ("a2", "y", 0.2)])], ("a1", "a2"))
    (ex,) = ds.ablate(["a2"]).examples
    assert ex.present == [True, False]
    assert ds.examples[0].present == [True, True]
