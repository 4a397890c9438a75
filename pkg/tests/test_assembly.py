import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaqa.assembly import ans_index_map, assemble, collate
from metaqa.data import ANS_ID, CLS_ID, PAD_ID, SEP_ID, build_vocab
from metaqa.errors import AssemblyError
from util import example

VOCAB = build_vocab(["who won rocky apollo a b c d e f g h"], 64)
AGENTS = ("a1", "a2")


def rocky(absent_second=False):
    second = ("a2", None) if absent_second else ("a2", "apollo", 0.2)
    return example("q", [("a1", "rocky", 0.9), second], question="who won")


def toks(*words):
    return [VOCAB.id(w) for w in words]


def test_layout_example():
    inp = assemble(rocky(), VOCAB, 8)
    assert inp.token_ids.tolist() == [CLS_ID, *toks("who", "won"), SEP_ID, ANS_ID,
                                      *toks("rocky"), ANS_ID, *toks("apollo")]
    assert inp.segment_ids.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
    assert inp.confidence_values.tolist() == [0, 0, 0, 0, 0.9, 0.9, 0.2, 0.2]
    assert inp.position_ids.tolist() == list(range(8))
    assert inp.cls_index == 0
    assert ans_index_map(inp) == {0: [4, 5], 1: [6, 7]}


def test_absent_candidate_contributes_nothing():
    inp = assemble(rocky(absent_second=True), VOCAB, 8)
    assert inp.length == 6
    assert inp.ans_spans[1] is None
    assert ans_index_map(inp) == {0: [4, 5]}
    assert inp.token_ids[6:].tolist() == [PAD_ID, PAD_ID]


def test_padding():
    inp = assemble(rocky(), VOCAB, 10)
    assert inp.token_ids[-2:].tolist() == [PAD_ID, PAD_ID]
    assert inp.attention_mask.tolist() == [1] * 8 + [0, 0]
    assert inp.segment_ids[-2:].tolist() == [0, 0]


def test_empty_answer_span_is_only_the_marker():
    ex = example("q", [("a1", "", 0.3), ("a2", "rocky", 0.1)])
    assert ans_index_map(assemble(ex, VOCAB, 16))[0] == [4]


def test_all_absent_gives_empty_map():
    ex = example("q", [("a1", None), ("a2", None)])
    assert ans_index_map(assemble(ex, VOCAB, 16)) == {}


def test_question_never_truncated():
    ex = example("q", [("a1", "a", 0.1)], question="a b c d e f g h")
    with pytest.raises(AssemblyError, match="question"):
        assemble(ex, VOCAB, 9)
    with pytest.raises(AssemblyError):
        assemble(rocky(), VOCAB, 7)


def test_longest_answer_truncated_first_keeping_marker():
    ex = example("q", [("a1", "a b c d e", 0.5), ("a2", "f g", 0.4)], question="who")
    inp = assemble(ex, VOCAB, 3 + 2 + 4)  # [CLS] who [SEP] + two markers + 4 answer tokens
    spans = ans_index_map(inp)
    assert [len(spans[0]), len(spans[1])] == [3, 3]
    assert inp.token_ids[spans[0][0]] == ANS_ID and inp.token_ids[spans[1][0]] == ANS_ID
    # budget 3: "a b c d e" shrinks to 2, then the 2-2 tie trims the lower slot
    tight = assemble(ex, VOCAB, 8)
    assert [len(s) for s in ans_index_map(tight).values()] == [2, 3]


word = st.sampled_from(list("abcdefgh") + ["rocky", "who"])
phrase = st.lists(word, max_size=6).map(" ".join)
cand = st.one_of(st.none(), st.tuples(phrase, st.floats(0.0, 1.0)))


@given(st.lists(cand, min_size=1, max_size=4), st.integers(10, 30))
def test_assembly_invariants(cands, max_len):
    ex = example("q", [(f"a{i}", None) if c is None else (f"a{i}", c[0], c[1])
                       for i, c in enumerate(cands)], question="who won")
    inp = assemble(ex, VOCAB, max_len)
    assert all(len(a) == max_len for a in (inp.token_ids, inp.position_ids, inp.segment_ids,
                                           inp.confidence_values, inp.attention_mask))
    covered = {i for pos in ans_index_map(inp).values() for i in pos}
    nonzero = set(np.flatnonzero(inp.confidence_values).tolist())
    assert nonzero <= covered
    assert int((inp.token_ids == ANS_ID).sum()) == sum(c is not None for c in cands)
    sep = int(np.flatnonzero(inp.token_ids == SEP_ID)[0])
    live = inp.segment_ids[: inp.length]
    assert live[: sep + 1].tolist() == [0] * (sep + 1)
    assert live[sep + 1:].tolist() == [1] * (inp.length - sep - 1)
    starts = [s[0] for s in inp.ans_spans if s is not None]
    assert starts == sorted(starts)
    for s in inp.ans_spans:
        if s is not None:
            assert inp.token_ids[s[0]] == ANS_ID
    assert assemble(ex, VOCAB, max_len).same_as(inp)


def test_collate_trims_and_marks_slots():
    a = assemble(rocky(), VOCAB, 16)
    b = assemble(rocky(absent_second=True), VOCAB, 16)
    batch = collate([a, b])
    assert batch.token_ids.shape == (2, 8)
    assert batch.ans_pos.tolist() == [[4, 6], [4, 0]]
    assert batch.present.tolist() == [[True, True], [True, False]]
    with pytest.raises(AssemblyError):
        collate([])
