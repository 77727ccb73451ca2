import random

import pytest

from morphparse.conllu import read_conllu
from morphparse.evaluator import EvaluationError, evaluate, f1, parse_key_value

FUNCTION = {"aux", "cop", "mark", "det", "clf", "case", "cc"}
NOT_CONTENT = FUNCTION | {"punct"}
UNIVERSAL = {"PronType", "NumType", "Poss", "Reflex", "Foreign", "Abbr", "Gender", "Animacy", "Number", "Case",
             "Definite", "Degree", "VerbForm", "Mood", "Tense", "Aspect", "Voice", "Evident", "Polarity", "Person",
             "Polite"}

# hand-computed on the five constructed sentences: 15 tokens, 11 gold and 12 system content words
HAND = {
    "UPOS": (14 / 15, 14 / 15), "Lemma": (14 / 15, 14 / 15), "UFeats": (14 / 15, 14 / 15),
    "UAS": (14 / 15, 14 / 15), "LAS": (12 / 15, 12 / 15),
    "CLAS": (10 / 12, 10 / 11), "MLAS": (8 / 12, 8 / 11), "BLEX": (9 / 12, 9 / 11),
}


@pytest.fixture
def gold(data_dir):
    return read_conllu(data_dir / "eval_gold.conllu")


@pytest.fixture
def system(data_dir):
    return read_conllu(data_dir / "eval_system.conllu")


@pytest.mark.parametrize("metric", sorted(HAND))
def test_constructed_treebank_matches_hand_counts(gold, system, metric):
    p, r = HAND[metric]
    s = evaluate(gold, system)[metric]
    assert s.precision == pytest.approx(100 * p, abs=0.01)
    assert s.recall == pytest.approx(100 * r, abs=0.01)
    assert s.f1 == pytest.approx(200 * p * r / (p + r), abs=0.01)


def test_f1_helper():
    p, r, f = f1(4, 5, 3)
    assert (p, r) == (75.0, 60.0) and f == pytest.approx(66.6667, abs=1e-4)
    assert f1(0, 0, 0) == (0.0, 0.0, 0.0)


def test_identical_files_score_100(gold):
    report = evaluate(gold, gold)
    assert all(report.f1(m) == 100.0 for m in ("UPOS", "UAS", "LAS", "CLAS", "MLAS", "BLEX"))


def test_missing_column_is_reported_as_na(gold):
    for s in gold:
        for t in s:
            t.xpos = "_"
    report = evaluate(gold, gold)
    assert report["XPOS"] is None
    assert "XPOS=NA" in report.as_key_value()
    assert parse_key_value(report.as_key_value())["XPOS"] is None


def test_mismatched_tokenisation_is_rejected(gold, system):
    system[0].tokens[0].form = "A"
    with pytest.raises(EvaluationError):
        evaluate(gold, system)
    with pytest.raises(EvaluationError):
        evaluate(gold, system.sentences[:-1])


def test_key_value_block_round_trips(gold, system):
    parsed = parse_key_value(evaluate(gold, system).as_key_value())
    assert parsed["LAS"] == pytest.approx(80.0)


# ---------------------------------------------------------------- independent oracle


def _univ(rel):
    return rel.split(":")[0]


def _ufeats(tok):
    return sorted((k, v) for k, v in tok.feats.items() if k in UNIVERSAL)


def _children_sig(sentence, idx):
    return sorted((t.id, _univ(t.deprel), t.upos, tuple(_ufeats(t))) for t in sentence
                  if t.head == idx and _univ(t.deprel) in FUNCTION)


def oracle(gold_tb, sys_tb):
    n = uas = las = 0
    gold_content = sys_content = clas = mlas = blex = 0
    for gs, ss in zip(gold_tb, sys_tb):
        for g, s in zip(gs, ss):
            n += 1
            head_ok = g.head == s.head
            label_ok = head_ok and _univ(g.deprel) == _univ(s.deprel)
            uas += head_ok
            las += label_ok
            g_content = _univ(g.deprel) not in NOT_CONTENT
            gold_content += g_content
            sys_content += _univ(s.deprel) not in NOT_CONTENT
            if g_content and label_ok:
                clas += 1
                morph = g.upos == s.upos and _ufeats(g) == _ufeats(s)
                kids = _children_sig(gs, g.id) == _children_sig(ss, s.id)
                mlas += morph and kids
                blex += g.lemma == "_" or g.lemma == s.lemma

    def pr(m):
        return 100 * m / sys_content if sys_content else 0.0, 100 * m / gold_content if gold_content else 0.0
    return {"UAS": (100 * uas / n,) * 2, "LAS": (100 * las / n,) * 2, "CLAS": pr(clas), "MLAS": pr(mlas),
            "BLEX": pr(blex)}


RELS = ["nsubj", "obj", "obl", "det", "case", "punct", "amod", "advmod", "cc", "conj", "root", "nsubj:pass"]


def corrupt(tb, rng):
    out = [s.copy() for s in tb]
    for s in out:
        n = len(s)
        for t in s:
            r = rng.random()
            if r < 0.2:
                t.head = rng.randrange(0, n + 1)
            elif r < 0.4:
                t.deprel = rng.choice(RELS)
            elif r < 0.5:
                t.upos = rng.choice(["NOUN", "VERB", "ADP"])
            elif r < 0.6:
                t.lemma = t.lemma + "x"
            elif r < 0.65:
                t.feats = {"Number": "Sing"}
    return out


def test_random_corruptions_agree_with_oracle_and_keep_orderings(synthetic_tb):
    rng = random.Random(0)
    gold = synthetic_tb.sentences[:12]
    for _ in range(150):
        pred = corrupt(gold, rng)
        report = evaluate(gold, pred)
        expected = oracle(gold, pred)
        for metric, (p, r) in expected.items():
            assert report[metric].precision == pytest.approx(p, abs=1e-9), metric
            assert report[metric].recall == pytest.approx(r, abs=1e-9), metric
        assert report.f1("LAS") <= report.f1("UAS")
        assert report.f1("MLAS") <= report.f1("CLAS") and report.f1("BLEX") <= report.f1("CLAS")
