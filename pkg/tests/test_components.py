import math

import numpy as np
import pytest

from morphparse.autodiff import Node, default_dtype, ops
from morphparse.batch import Batch, batches, lemma_grid, lemma_targets
from morphparse.conllu import Sentence, Token, parse_conllu
from morphparse.encoder import BiLSTMEncoder, reverse_index
from morphparse.extractors import CharCNN, FeatureConfigError, LocalFeatures, TokenVectors, WordVectors, check_features
from morphparse.lemmatiser import Lemmatiser, decode_lemma, lemma_loss
from morphparse.parser import Parser, arc_mask, head_loss
from morphparse.tagger import Tagger, TaggerOutput, decode_feats, tagger_loss
from morphparse.vocab import BOW, END, EOW, NA, PAD, UNK, Vocab, Vocabularies, available_targets, char_ids

TEXT = """1\tCats\tcat\tNOUN\tNNS\tNumber=Plur\t2\tnsubj\t_\t_
2\tsleep\tsleep\tVERB\tVBP\tMood=Ind|Tense=Pres\t0\troot\t_\t_

1\tA\ta\tDET\tDT\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\tNN\tNumber=Sing\t3\tnsubj\t_\t_
3\tsleeps\tsleep\tVERB\tVBZ\tMood=Ind|Tense=Pres\t0\troot\t_\t_

"""


@pytest.fixture
def tb():
    return parse_conllu(TEXT.splitlines(keepends=True))


@pytest.fixture
def vocabs(tb):
    return Vocabularies.build(tb, min_char_freq=1)


# ---------------------------------------------------------------- vocab


def test_vocab_specials_and_unknowns(vocabs):
    assert vocabs.chars.itos[:4] == [PAD, UNK, BOW, EOW]
    assert vocabs.lemma_chars.itos[:3] == [PAD, UNK, END]
    assert vocabs.upos.index("ADJ") == vocabs.upos.index(UNK)
    assert sorted(vocabs.feats) == ["Mood", "Number", "Tense"]
    assert vocabs.feats["Number"].itos == [NA, UNK, "Plur", "Sing"]
    assert char_ids(vocabs.chars, "ab")[0] == vocabs.chars.index(BOW)
    assert Vocabularies.from_dict(vocabs.to_dict()) == vocabs


def test_rare_characters_fall_back_to_unk(tb):
    v = Vocabularies.build(tb, min_char_freq=2)
    assert "C" not in v.chars and v.chars.index("C") == v.chars.index(UNK)


def test_available_targets_skip_empty_columns():
    t = parse_conllu(["1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n", "\n"])
    assert available_targets(t) == ["upos", "head", "deprel"]


def test_vocab_without_unk_raises_for_unknown():
    with pytest.raises(KeyError):
        Vocab(["a"], specials=(PAD,)).index("b")


# ---------------------------------------------------------------- batching


def test_batch_layout_round_trips(tb, vocabs):
    b = Batch(tb.sentences, vocabs, targets=["upos", "head"])
    assert b.mask.tolist() == [[True, True, False], [True, True, True]]
    flat = Node(np.arange(10.0).reshape(5, 2))
    padded = b.unflatten(flat)
    assert padded.value[0, 2].tolist() == [0.0, 0.0]
    np.testing.assert_array_equal(b.flatten(padded).value, flat.value)
    assert b.gold["head"].tolist() == [2, 0, 2, 3, 0]


def test_lemma_grid_and_targets(vocabs):
    grid = lemma_grid(vocabs.chars, "cats")
    assert len(grid) == 4 + 2 + 8
    t = lemma_targets(vocabs.lemma_chars, "cat", len(grid))
    assert t[:4] == [vocabs.lemma_chars.index(c) for c in "cat"] + [vocabs.lemma_chars.index(END)]
    assert set(t[4:]) == {vocabs.lemma_chars.index(PAD)}


def test_batches_cover_every_sentence_once():
    sents = [Sentence([Token(1, "x", head=0)] * (i % 5 + 1)) for i in range(23)]
    groups = batches(sents, 4, np.random.default_rng(0))
    assert sorted(i for g in groups for i in g) == list(range(23))
    assert max(len(g) for g in groups) <= 4


# ---------------------------------------------------------------- extractors


def test_feature_config_rejects_feature_that_is_a_target():
    with pytest.raises(FeatureConfigError):
        check_features(["char", "upos"], ["upos", "head"])
    with pytest.raises(FeatureConfigError):
        check_features(["char"], ["deprel"])
    with pytest.raises(FeatureConfigError):
        check_features(["bert"], [])
    assert check_features(["ufeats", "char", "word"], ["head"]) == ["char", "word", "ufeats"]


def test_char_cnn_output_ignores_batch_padding():
    with default_dtype(np.float64):
        rng = np.random.default_rng(0)
        cnn = CharCNN(rng, 20, 8, (6, 5, 4))
        vocab = Vocab(list("abcdefghij"), specials=(PAD, UNK, BOW, EOW))
        alone = cnn.embed_words(vocab, ["ab"]).value
        batched = cnn.embed_words(vocab, ["ab", "abcdefghij"]).value
        np.testing.assert_allclose(batched[0], alone[0], atol=1e-12)
        assert batched.shape == (2, 4)


def test_oov_word_vector_projects_to_tanh_of_bias(tmp_path, tb, vocabs):
    path = tmp_path / "vec.txt"
    path.write_text("2 3\ncats 1 2 3\nSleep 0.5 0.5 0.5\n", encoding="utf-8")
    vectors = WordVectors.load(path)
    assert vectors.lookup("Cats") == 0 and vectors.lookup("zzz") == -1
    with default_dtype(np.float64):
        local = LocalFeatures(np.random.default_rng(0), ["word"], len(vocabs.chars), external_dim=3)
        local.word_projection.bias.value[:] = np.linspace(-1, 1, 100)
        batch = Batch([tb[0]], vocabs, features=["word"], external=[vectors.vectors(["qqq", "sleep"])])
        out = local(batch).value[0]
    np.testing.assert_allclose(out[0], np.tanh(np.linspace(-1, 1, 100)))
    with pytest.raises(ValueError):
        vectors.matrix[0, 0] = 5.0


def test_feats_embedding_is_a_permutation_invariant_mean(vocabs):
    with default_dtype(np.float64):
        local = LocalFeatures(np.random.default_rng(1), ["ufeats"], len(vocabs.chars),
                              num_feat_symbols=len(vocabs.feat_symbols))
        table = local.feats_embedding.table.value
        ids = [vocabs.feat_symbols.index("Mood=Ind"), vocabs.feat_symbols.index("Tense=Pres")]
        out = local.embed_feats([ids, ids[::-1], []]).value
    np.testing.assert_allclose(out[0], table[ids].mean(axis=0))
    np.testing.assert_allclose(out[1], out[0])
    np.testing.assert_allclose(out[2], table[0])


def test_token_vectors_file(tmp_path):
    path = tmp_path / "tok.txt"
    path.write_text("0 1 1.0 2.0\n0 2 3.0 4.0\n1 1 5.0 6.0\n", encoding="utf-8")
    tv = TokenVectors.load(path)
    rows = tv.for_sentences([Sentence([Token(1, "a"), Token(2, "b")]), Sentence([Token(1, "c")])])
    assert rows[0].tolist() == [[1.0, 2.0], [3.0, 4.0]] and rows[1].tolist() == [[5.0, 6.0]]


# ---------------------------------------------------------------- encoder


def test_reverse_index():
    assert reverse_index(np.array([3, 1]), 4).tolist() == [[2, 1, 0, 3], [0, 1, 2, 3]]


def test_encoder_batched_equals_per_sentence():
    with default_dtype(np.float64):
        rng = np.random.default_rng(2)
        enc = BiLSTMEncoder(rng, 4, hidden=5, layers=2)
        x = rng.normal(size=(2, 6, 4))
        mask = np.array([[True] * 6, [True] * 3 + [False] * 3])
        both = enc(Node(x), mask).value
        short = enc(Node(x[1:2, :3]), mask[1:2, :3]).value
    np.testing.assert_allclose(both[1, :3], short[0], atol=1e-5)
    np.testing.assert_array_equal(both[1, 3:], 0.0)


def test_encoder_first_token_sees_the_last():
    with default_dtype(np.float64):
        rng = np.random.default_rng(3)
        enc = BiLSTMEncoder(rng, 3, hidden=4, layers=2)
        x = rng.normal(size=(1, 12, 3))
        mask = np.ones((1, 12), dtype=bool)
        base = enc(Node(x), mask).value
        x2 = x.copy()
        x2[0, -1] += 1.0
        moved = enc(Node(x2), mask).value
    assert np.abs(moved[0, 0] - base[0, 0]).max() > 1e-8


# ---------------------------------------------------------------- tagger


def test_uniform_tagger_loss_is_log_k():
    n, k = 6, 7
    logits = Node(np.zeros((n, k)))
    out = TaggerOutput({"upos": logits}, {"A": Node(np.zeros((n, 3))), "B": Node(np.zeros((n, 4)))})
    gold = {"upos": np.arange(n) % k, "ufeats": {"A": np.zeros(n, int), "B": np.ones(n, int)}}
    w = {"upos": np.ones(n), "ufeats": np.ones(n)}
    losses = tagger_loss(out, gold, w)
    assert float(losses["upos"].value) == pytest.approx(math.log(k))
    assert float(losses["ufeats"].value) == pytest.approx(math.log(3) + math.log(4))


def test_tagger_cross_entropy_by_hand():
    logits = np.array([[2.0, 0.0, -1.0], [0.5, 0.5, 3.0]])
    gold = np.array([0, 1])
    expected = np.mean([-(l[g] - np.log(np.exp(l).sum())) for l, g in zip(logits, gold)])
    out = TaggerOutput({"upos": Node(logits)}, {})
    loss = tagger_loss(out, {"upos": gold}, {"upos": np.ones(2)})["upos"]
    assert float(loss.value) == pytest.approx(expected)


def test_tagger_shapes_and_feature_decoding(vocabs):
    tagger = Tagger(np.random.default_rng(0), 10, 4, 5, {"Number": 4}, upos_hidden=64, hidden=128)
    out = tagger(Node(np.zeros((3, 10), dtype=np.float32)))
    assert out.logits["upos"].shape == (3, 4) and out.upos_hidden.shape == (3, 64)
    assert tagger.xpos.hidden_layer.out_dim == 128
    probs = {"Number": np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0]])}
    assert decode_feats(probs, vocabs.feats) == [{}, {"Number": "Sing"}]


# ---------------------------------------------------------------- lemmatiser


def test_lemma_decoding_stops_at_end(vocabs):
    v = vocabs.lemma_chars
    ids = [v.index("c"), v.index(UNK), v.index("a"), v.index("t"), v.index(END), v.index("s")]
    assert decode_lemma(ids, v) == "cat"


def test_lemmatiser_learns_identity_lemmas():
    """Overfit 200 random words whose lemma equals the form."""
    rng = np.random.default_rng(0)
    letters = list("abcdefghijklmnop")
    words = sorted({"".join(rng.choice(letters, size=rng.integers(2, 7))) for _ in range(260)})[:200]
    chars = Vocab(letters, specials=(PAD, UNK, BOW, EOW))
    lemma_chars = Vocab(letters, specials=(PAD, UNK, END))
    from morphparse.autodiff import Adam, backward
    from morphparse.extractors import pad_ids

    lem = Lemmatiser(rng, len(chars), len(lemma_chars), 4, char_dim=32, context_dim=4, filters=64)
    lem.assign_names()
    grids = [lemma_grid(chars, w) for w in words]
    grid, mask = pad_ids(grids, pad=chars.index(PAD))
    targets = np.array([lemma_targets(lemma_chars, w, grid.shape[1]) for w in words])
    weights = mask.astype(np.float32)
    ctx = Node(np.zeros((len(words), 4), dtype=np.float32))
    opt = Adam(lem.parameters(), lr=0.01)
    for _ in range(150):
        opt.zero_grad()
        backward(lemma_loss(lem(grid, mask, ctx, train=False), targets, weights))
        opt.step()
    best = lem(grid, mask, ctx).value.argmax(axis=-1)
    correct = sum(decode_lemma(best[k, : len(grids[k])], lemma_chars) == w for k, w in enumerate(words))
    assert correct / len(words) >= 0.99


# ---------------------------------------------------------------- parser


def test_arc_mask_blocks_self_loops_and_padding():
    m = arc_mask(np.array([2]), 3)[0]
    assert m.tolist() == [[False, True, False, True], [False, False, True, True], [False, False, False, True]]


def test_adjacency_rows_are_distributions():
    with default_dtype(np.float64):
        rng = np.random.default_rng(0)
        parser = Parser(rng, 6, num_labels=3, arc_dim=5, label_dim=4)
        out = parser(Node(rng.normal(size=(2, 4, 6))), np.array([4, 2]))
    adj = out.adjacency.value
    np.testing.assert_allclose(adj[0].sum(axis=1), 1.0)
    np.testing.assert_allclose(adj[1, :2].sum(axis=1), 1.0)
    assert adj[1, 0, 1] == 0.0 and adj[1, 0, 3] == 0.0
    assert out.label_logits.shape == (2, 4, 3) and out.deprel_hidden.shape == (2, 4, 4)


def test_single_token_gets_all_mass_on_root():
    parser = Parser(np.random.default_rng(0), 6, arc_dim=5)
    out = parser(Node(np.ones((1, 1, 6), dtype=np.float32)), np.array([1]))
    assert out.adjacency.value[0, 0].tolist() == [1.0, 0.0]


def test_uniform_two_token_head_loss_is_log_two():
    # each of two tokens can attach to the root or to the other token
    logits = Node(np.array([[0.0, -np.inf, 0.0], [0.0, 0.0, -np.inf]]))
    loss = head_loss(logits, np.array([2, 0]), np.ones(2))
    assert float(loss.value) == pytest.approx(math.log(2))
    assert np.isfinite(ops.softmax(logits).value).all()
