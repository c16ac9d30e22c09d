import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexcite import binfmt
from lexcite.embeddings import (
    HASH_MULT,
    HASH_OFFSET,
    EmbedConfig,
    EmbeddingError,
    EmbeddingTable,
    SkipgramTrainer,
    extract_subwords,
    load_table,
    mean_pool,
    sequence_matrix,
    subword_hash,
    subword_units,
    train_fasttext,
)

SMALL = EmbedConfig(dim=16, window=2, min_count=1, buckets=50_000, epochs=3, negatives=5, lr=0.05)


def _numpy_hash(unit: str) -> int:
    # independent route: uint64 arithmetic wraps modulo 2**64 on its own
    with np.errstate(over="ignore"):
        h = np.uint64(HASH_OFFSET)
        for b in unit.encode("utf-8"):
            h = h * np.uint64(HASH_MULT) + np.uint64(b)
    return int(h)


def test_subword_units_for_cite():
    assert subword_units("cite", 3, 3) == ["<ci", "cit", "ite", "te>", "<cite>"]


def test_subword_units_short_word_is_just_the_marked_word():
    assert subword_units("a") == ["<a>"]


def test_subword_count_formula():
    # a word of length n has n + 2 marked characters; grams of length g number n + 3 - g
    w = "judgment"
    n = len(w) + 2
    expected = sum(n - g + 1 for g in range(3, 7) if g < n) + 1
    assert len(subword_units(w)) == expected


def test_empty_word_is_rejected():
    with pytest.raises(EmbeddingError):
        subword_units("")


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=0, max_size=12))
def test_hash_matches_wrapping_uint64_route(unit):
    assert subword_hash(unit) == _numpy_hash(unit)


def test_hash_of_empty_string_is_offset():
    assert subword_hash("") == HASH_OFFSET


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcdefghij", min_size=1, max_size=10), st.integers(1, 1000))
def test_bucket_ids_in_range(word, buckets):
    ids = extract_subwords(word, 3, 6, buckets)
    assert all(0 <= b < buckets for b in ids)
    assert len(ids) == len(subword_units(word))


def _topic_corpus(seed=0, n_docs=300):
    """A and B always appear with topic-1 fillers, C with topic-2 fillers, never near A or B."""
    rng = np.random.default_rng(seed)
    t1 = ["plimk", "drosv", "quabe", "fenzo", "wirtu", "gloxa"]
    t2 = ["hyrmo", "tesvu", "caznq", "ublor", "jekti", "mopar"]
    docs = []
    for i in range(n_docs):
        if i % 3 == 2:
            docs.append(list(rng.choice(t2, 6)) + ["zeccor"] + list(rng.choice(t2, 6)))
        else:
            key = "avorth" if i % 3 == 0 else "bequil"
            docs.append(list(rng.choice(t1, 6)) + [key] + list(rng.choice(t1, 6)))
    return docs


def _cos(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def test_shared_context_words_end_up_closer():
    table = train_fasttext(_topic_corpus(), EmbedConfig(dim=24, window=3, min_count=1, buckets=50_000,
                                                        epochs=5), seed=3)
    a, b, c = (table.embed_token(w) for w in ("avorth", "bequil", "zeccor"))
    assert _cos(a, b) > _cos(a, c) + 0.2


def test_training_is_deterministic_given_seed():
    docs = _topic_corpus(n_docs=60)
    t1 = train_fasttext(docs, SMALL, seed=5)
    t2 = train_fasttext(docs, SMALL, seed=5)
    assert t1.vocab == t2.vocab
    assert np.array_equal(t1.word_vectors, t2.word_vectors)
    assert np.array_equal(t1.subword_vectors, t2.subword_vectors)
    t3 = train_fasttext(docs, SMALL, seed=6)
    assert not np.array_equal(t1.word_vectors, t3.word_vectors)


def test_fixed_batch_loss_decreases():
    tr = SkipgramTrainer(_topic_corpus(n_docs=120), SMALL, seed=1)
    batch = tr.micro_batch(256, seed=0)
    before = tr.batch_loss(batch)
    for _ in range(3):
        tr.run_epoch()
    assert tr.batch_loss(batch) < before


def test_min_count_and_empty_corpus():
    with pytest.raises(EmbeddingError):
        train_fasttext([[]], SMALL)
    with pytest.raises(EmbeddingError):
        train_fasttext([["once", "only"]], EmbedConfig(dim=4, min_count=2, buckets=100))


def test_oov_word_uses_subwords():
    table = train_fasttext(_topic_corpus(n_docs=90), SMALL, seed=0)
    assert "avorths" not in table
    oov = table.embed_token("avorths")
    assert np.linalg.norm(oov) > 0
    assert _cos(oov, table.embed_token("avorth")) > _cos(oov, table.embed_token("hyrmo"))


def test_token_with_only_unseen_buckets_is_zero():
    table = train_fasttext(_topic_corpus(n_docs=30), SMALL, seed=0)
    assert np.all(table.embed_token("一") == 0)


def test_mean_pool_and_sequence_matrix():
    table = train_fasttext(_topic_corpus(n_docs=30), SMALL, seed=0)
    toks = ["plimk", "drosv", "novel"]
    expected = np.mean([table.embed_token(t).astype(np.float64) for t in toks], axis=0)
    np.testing.assert_allclose(mean_pool(table, toks), expected, rtol=1e-6)
    with pytest.raises(EmbeddingError):
        mean_pool(table, [])
    sm = sequence_matrix(table, toks, L=5, max_kernel=2)
    assert sm.X.shape == (5, 16) and sm.length == 3
    assert np.all(sm.X[3:] == 0)
    assert sequence_matrix(table, toks * 3, L=4).length == 4
    with pytest.raises(EmbeddingError):
        sequence_matrix(table, toks, L=2, max_kernel=3)


def test_save_load_is_bit_identical(tmp_path):
    table = train_fasttext(_topic_corpus(n_docs=30), SMALL, seed=0)
    table.save(tmp_path / "t.lxem")
    back = load_table(tmp_path / "t.lxem")
    assert back.vocab == table.vocab and back.config == table.config
    assert np.array_equal(back.word_vectors, table.word_vectors)
    assert np.array_equal(back.subword_vectors, table.subword_vectors)
    assert np.array_equal(back.embed_token("avorthz"), table.embed_token("avorthz"))


def test_corrupt_files_are_rejected(tmp_path):
    table = train_fasttext(_topic_corpus(n_docs=30), SMALL, seed=0)
    p = tmp_path / "t.lxem"
    table.save(p)
    raw = p.read_bytes()
    (tmp_path / "short.lxem").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(binfmt.CorruptFileError):
        load_table(tmp_path / "short.lxem")
    (tmp_path / "ver.lxem").write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    with pytest.raises(binfmt.VersionError):
        load_table(tmp_path / "ver.lxem")
    (tmp_path / "magic.lxem").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(binfmt.FormatError):
        load_table(tmp_path / "magic.lxem")
    (tmp_path / "tail.lxem").write_bytes(raw + b"\0")
    with pytest.raises(binfmt.CorruptFileError):
        load_table(tmp_path / "tail.lxem")


def test_table_shape_validation():
    with pytest.raises(EmbeddingError):
        EmbeddingTable(["a"], np.zeros((2, 4)), [], np.zeros((0, 4)), EmbedConfig(dim=4))
