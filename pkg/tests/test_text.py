import numpy as np
import pytest

from pcground.autodiff import Tensor, tsum
from pcground.gradcheck import grad_check
from pcground.scenes import prompt_corpus
from pcground.text import PAD_ID, TOKEN_LENGTH, UNK_ID, TextEncoder, Vocabulary, split_words


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.from_corpus(prompt_corpus())


def test_reserved_ids(vocab):
    assert vocab.itos[PAD_ID] == "<pad>" and vocab.itos[UNK_ID] == "<unk>"
    assert PAD_ID == 0 and UNK_ID == 1


def test_vocabulary_is_deterministic():
    assert Vocabulary.from_corpus(prompt_corpus()) == Vocabulary.from_corpus(prompt_corpus())


def test_empty_prompt_rejected(vocab):
    with pytest.raises(ValueError):
        vocab.tokenize("")
    with pytest.raises(ValueError):
        vocab.tokenize("   ")


@pytest.mark.parametrize("prompt", ["the car", "a car " * 40, "Pedestrian, approaching!"])
def test_length_always_thirty(vocab, prompt):
    assert vocab.tokenize(prompt).shape == (TOKEN_LENGTH,) == (30,)


def test_unknown_word_maps_to_unk(vocab):
    ids = vocab.tokenize("the zeppelin")
    assert ids[1] == UNK_ID
    assert (ids[2:] == PAD_ID).all()


def test_lowercase_and_punctuation_split(vocab):
    assert split_words("The CAR, about 12.5 meters!") == ["the", "car", "about", "12.5", "meters"]


def test_tokenize_idempotent_on_tokenized_text(vocab):
    p = "The approaching CAR, about 12 meters away (on the left)."
    once = " ".join(split_words(p))
    np.testing.assert_array_equal(vocab.tokenize(once), vocab.tokenize(p))


def test_save_load_round_trip(vocab, tmp_path):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "<pad>" and len(lines) == len(vocab)
    assert Vocabulary.load(path) == vocab


def test_all_pad_gives_identical_columns(vocab):
    enc = TextEncoder(vocab, 8, np.random.default_rng(0))
    f = enc.embed(np.zeros(30, dtype=np.int64)).data
    assert f.shape == (8, 30)
    np.testing.assert_array_equal(f, np.repeat(f[:, :1], 30, axis=1))
    np.testing.assert_array_equal(f[:, 0], enc.table.data[PAD_ID])


def test_permuting_tokens_permutes_columns(vocab):
    enc = TextEncoder(vocab, 8, np.random.default_rng(0))
    ids = vocab.tokenize("the moving car on the left")
    swapped = ids.copy()
    swapped[[1, 2]] = swapped[[2, 1]]
    a, b = enc.embed(ids).data, enc.embed(swapped).data
    np.testing.assert_array_equal(a[:, [2, 1]], b[:, [1, 2]])


def test_out_of_range_id_rejected(vocab):
    enc = TextEncoder(vocab, 4)
    with pytest.raises(ValueError):
        enc.embed(np.full(30, len(vocab)))


def test_embedding_is_injective_on_full_rank_table(vocab):
    enc = TextEncoder(vocab, len(vocab) + 2, np.random.default_rng(3))
    rows = enc.embed(np.arange(len(vocab))[None, :]).data[0].T
    assert len({r.tobytes() for r in rows}) == len(vocab)


def test_batched_embedding_shape(vocab):
    enc = TextEncoder(vocab, 8)
    assert enc.encode(["the car", "a cyclist"]).shape == (2, 8, 30)


def test_table_gradient(vocab):
    rng = np.random.default_rng(0)
    enc = TextEncoder(Vocabulary(["a", "b", "c"]), 3, rng)
    ids = np.array([2, 3, 0, 2, 4, 1])
    w = Tensor(rng.standard_normal((3, 6)))
    assert grad_check(lambda: tsum(enc.embed(ids) * w), enc.table) < 1e-6
