import math

import numpy as np
import pytest

import hec

SMALL = {"train_count": 40, "test_count": 6, "extra_count": 4, "lm_count": 100, "seed": 3}


@pytest.fixture(scope="module")
def corpus():
    return hec.generate_corpus(SMALL)


def test_tokenizer_round_trip():
    tok = hec.Tokenizer("abc ")
    ids = tok.encode("ab ca")
    assert tok.decode(ids) == "ab ca"


def test_corpus_shapes(corpus):
    train = corpus.split("train")
    assert len(train) == 40
    assert train[0].features.ndim == 2
    assert train[0].features.shape[1] == 16
    assert len(corpus.split("matched")) == 6
    assert corpus.entities


def test_ctc_loss_uniform_two_frames():
    logits = np.zeros((2, 2))
    assert hec.ctc_loss(logits, [1]) == pytest.approx(-math.log(0.75), abs=1e-12)
    assert hec.ctc_prefix_score(np.log(np.full((2, 2), 0.5)), [], 1) == pytest.approx(math.log(0.75))


def test_infeasible_target_raises():
    with pytest.raises(hec.HecError, match="infeasible"):
        hec.ctc_loss(np.zeros((1, 3)), [1, 1])


def test_metrics():
    assert hec.edit_distance("a b c", "a x c")["substitutions"] == 1
    refs = {"u1": "ab cd", "u2": "ef"}
    assert hec.wer(refs, refs) == 0.0
    assert hec.werr(10.0, 9.0) == pytest.approx(10.0)
    assert hec.entity_recall({"u": "x name y"}, {"u": "x name"}, ["name"]) == 1.0


def test_two_pass_pipeline(corpus, tmp_path):
    first = hec.train_first_pass(corpus, {}, {"epochs": 1, "batch_size": 256})
    hyps = first.decode(corpus, "matched")
    assert set(hyps) == {u.id for u in corpus.split("matched")}
    nbest = first.nbest(corpus, "matched", corpus.entities, 2.0)
    assert all(entries for entries in nbest.values())

    aed = hec.train_second_pass(corpus, first, {"preset": "tiny"}, {"epochs": 1})
    assert aed.config["decoder_structure"] == "pca"
    utt = corpus.split("matched")[0]
    onebest = nbest[utt.id][0][0]
    out = hec.recognize(aed, utt.features, onebest, beam=3, max_len=12)
    assert len(out["tokens"]) <= 12
    assert math.isfinite(out["joint"]) or out["truncated"]

    path = tmp_path / "pca.ckpt"
    aed.save(path)
    again = hec.recognize(hec.AEDModel.load(path), utt.features, onebest, beam=3, max_len=12)
    assert again == out


def test_unknown_split_is_an_error(corpus):
    with pytest.raises(hec.HecError, match="invalid-argument"):
        corpus.split("nope")
