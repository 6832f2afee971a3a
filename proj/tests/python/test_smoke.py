import math
import os
import subprocess

import numpy as np
import pytest

import sempos


@pytest.fixture(scope="module")
def corpus():
    return sempos.generate_corpus(6, refs=2, seed=3, frames=4, objects=2, dim=6)


def test_corpus_shapes_and_determinism(corpus):
    assert len(corpus) == 6
    s = corpus[0]
    assert s.spatial.shape == (4, 6)
    assert s.temporal.shape == (4, 6)
    assert s.objects.shape == (2, 6)
    again = sempos.generate_corpus(6, refs=2, seed=3, frames=4, objects=2, dim=6)
    assert np.array_equal(again[0].spatial, s.spatial)
    assert s.references[0].verb is not None
    assert sempos.pos_stats(corpus)["verb"] == 100.0


def test_corpus_file_round_trip(tmp_path, corpus):
    f, a = str(tmp_path / "c.semf"), str(tmp_path / "c.jsonl")
    sempos.save_corpus(corpus, f, a)
    back = sempos.load_corpus(f, a)
    assert [b.video_id for b in back] == [c.video_id for c in corpus]
    np.testing.assert_allclose(back[1].temporal, corpus[1].temporal, rtol=1e-6)


def test_masks():
    x = np.ones((10, 10))
    masked, count = sempos.mask_spatial(x, 0.3, 1)
    assert count == 30
    assert int((masked == 0).sum()) == 30
    masked, start, width = sempos.mask_temporal_chunk(np.ones((5, 20)), 0.15, 2)
    assert width == 3
    assert (masked[:, start:start + width] == 0).all()
    assert int((masked == 0).sum()) == 15


def test_metrics_identity_and_gs():
    cands = [["a", "man", "is", "running"], ["the", "dog", "sits", "down"]]
    refs = [[c] for c in cands]
    assert sempos.bleu4(cands, refs) == 1.0
    assert sempos.rouge_l(cands, refs) == 1.0
    assert sempos.cider(cands, refs) == 10.0
    assert 0.0 < sempos.meteor_lite(cands, refs) <= 1.0
    report = sempos.score(cands, refs)
    assert report["videos"] == 2
    vocab = ["a", "b", "c", "d"]
    assert abs(sempos.uniform_grammatical_score([["a", "b"], ["c"]], vocab) - 4.0) < 1e-9
    lm = sempos.NgramLM(cands, order=2, k=0.1)
    assert sempos.grammatical_score([cands[0]], lm) < sempos.grammatical_score(
        [list(reversed(cands[0]))], lm)
    with pytest.raises(sempos.SemposError):
        sempos.bleu4([], [])


def test_train_caption_save_load(tmp_path, corpus):
    cap = sempos.train(corpus, hidden=6, embedding=4, epochs=3, batch=2, lr=0.01,
                       val_fraction=0.0)
    losses = [e["l_all"] for e in cap.epoch_losses]
    assert len(losses) == 3 and all(math.isfinite(v) for v in losses)
    words = cap.caption(corpus[0])
    assert all(isinstance(w, str) for w in words)
    path = str(tmp_path / "m.semp")
    cap.save(path)
    back = sempos.load(path)
    assert back.caption(corpus[0]) == words
    assert back.parameter_count == cap.parameter_count
    metrics = cap.evaluate(corpus)
    assert metrics["videos"] == 6
    ablated = sempos.train(corpus, hidden=6, embedding=4, epochs=1, without=["glfb"],
                           val_fraction=0.0)
    assert ablated.parameter_count < cap.parameter_count
    with pytest.raises(sempos.SemposError):
        sempos.train(corpus, hidden=6, embedding=4, epochs=1, without=["bogus"])


def test_gradient_suite():
    results = dict(sempos.gradient_suite(seed=1, coords=2))
    assert "model_full" in results
    assert max(results.values()) < 1e-4


def test_cli_in_process_and_binary(tmp_path):
    code, out, err = sempos.run_cli(["frobnicate"])
    assert code == 2 and "usage error" in err
    f, a = str(tmp_path / "g.semf"), str(tmp_path / "g.jsonl")
    code, out, _ = sempos.run_cli(["gen-data", "--n", "3", "--features", f, "--annotations", a])
    assert code == 0 and "wrote 3 videos" in out
    exe = os.environ.get("SEMPOS_CLI")
    if exe:
        r = subprocess.run([exe, "pos-stats", "--annotations", a], capture_output=True, text=True)
        assert r.returncode == 0
        assert "captions=9" in r.stdout
