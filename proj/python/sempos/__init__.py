"""SEM-POS video captioning: synthetic data, model training, caption metrics."""

from ._sempos import (
    Captioner,
    NgramLM,
    SemposError,
    VideoSample,
    bleu4,
    cider,
    generate_corpus,
    gradient_suite,
    grammatical_score,
    load,
    load_corpus,
    mask_spatial,
    mask_temporal_chunk,
    meteor_lite,
    pos_stats,
    rouge_l,
    run_cli,
    save_corpus,
    score,
    train,
    uniform_grammatical_score,
)

__all__ = [name for name in dir() if not name.startswith("_")]
