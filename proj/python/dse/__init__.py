"""Dialogue sentence embeddings trained on consecutive utterances."""

from ._dse import (
    Dialogue,
    DseError,
    EncoderConfig,
    LossConfig,
    Model,
    Speaker,
    TrainConfig,
    TrainPair,
    Turn,
    batch_loss,
    build_pairs,
    cluster_separation,
    eval_intent,
    gen_synthetic,
    load_corpus,
    load_pairs,
    ntxent,
    save_corpus,
    save_pairs,
    synthetic_intent_set,
    tokenize,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
