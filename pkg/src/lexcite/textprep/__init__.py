"""Text normalization: cleaning, tokenization, filtering, stemming, lemmatization."""

from .clean import (
    MODES,
    PrepConfig,
    TokenSequence,
    clean_text,
    default_boilerplate,
    default_stopwords,
    document_text,
    filter_tokens,
    normalize_token,
    preprocess_document,
    read_word_list,
    tokenize,
)
from .lemma import lemmatize
from .porter import porter_stem

__all__ = [
    "MODES", "PrepConfig", "TokenSequence", "clean_text", "default_boilerplate",
    "default_stopwords", "document_text", "filter_tokens", "lemmatize", "normalize_token",
    "porter_stem", "preprocess_document", "read_word_list", "tokenize",
]
