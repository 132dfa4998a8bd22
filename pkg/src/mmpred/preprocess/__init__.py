"""Raw patients -> Static / Labs / Meds / Text modalities over the 6-month input window."""
from .censor import CENSOR_PATTERN, censor_text, split_sentences
from .dataset import MODALITIES, EncodedDataset, Preprocessor
from .encode import (
    UNKNOWN,
    CohortVocab,
    EncodingError,
    MultimodalSample,
    aggregate_icd10,
    age_group,
    build_vocab,
    encode_age,
    encode_patient,
    stream_matrix,
    token_stream,
)
from .tokenizer import MASK_ID, PAD_ID, SEP_ID, UNK_ID, WordPieceTokenizer

__all__ = [
    "CENSOR_PATTERN", "CohortVocab", "EncodedDataset", "EncodingError", "MASK_ID", "MODALITIES",
    "MultimodalSample", "PAD_ID", "Preprocessor", "SEP_ID", "UNK_ID", "UNKNOWN",
    "WordPieceTokenizer", "age_group", "aggregate_icd10", "build_vocab", "censor_text",
    "encode_age", "encode_patient", "split_sentences", "stream_matrix", "token_stream",
]
