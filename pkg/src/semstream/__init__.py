"""Chunk-streaming transducer ASR with distilled semantic context embeddings.

A self-contained desk-scale stack: a numpy-backed tape autodiff kernel, a
chunk-masked conformer encoder, a per-chunk semantic context module distilled
from a sentence-embedding teacher, the transducer lattice loss with an
emission regularizer, a streaming inference engine equivalent to the offline
masked pass, a paraphrase-triplet dataset builder, and WER evaluation with
bootstrap confidence intervals.
"""

from .chunkmask import ChunkSpec, DctPolicy, build_mask, ms_to_frames, sample_dct_config
from .config import RunConfig, load_config
from .context import ContextConfig, ContextModule, attach_context
from .distill import FileTeacher, HashTeacher, LossWeights, mse_loss, total_loss
from .encoder import Encoder, EncoderConfig, downsampled_length, influence_matrix
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    NonFiniteLossError,
    ParameterError,
    SemstreamError,
    StateError,
    VocabularyError,
)
from .evaluate import BootstrapCI, EditCounts, align, bootstrap_ci, corpus_wer
from .model import ModelConfig, TransducerModel
from .pairs import (
    ParaphraseCandidate,
    TokenOverlapScorer,
    Triplet,
    Utterance,
    build_triplets,
    filter_candidates,
    select_paraphrase,
)
from .rng import CounterRng, fnv1a64
from .streaming import DecodingStream, open_stream
from .tensor import Tape, Tensor, backward
from .transducer import (
    Emission,
    Joint,
    Predictor,
    Vocabulary,
    fastemit,
    greedy_decode,
    rnnt_loss,
)

__version__ = "0.1.0"
