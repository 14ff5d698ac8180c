"""Graph structure generation: numeric core, model and decoding."""

from .decode import (MentionSpan, decode_ne, decode_structure, edge_probability, encode_gold,
                     gold_probability_table, spans_to_nodes)
from .model import GSGConfig, GSGModel, TrainingExample, train
from .numeric import (LABELS, NUM_LABELS, BiaffineParams, GcScoreTable, LabelTransferParams,
                      NeLabelTable, QuestionEncoding, biaffine_table, gc_loss, gsg_loss,
                      gumbel_sample, label_transfer, ne_loss, symmetry_loss, table_loss)

__all__ = [
    "LABELS", "NUM_LABELS", "BiaffineParams", "GcScoreTable", "GSGConfig", "GSGModel",
    "LabelTransferParams", "MentionSpan", "NeLabelTable", "QuestionEncoding", "TrainingExample",
    "biaffine_table", "decode_ne", "decode_structure", "edge_probability", "encode_gold",
    "gc_loss", "gold_probability_table", "gsg_loss", "gumbel_sample", "label_transfer",
    "ne_loss", "spans_to_nodes", "symmetry_loss", "table_loss", "train",
]
