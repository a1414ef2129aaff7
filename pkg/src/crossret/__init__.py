"""Cross-modal image/text retrieval toolkit: global/local window image encoder,
alignment losses, similarity-matrix reweighting rerank and Recall@K evaluation."""

__version__ = "0.1.0"
