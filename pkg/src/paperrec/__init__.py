"""Hybrid academic-article recommendation.

Content-based and citation-graph embeddings over a paper corpus, approximate
nearest-neighbour retrieval, hybrid fusion, corner-case detection, and a
hop-based citation-prediction evaluation harness. Everything runs at desk
scale (10^4 to 10^5 papers) on a single machine.
"""

__version__ = "0.1.0"

from .corpus import CorpusStore, CoverageStats, PaperRecord, coverage_stats, parse_records
from .citegraph import CitationGraph, build_graph
from .embedding import EmbeddingMatrix, load_embedding, save_embedding
from .gbembed import SpectralParams, embed_graph, factorize, propagate
from .cbfembed import HashEmbedderConfig, embed_corpus, hash_embed
from .annindex import AnnIndex, brute_force_knn, build_index, recall_at_k
from .recommend import MissingVectorError, RecommendationList, Recommender, fuse

__all__ = [
    "AnnIndex",
    "CitationGraph",
    "CorpusStore",
    "CoverageStats",
    "EmbeddingMatrix",
    "HashEmbedderConfig",
    "MissingVectorError",
    "PaperRecord",
    "RecommendationList",
    "Recommender",
    "SpectralParams",
    "brute_force_knn",
    "build_graph",
    "build_index",
    "coverage_stats",
    "embed_corpus",
    "embed_graph",
    "factorize",
    "fuse",
    "hash_embed",
    "load_embedding",
    "parse_records",
    "propagate",
    "recall_at_k",
    "save_embedding",
    "__version__",
]
