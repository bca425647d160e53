"""Multilingual medical entity normalization toolkit."""

__version__ = "0.1.0"

from .candidates import NIL_ID, Candidate, CandidateList, ensemble_merge, load_candidates, dump_candidates
from .datamodel import ConceptRef, Dataset, Document, Mention, Passage, load_dataset, save_dataset
from .dense import HashNgramEmbedder, build_dense_index, query_dense
from .evaluation import evaluate, score_rankings
from .kb import KbConfig, KnowledgeBase, build_kb, load_kb, save_kb
from .pipeline import expand_abbreviations, filter_by_semantic_group, generate_candidates
from .projection import project_dataset
from .reranker import RerankerConfig, loss_and_grad, rerank, train_reranker
from .sparse import build_sparse_index, query_sparse

__all__ = [
    "NIL_ID", "Candidate", "CandidateList", "ConceptRef", "Dataset", "Document", "HashNgramEmbedder",
    "KbConfig", "KnowledgeBase", "Mention", "Passage", "RerankerConfig", "build_dense_index", "build_kb",
    "build_sparse_index", "dump_candidates", "ensemble_merge", "evaluate", "expand_abbreviations",
    "filter_by_semantic_group", "generate_candidates", "load_candidates", "load_dataset", "load_kb",
    "loss_and_grad", "project_dataset", "query_dense", "query_sparse", "rerank", "save_dataset", "save_kb",
    "score_rankings", "train_reranker",
]
