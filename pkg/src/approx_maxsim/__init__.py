"""Two-stage multi-vector dense retrieval: IVFPQ candidate generation, approximate
candidate ranking, and exact MaxSim re-ranking."""

from .embed_store import MultiVectorCorpus, QuerySet, load_corpus, load_queries, normalize, save_corpus, save_queries
from .first_stage import CandidateRanking, Strategy, cut, rank
from .ivfpq import IvfPqIndex, build_index, load_index, save_index, search, search_many
from .rerank import PipelineConfig, ScoredRun, brute_force, maxsim_score, rerank, run_pipeline

__version__ = "0.1.0"
