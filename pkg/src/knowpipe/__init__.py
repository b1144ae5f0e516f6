"""Knowledge elicitation, filtering, and majority-vote reasoning pipeline."""

from .core import (
    AnswerSample,
    KnowledgeRecord,
    Question,
    RunConfig,
    index_questions,
    load_answer_samples,
    load_dataset,
    load_knowledge_records,
    persist_stage,
)
from .dataprep import TrainTriple, export_training_set, load_training_set, prepare_training_set
from .errors import (
    ConfigError,
    DatasetError,
    ElicitationError,
    EvalError,
    GatewayError,
    KnowpipeError,
    PrepError,
    ReasoningError,
    ScorerError,
)
from .gateway import ChatRequest, ChatResponse, Gateway, HttpChatBackend, ResponseCache, TokenLedger
from .metrics import EvalReport, accuracy, eps, evaluate_run, report
from .mockworld import MockChatBackend, MockWorldSpec, PlantedPolarityScorer, mock_complete
from .pool import assign_level, answer, build_pool, elicit_knowledge, parse_answer
from .reasoning import ReasoningOutcome, majority_vote, mcr, run_dataset, run_strategy
from .scoring import (
    ConstantScorer,
    OracleScorer,
    RemoteScorer,
    ScoredKnowledge,
    oracle_scorer,
    score_batch,
    score_pool,
    select_rationale,
)

__version__ = "0.1.0"
