"""Desk-scale toolkit for retrieval-augmented mask-prediction pipelines:
corpus ingestion, salient-span masking, BM25 search (in-process and HTTP),
tagged-trajectory synthesis with judge filtering, reward and advantage
math, curriculum ordering with SFT loss masks, and a QA eval harness."""

from .chat import (
    ChatClient,
    ChatClientError,
    HttpChatClient,
    RecordingChatClient,
    ScriptedChatClient,
    message_hash,
)
from .corpus import (
    CorpusError,
    Document,
    DocumentStore,
    TokenSeq,
    ingest_corpus,
    tokenize,
)
from .curriculum import (
    CurriculumError,
    CurriculumPlan,
    SFTRecord,
    curriculum_order,
    emit_sft_records,
    mixed_order,
)
from .evalharness import (
    EvalError,
    EvalReport,
    QAExample,
    evaluate_agent,
    load_qa,
    render_report,
)
from .masking import (
    FILL_INSTRUCTION,
    MASK_TOKEN,
    CorpusFrequencyScorer,
    HeuristicSpanExtractor,
    MaskedSample,
    MaskingError,
    SalientSpan,
    extract_salient_spans,
    reconstruct_paragraph,
    render_ramp_prompt,
    select_masks_ppl_greedy,
    select_masks_random,
)
from .retrieval import (
    InvertedIndex,
    RetrievalError,
    SearchHit,
    SearchTool,
    bm25_search,
    build_index,
    hits_to_json,
    load_index,
    save_index,
)
from .rewards import (
    DegenerateGroup,
    GroupAdvantage,
    PenaltyParams,
    RewardBreakdown,
    RewardError,
    clipped_objective_term,
    extract_final_answer,
    format_reward,
    group_advantages,
    hybrid_reward,
    judge_reward,
    penalized_recall,
    token_recall,
)
from .service import SearchService, serve_search
from .synthesis import (
    AgentConfig,
    AgentProtocolError,
    DistillationState,
    JudgeDecision,
    RoundResult,
    StepLimitExceeded,
    distill_single_model,
    judge_filter,
    self_evolve_round,
    synthesize_multiagent,
)
from .trajectory import (
    RL_TEMPLATE,
    LossMask,
    TaggedSegment,
    Trajectory,
    TrajectoryError,
    parse_trajectory,
    render_rl_template,
    retrieved_spans,
    serialize_trajectory,
)

__version__ = "0.1.0"
