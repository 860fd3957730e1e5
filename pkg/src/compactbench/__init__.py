"""Context-compaction engine and benchmark harness for long-horizon agent flows."""

__version__ = "0.1.0"

from .backend import (
    BackendError,
    CompletionRequest,
    CompletionResponse,
    CostModel,
    HTTPBackend,
    LengthModel,
    MockBackend,
    mock_latency,
    schedule_wall,
)
from .conversation import ConversationState, Message, make_message
from .engine import (
    CompactionError,
    CompactionReport,
    EngineConfig,
    MergeError,
    compact_transcript,
    maybe_compact,
    merge,
)
from .harness import (
    BackendJudge,
    DatasetRecord,
    FlowEvent,
    MockJudge,
    Question,
    RunReport,
    load_corpus,
    load_dataset,
    run_flow,
)
from .metrics import (
    MetricError,
    RunMetrics,
    coefficient_of_variation,
    compaction_fraction,
    compaction_ms_per_token,
    e2e_throughput,
    matched_decode_pairs,
    mean_pairwise_cosine,
    tf_embed,
)
from .partitioning import Block, PartitionPlan, PlanError, partition, plan
from .prompting import (
    BuildError,
    PromptCatalog,
    PromptVariant,
    WorkerPrompt,
    build_sequential_prompt,
    build_worker_prompt,
    dispatch_set,
)
from .tokenization import TokenCounter, TokenizerError, count_tokens, take_tokens
