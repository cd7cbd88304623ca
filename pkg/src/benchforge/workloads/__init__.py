from .stats import percentile
from .batch import (
    RECORD_LEN,
    KEY_LEN,
    BatchResult,
    check_record_file,
    external_sort,
    gen_records,
    multiset_hash,
    preflight_storage,
    run_batch_experiment,
    sort_record_file,
    storage_requirement,
    verify_sorted,
    write_record_file,
)
from .streaming import (
    CampaignSet,
    GeneratorStats,
    LatencyRecord,
    StreamResult,
    WindowStore,
    compute_latencies,
    generate_campaigns,
    run_stream_experiment,
)

__all__ = [
    "percentile",
    "RECORD_LEN",
    "KEY_LEN",
    "BatchResult",
    "check_record_file",
    "external_sort",
    "gen_records",
    "multiset_hash",
    "preflight_storage",
    "run_batch_experiment",
    "sort_record_file",
    "storage_requirement",
    "verify_sorted",
    "write_record_file",
    "CampaignSet",
    "GeneratorStats",
    "LatencyRecord",
    "StreamResult",
    "WindowStore",
    "compute_latencies",
    "generate_campaigns",
    "run_stream_experiment",
]
