from .cyclic import cyclic_sample, residual_mask
from .economic import (
    HashedJoinConfig,
    MultiplyShift,
    fk_economic_sample,
    hashed_join_sample,
    join_size,
    oversample_factor,
    superfluous_bound,
)
from .select import sample, sample_plan, select_method
from .simplify import simplify_join_graph, unmerge
from .stream import resolve_extensions, stream_sample

__all__ = [
    "HashedJoinConfig", "MultiplyShift", "cyclic_sample", "fk_economic_sample", "hashed_join_sample",
    "join_size", "oversample_factor", "residual_mask", "resolve_extensions", "sample", "sample_plan",
    "select_method", "simplify_join_graph", "stream_sample", "superfluous_bound", "unmerge",
]
