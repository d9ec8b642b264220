"""Class-balanced active learning for semantic segmentation."""

from ._core import (
    AlbalanceError,
    LabelingUnit,
    argmax_map,
    balanced_score,
    class_proportions,
    contrastive_loss,
    decode_png,
    edge_mask,
    encode_png,
    entropy_sum,
    evaluate,
    generate_pseudo,
    normalize_perf,
    partition,
    pixel_entropy,
    ratio_thresholds,
    read_probability_map,
    run_loop,
    synth_dataset,
    write_probability_map,
)

__all__ = [
    "AlbalanceError",
    "LabelingUnit",
    "argmax_map",
    "balanced_score",
    "class_proportions",
    "contrastive_loss",
    "decode_png",
    "edge_mask",
    "encode_png",
    "entropy_sum",
    "evaluate",
    "generate_pseudo",
    "normalize_perf",
    "partition",
    "pixel_entropy",
    "ratio_thresholds",
    "read_probability_map",
    "run_loop",
    "synth_dataset",
    "write_probability_map",
]
