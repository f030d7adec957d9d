"""Knowledge-graph path-evidence pass/fail prediction toolkit."""

from ._core import (
    Dataset,
    Graph,
    Model,
    __version__,
    auc,
    build_dataset,
    classification_report,
    default_model_config,
    default_synth_config,
    default_train_config,
    explain_report,
    generate,
    null_signal_config,
    train,
)

__all__ = [
    "Dataset",
    "Graph",
    "Model",
    "__version__",
    "auc",
    "build_dataset",
    "classification_report",
    "default_model_config",
    "default_synth_config",
    "default_train_config",
    "explain_report",
    "generate",
    "null_signal_config",
    "train",
]
