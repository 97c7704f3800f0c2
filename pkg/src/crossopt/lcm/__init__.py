"""Learned cost model: graph encoder, per-engine heads, training."""

from .io import ModelFileError, ModelVersionError, load_model, model_bytes, model_from_bytes, save_model
from .loss import P0, P1, batch_loss_from_preds, qerror_grad, qerror_loss
from .model import (
    SMALL_CONFIG,
    Batch,
    CostModel,
    ModelConfig,
    ModelError,
    NonFiniteError,
    SchemaMismatchError,
    compile_batch,
    expected_param_count,
    init_model,
)
from .train import (
    EpochRecord,
    TrainConfig,
    TrainingDiverged,
    add_engine_head,
    batch_loss,
    finetune_heads,
    loss_and_grads,
    save_history,
    split_half,
    train,
)

__all__ = [
    "Batch",
    "CostModel",
    "EpochRecord",
    "ModelConfig",
    "ModelError",
    "ModelFileError",
    "ModelVersionError",
    "NonFiniteError",
    "P0",
    "P1",
    "SMALL_CONFIG",
    "SchemaMismatchError",
    "TrainConfig",
    "TrainingDiverged",
    "add_engine_head",
    "batch_loss",
    "batch_loss_from_preds",
    "compile_batch",
    "expected_param_count",
    "finetune_heads",
    "init_model",
    "load_model",
    "loss_and_grads",
    "model_bytes",
    "model_from_bytes",
    "qerror_grad",
    "qerror_loss",
    "save_history",
    "save_model",
    "split_half",
    "train",
]
