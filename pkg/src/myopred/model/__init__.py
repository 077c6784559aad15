"""The multi-year myopia prediction network."""

from .checkpoint import CheckpointError, load_checkpoint, read_tensors, save_checkpoint
from .network import MMPN, Encoder, MMPNConfig
from .train import (
    Phase,
    PredictionResult,
    SampleArrays,
    TrainingDiverged,
    TrainSchedule,
    evaluate_loss,
    fit_standardization,
    predict,
    prepare,
    substream,
    to_model_input,
    train,
)
