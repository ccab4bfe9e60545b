"""Prompt-form optimization for interactive promptable segmentation.

A simulator, trainer, and evaluation harness in which an agent learns which
prompt form (foreground point, background point, center point, bounding box)
a simulated expert should issue at each interaction step to maximize the
segmentation Dice gain, against a pluggable promptable-segmenter backend.
"""

from .grid import (
    Action,
    BinaryMask,
    BoxPrompt,
    Case,
    Grid2D,
    PointLabel,
    PointPrompt,
    ProbMap,
    Prompt,
    PromptSet,
    clip_box,
    threshold_mask,
)
from .metrics import (
    DistanceField,
    ErrorRegions,
    count_misunderstandings,
    dice,
    distance_transform,
    error_regions,
    farthest_interior_point,
)
from .clinician import ClinicianConfig, available_actions, realize_prompt
from .segmenter import BackendError, MockConfig, MockSegmenter, SegmenterBackend, mock_predict
from .environment import EnvConfig, EnvState, Environment, StepResult
from .tinynet import Adam, CheckpointError, QNet, TrainingDiverged, load_net, save_net
from .agent import ReplayBuffer, TrainConfig, Transition, desk_train_config, train
from .policies import (
    AlternatingPolicy,
    CheckpointPolicy,
    EvalReport,
    GreedyOraclePolicy,
    RandomPolicy,
    evaluate,
)
from .synthdata import (
    DatasetError,
    SynthConfig,
    generate_case,
    generate_dataset,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .protocol import ProtocolError, RemoteSegmenter, ShapeMismatchError, TransportError

__version__ = "0.1.0"

__all__ = [
    "Action", "BinaryMask", "BoxPrompt", "Case", "Grid2D", "PointLabel",
    "PointPrompt", "ProbMap", "Prompt", "PromptSet", "clip_box",
    "threshold_mask",
    "DistanceField", "ErrorRegions", "count_misunderstandings", "dice",
    "distance_transform", "error_regions", "farthest_interior_point",
    "ClinicianConfig", "available_actions", "realize_prompt",
    "BackendError", "MockConfig", "MockSegmenter", "SegmenterBackend",
    "mock_predict",
    "EnvConfig", "EnvState", "Environment", "StepResult",
    "Adam", "CheckpointError", "QNet", "TrainingDiverged", "load_net",
    "save_net",
    "ReplayBuffer", "TrainConfig", "Transition", "desk_train_config", "train",
    "AlternatingPolicy", "CheckpointPolicy", "EvalReport",
    "GreedyOraclePolicy", "RandomPolicy", "evaluate",
    "DatasetError", "SynthConfig", "generate_case", "generate_dataset",
    "read_dataset", "split_dataset", "write_dataset",
    "ProtocolError", "RemoteSegmenter", "ShapeMismatchError", "TransportError",
]
