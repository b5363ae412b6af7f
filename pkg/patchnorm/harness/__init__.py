from .storage import (
    Checkpoint,
    atomic_write_bytes,
    atomic_write_text,
    write_tensor_file,
    read_tensor_file,
    save_checkpoint,
    load_checkpoint,
)
from .dataset import DataConfig, SyntheticDataset, generate_dataset, dataset_from_config, SHAPE_CLASSES
from .corruptions import (
    DomainSuite,
    corrupt,
    apply_corruption,
    severity_parameter,
    CORRUPTION_KINDS,
    SEVERITY_LEVELS,
    SEVERITY_PARAMS,
)
from .model import TinyCNN
from .trainer import TrainConfig, TrainResult, SGD, train
from .evaluator import ResultRow, ResultTable, AggregateRow, evaluate, evaluate_model
