"""Class-incremental protocol. Training entry points live in ``.training`` / ``.experiment``."""
from .data import LabeledImages, SyntheticSpec, read_dpfd, synthesize, write_dpfd
from .metrics import MetricsLog, forgetting_scores
from .scenario import CILScenario, RehearsalBuffer, TaskData, buffer_update, split_tasks
