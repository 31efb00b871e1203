"""Cellular neural network simulation, template learning and powers-of-two quantization."""
__version__ = "0.1.0"

from .core import (  # noqa: F401
    DivergenceError,
    SymmetryPattern,
    TemplateSet,
    activation,
    expand_pattern,
    get_pattern,
    op_count,
    run,
    step,
)
from .pso import PsoConfig, TrainingTask, objective, retrain_bias, train, update_particle  # noqa: F401
from .quantizer import (  # noqa: F401
    QuantSet,
    bit_width,
    incremental_quantize,
    nn_distance,
    quant_values,
    quantize_value,
    select_batch,
)
