"""Int8 CNN engine: container format, kernels, arena, interpreters."""

from .arena import Arena, ArenaPlan, plan_arena
from .interpreter import execute_planned, invoke, invoke_standalone, reference_invoke_float
from .kernels import (
    avg_pool2d,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    requantize,
    reshape,
    run_layer,
    softmax_int8,
)
from .model import (
    ARENA_CAPACITY_BYTES,
    FLASH_BUDGET_BYTES,
    Activation,
    LayerDesc,
    LayerKind,
    ModelGraph,
    Padding,
    QuantParams,
    QuantTensor,
    load_model,
    parse_model,
    save_model,
    serialize_model,
)

__all__ = [
    "ARENA_CAPACITY_BYTES",
    "FLASH_BUDGET_BYTES",
    "Activation",
    "Arena",
    "ArenaPlan",
    "LayerDesc",
    "LayerKind",
    "ModelGraph",
    "Padding",
    "QuantParams",
    "QuantTensor",
    "avg_pool2d",
    "conv2d",
    "depthwise_conv2d",
    "execute_planned",
    "fully_connected",
    "invoke",
    "invoke_standalone",
    "load_model",
    "parse_model",
    "plan_arena",
    "reference_invoke_float",
    "requantize",
    "reshape",
    "run_layer",
    "save_model",
    "serialize_model",
    "softmax_int8",
]
