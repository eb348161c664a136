"""Small dense-tensor autodiff engine with an RMSprop optimizer."""
from .checkpoint import CheckpointError
from .gradcheck import finite_diff_check, relative_error
from .ops import (
    ShapeError,
    add,
    affine,
    as_tensor,
    bce_loss,
    bce_with_logits,
    concat,
    dot,
    embedding_lookup,
    exp_op,
    log_op,
    mean_op,
    mse_loss,
    mul,
    relu_op,
    reshape,
    segment_softmax,
    segment_sum,
    sigmoid_op,
    softmax,
    softmax_over_set,
    square,
    stack,
    sub,
    sum_op,
    take,
    tanh_op,
    unstack,
    weighted_sum,
)
from .optim import RMSprop, RmsPropState, rmsprop_step
from .tape import Parameter, RowGrad, Tape, TapeError, Tensor, backward, current_tape, no_record

__all__ = [
    "CheckpointError", "Parameter", "RMSprop", "RmsPropState", "RowGrad", "ShapeError", "Tape",
    "TapeError", "Tensor", "add", "affine", "as_tensor", "backward", "bce_loss", "bce_with_logits",
    "concat",
    "current_tape", "dot", "embedding_lookup", "exp_op", "finite_diff_check", "log_op", "mean_op",
    "mse_loss", "mul", "no_record", "relative_error", "relu_op", "reshape", "rmsprop_step", "segment_softmax",
    "segment_sum", "sigmoid_op", "softmax", "softmax_over_set", "square", "stack", "sub", "sum_op",
    "take", "tanh_op", "unstack", "weighted_sum",
]
