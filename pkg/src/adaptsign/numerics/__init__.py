from .gradcheck import FD_STEP, GradCheckReport, grad_check
from .module import Module, ones_param, trunc_normal, zeros_param
from .optim import Adam, AdamState, adam_step, step_lr
from .tensor import (
    ELEMENTWISE_COST,
    FlopCounter,
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    count_flops,
    div,
    exp,
    from_op,
    gelu,
    getitem,
    is_grad_enabled,
    layer_norm,
    log,
    log_softmax,
    logsumexp,
    matmul,
    max_,
    mean,
    mul,
    neg,
    ones,
    power,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum_,
    swapaxes,
    take,
    tanh,
    transpose,
    zeros,
)
